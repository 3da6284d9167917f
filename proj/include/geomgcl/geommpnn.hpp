// SPDX-License-Identifier: Apache-2.0
//
// Dual-channel geometric message-passing encoder.
//
// Each view runs `layers` rounds of Node->Edge, Edge->Edge and Edge->Node
// message passing followed by `readout_steps` rounds of attentive pooling
// with a GRU update, producing one D-vector per molecule and view.
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "geomgcl/autodiff.hpp"
#include "geomgcl/geomgraph.hpp"
#include "geomgcl/molio.hpp"
#include "geomgcl/rbf.hpp"
#include "geomgcl/tensor.hpp"

namespace geomgcl {

struct EncoderConfig {
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t readout_steps = 2;
  std::size_t angle_domains = 4;
  std::size_t dist_domains = 4;
  std::size_t rbf_size = 64;
  /// 3D edge cutoff in Angstrom; also the upper end of the 3D distance basis.
  double cutoff = 5.0;
  /// Upper end of the 2D bond-length basis.
  double bond_length_max = 4.0;
  double leaky_slope = 0.01;
  /// Projection-head output width; 0 means `hidden`.
  std::size_t projection_dim = 0;

  std::size_t projection_width() const { return projection_dim == 0 ? hidden : projection_dim; }
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct FeatureDims {
  std::size_t atom = 0;
  std::size_t bond = 0;
  friend bool operator==(const FeatureDims&, const FeatureDims&) = default;
};

inline FeatureDims feature_dims(const Dataset& ds) { return {ds.atom_feature_dim, ds.bond_feature_dim}; }

/// 64-bit FNV-1a hash of the encoder configuration and feature widths.
std::uint64_t config_fingerprint(const EncoderConfig& config, const FeatureDims& dims);

/// Precomputed, parameter-free inputs for one view of one molecule.
struct ViewInputs {
  ViewGraph graph;
  /// Per-edge RBF of the edge length (l in 2D, r in 3D), |E| x K.
  Tensor dist_rbf;
  /// Per-(edge, neighbour) RBF of the angle (phi or theta), P x K.
  Tensor angle_rbf;
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  /// Bond row per edge (2D only).
  std::vector<std::size_t> edge_bond;
  /// Target edge of each (edge, neighbour) pair, ascending.
  std::vector<std::size_t> pair_edge;
  /// Pair indices grouped by angle domain (3D only).
  std::vector<std::vector<std::size_t>> domain_pairs;
  /// Edge indices grouped by distance domain (3D only).
  std::vector<std::vector<std::size_t>> domain_edges;
};

struct MoleculeInputs {
  std::string id;
  Tensor atom_features;  // |V| x F_a
  Tensor bond_features;  // |B| x F_b
  ViewInputs view2d;
  ViewInputs view3d;
};

/// Builds both view graphs and their RBF expansions.
MoleculeInputs prepare_molecule(const Molecule& mol, const EncoderConfig& config, const FeatureDims& dims);
std::vector<MoleculeInputs> prepare_dataset(const Dataset& ds, const EncoderConfig& config);

/// Parameter name prefix for a view: "2d" or "3d".
const char* view_prefix(View view);

/// Adds all encoder parameters for both views (glorot matrices, zero biases).
void init_encoder_params(ParameterStore& params, const EncoderConfig& config, const FeatureDims& dims,
                         std::mt19937_64& rng);

// Individual stages. `t` is the layer index in [0, layers).

struct InitialEmbeddings {
  ad::Var nodes;  // |V| x D
  /// Embedded bond features per directed edge (2D); RBF distances (3D).
  ad::Var edge_inputs;
};

InitialEmbeddings embed_inputs(ad::Tape& tape, const ParameterStore& params, View view, const MoleculeInputs& mol);

ad::Var node_to_edge(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view,
                     std::size_t t, ad::Var nodes, ad::Var edge_inputs, const ViewInputs& in);

ad::Var edge_to_edge_2d(ad::Tape& tape, const ParameterStore& params, std::size_t t, ad::Var edges,
                        const ViewInputs& in);

ad::Var edge_to_edge_3d(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, std::size_t t,
                        ad::Var edges, const ViewInputs& in);

ad::Var edge_to_node(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view,
                     std::size_t t, ad::Var edges, const ViewInputs& in);

struct ReadoutResult {
  ad::Var graph;  // 1 x D
  /// Attention weights (|V| x 1) of each readout step.
  std::vector<ad::Var> attention;
};

ReadoutResult attentive_readout(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view,
                                ad::Var nodes);

struct EncodeResult {
  ad::Var graph;  // 1 x D
  ad::Var nodes;  // |V| x D after the last message-passing layer
};

EncodeResult encode_view(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view,
                         const MoleculeInputs& mol);

/// Convenience: evaluates h for one view without keeping the tape.
Tensor encode_value(const ParameterStore& params, const EncoderConfig& config, View view, const MoleculeInputs& mol);

}  // namespace geomgcl
