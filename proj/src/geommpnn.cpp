// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/geommpnn.hpp"

#include <cstdio>
#include <string>

#include "geomgcl/error.hpp"

namespace geomgcl {

using ad::Tape;
using ad::Var;

namespace {

std::string name(View view, const char* layer, std::size_t t, const char* role) {
  return std::string(view_prefix(view)) + "/" + layer + "/" + std::to_string(t) + "/" + role;
}

std::string name(View view, const char* layer, std::size_t t, const char* role, std::size_t domain) {
  return name(view, layer, t, role) + "/" + std::to_string(domain);
}

Var param(Tape& tape, const ParameterStore& params, const std::string& n) { return tape.parameter(n, params.at(n)); }

Tensor to_tensor(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  Tensor t(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw ShapeError("feature width " + std::to_string(rows[r].size()) + " != " + std::to_string(cols));
    std::copy(rows[r].begin(), rows[r].end(), t.row_span(r).begin());
  }
  return t;
}

ViewInputs prepare_view(ViewGraph graph, const EncoderConfig& config) {
  ViewInputs in;
  const bool is3d = graph.view == View::ThreeD;
  const auto dist_spec = rbf::make_spec(rbf::Kind::Distance, config.rbf_size, is3d ? config.cutoff : config.bond_length_max);
  const auto angle_spec = rbf::make_spec(rbf::Kind::Angle, config.rbf_size);
  in.dist_rbf = rbf::expand_all(dist_spec, graph.edge_distance);
  std::vector<double> angles;
  angles.reserve(graph.pair_count());
  if (is3d) {
    in.domain_pairs.assign(config.angle_domains, {});
    in.domain_edges.assign(config.dist_domains, {});
  }
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    in.edge_src.push_back(graph.edges[e].src);
    in.edge_dst.push_back(graph.edges[e].dst);
    if (!is3d) in.edge_bond.push_back(graph.edges[e].bond_index.value());
    for (const EdgeNeighbor& nb : graph.neighbors[e]) {
      if (is3d) {
        if (nb.domain >= config.angle_domains) throw ShapeError("angle domain index out of range");
        in.domain_pairs[nb.domain].push_back(in.pair_edge.size());
      }
      in.pair_edge.push_back(e);
      angles.push_back(nb.angle);
    }
    if (is3d) {
      if (graph.dist_domain[e] >= config.dist_domains) throw ShapeError("distance domain index out of range");
      in.domain_edges[graph.dist_domain[e]].push_back(e);
    }
  }
  in.angle_rbf = rbf::expand_all(angle_spec, angles);
  in.graph = std::move(graph);
  return in;
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden == 0 || rbf_size < 2 || angle_domains == 0 || dist_domains == 0) {
    throw ConfigError("encoder config: hidden, angle_domains, dist_domains must be positive and rbf_size >= 2");
  }
  if (!(cutoff > 0.0) || !(bond_length_max > 0.0)) throw ConfigError("encoder config: cutoff and bond_length_max must be positive");
  if (!(leaky_slope >= 0.0)) throw ConfigError("encoder config: leaky_slope must be non-negative");
}

std::uint64_t config_fingerprint(const EncoderConfig& c, const FeatureDims& dims) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "hidden=%zu;layers=%zu;readout=%zu;n=%zu;m=%zu;K=%zu;cutoff=%a;lmax=%a;slope=%a;proj=%zu;fa=%zu;fb=%zu",
                c.hidden, c.layers, c.readout_steps, c.angle_domains, c.dist_domains, c.rbf_size, c.cutoff,
                c.bond_length_max, c.leaky_slope, c.projection_width(), dims.atom, dims.bond);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* view_prefix(View view) { return view == View::TwoD ? "2d" : "3d"; }

MoleculeInputs prepare_molecule(const Molecule& mol, const EncoderConfig& config, const FeatureDims& dims) {
  MoleculeInputs out;
  out.id = mol.id;
  if (!mol.atom_features.empty() && mol.atom_features.front().size() != dims.atom) {
    throw ShapeError("molecule '" + mol.id + "': atom feature width " + std::to_string(mol.atom_features.front().size()) +
                     " does not match " + std::to_string(dims.atom));
  }
  out.atom_features = to_tensor(mol.atom_features, dims.atom);
  out.bond_features = to_tensor(mol.bond_features, dims.bond);
  out.view2d = prepare_view(build_2d_graph(mol), config);
  out.view3d = prepare_view(build_3d_graph(mol, config.cutoff, config.angle_domains, config.dist_domains), config);
  return out;
}

std::vector<MoleculeInputs> prepare_dataset(const Dataset& ds, const EncoderConfig& config) {
  std::vector<MoleculeInputs> out;
  out.reserve(ds.size());
  for (const Molecule& m : ds.molecules) out.push_back(prepare_molecule(m, config, feature_dims(ds)));
  return out;
}

void init_encoder_params(ParameterStore& params, const EncoderConfig& c, const FeatureDims& dims,
                         std::mt19937_64& rng) {
  c.validate();
  const std::size_t d = c.hidden;
  const std::size_t k = c.rbf_size;
  for (View view : {View::TwoD, View::ThreeD}) {
    params.set(name(view, "embed", 0, "W_atom"), glorot_uniform(d, dims.atom, rng));
    params.set(name(view, "embed", 0, "b_atom"), Tensor::vector(d));
    if (view == View::TwoD) {
      params.set(name(view, "embed", 0, "W_bond"), glorot_uniform(d, dims.bond, rng));
      params.set(name(view, "embed", 0, "b_bond"), Tensor::vector(d));
    }
    for (std::size_t t = 0; t < c.layers; ++t) {
      const std::size_t edge_in = view == View::TwoD ? d : k;
      ad::init_mlp2(params, std::string(view_prefix(view)) + "/n2e/" + std::to_string(t), 2 * d + edge_in, d, d, rng);
      if (view == View::TwoD) {
        params.set(name(view, "e2e", t, "W_phi"), glorot_uniform(d, k, rng));
        params.set(name(view, "e2e", t, "W_e"), glorot_uniform(d, d, rng));
        params.set(name(view, "e2n", t, "W_l"), glorot_uniform(d, k, rng));
        params.set(name(view, "e2n", t, "W_a"), glorot_uniform(d, d, rng));
      } else {
        for (std::size_t i = 0; i < c.angle_domains; ++i) {
          params.set(name(view, "e2e", t, "W_theta", i), glorot_uniform(d, k, rng));
          params.set(name(view, "e2e", t, "W_e", i), glorot_uniform(d, d, rng));
        }
        params.set(name(view, "e2e", t, "W_merge"), glorot_uniform(d, c.angle_domains * d, rng));
        params.set(name(view, "e2e", t, "b_merge"), Tensor::vector(d));
        for (std::size_t i = 0; i < c.dist_domains; ++i) {
          params.set(name(view, "e2n", t, "W_r", i), glorot_uniform(d, k, rng));
          params.set(name(view, "e2n", t, "W_a", i), glorot_uniform(d, d, rng));
        }
        params.set(name(view, "e2n", t, "W_merge"), glorot_uniform(d, c.dist_domains * d, rng));
        params.set(name(view, "e2n", t, "b_merge"), Tensor::vector(d));
      }
    }
    for (std::size_t t = 0; t < c.readout_steps; ++t) {
      params.set(name(view, "readout", t, "W_align"), glorot_uniform(d, 2 * d, rng));
      params.set(name(view, "readout", t, "b_align"), Tensor::vector(d));
      params.set(name(view, "readout", t, "w_att"), glorot_uniform(1, d, rng));
      params.set(name(view, "readout", t, "W_g"), glorot_uniform(d, d, rng));
      ad::init_gru(params, std::string(view_prefix(view)) + "/readout/" + std::to_string(t), d, rng);
    }
  }
}

InitialEmbeddings embed_inputs(Tape& tape, const ParameterStore& params, View view, const MoleculeInputs& mol) {
  InitialEmbeddings out;
  Var x = tape.constant_ref(mol.atom_features);
  out.nodes = ad::linear(x, param(tape, params, name(view, "embed", 0, "W_atom")),
                         param(tape, params, name(view, "embed", 0, "b_atom")));
  if (view == View::TwoD) {
    Var bonds = tape.constant_ref(mol.bond_features);
    Var embedded = ad::linear(bonds, param(tape, params, name(view, "embed", 0, "W_bond")),
                              param(tape, params, name(view, "embed", 0, "b_bond")));
    out.edge_inputs = ad::gather_rows(embedded, mol.view2d.edge_bond);
  } else {
    out.edge_inputs = tape.constant_ref(mol.view3d.dist_rbf);
  }
  return out;
}

Var node_to_edge(Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view, std::size_t t,
                 Var nodes, Var edge_inputs, const ViewInputs& in) {
  if (edge_inputs.rows() != in.edge_src.size()) {
    throw ShapeError("node_to_edge: " + std::to_string(edge_inputs.rows()) + " edge inputs for " +
                     std::to_string(in.edge_src.size()) + " edges");
  }
  const Var parts[] = {ad::gather_rows(nodes, in.edge_src), ad::gather_rows(nodes, in.edge_dst), edge_inputs};
  return ad::mlp2(tape, params, std::string(view_prefix(view)) + "/n2e/" + std::to_string(t), ad::concat_cols(parts),
                  config.leaky_slope);
}

Var edge_to_edge_2d(Tape& tape, const ParameterStore& params, std::size_t t, Var edges, const ViewInputs& in) {
  Var angle = ad::linear(tape.constant_ref(in.angle_rbf), param(tape, params, name(View::TwoD, "e2e", t, "W_phi")));
  Var target = ad::linear(edges, param(tape, params, name(View::TwoD, "e2e", t, "W_e")));
  Var msg = ad::mul(angle, ad::gather_rows(target, in.pair_edge));
  return ad::segment_sum(msg, in.pair_edge, edges.rows());
}

Var edge_to_edge_3d(Tape& tape, const ParameterStore& params, const EncoderConfig& config, std::size_t t, Var edges,
                    const ViewInputs& in) {
  if (in.domain_pairs.size() != config.angle_domains) throw ShapeError("edge_to_edge_3d: angle domain count mismatch");
  const std::size_t n_edges = edges.rows();
  Var angle_all = tape.constant_ref(in.angle_rbf);
  std::vector<Var> local;
  local.reserve(config.angle_domains);
  for (std::size_t i = 0; i < config.angle_domains; ++i) {
    const auto& pairs = in.domain_pairs[i];
    std::vector<std::size_t> seg;
    seg.reserve(pairs.size());
    for (std::size_t p : pairs) seg.push_back(in.pair_edge[p]);
    Var angle = ad::linear(ad::gather_rows(angle_all, pairs), param(tape, params, name(View::ThreeD, "e2e", t, "W_theta", i)));
    Var target = ad::linear(edges, param(tape, params, name(View::ThreeD, "e2e", t, "W_e", i)));
    Var msg = ad::mul(angle, ad::gather_rows(target, seg));
    local.push_back(ad::segment_sum(msg, seg, n_edges));
  }
  Var pooled = ad::max_elementwise(local);
  std::vector<Var> slots;
  slots.reserve(local.size());
  for (Var e : local) slots.push_back(ad::mul(pooled, e));
  return ad::linear(ad::concat_cols(slots), param(tape, params, name(View::ThreeD, "e2e", t, "W_merge")),
                    param(tape, params, name(View::ThreeD, "e2e", t, "b_merge")));
}

Var edge_to_node(Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view, std::size_t t,
                 Var edges, const ViewInputs& in) {
  const std::size_t n_nodes = in.graph.node_count;
  Var dist_all = tape.constant_ref(in.dist_rbf);
  if (view == View::TwoD) {
    Var dist = ad::linear(dist_all, param(tape, params, name(view, "e2n", t, "W_l")));
    Var msg = ad::mul(dist, ad::linear(edges, param(tape, params, name(view, "e2n", t, "W_a"))));
    return ad::segment_sum(msg, in.edge_dst, n_nodes);
  }
  if (in.domain_edges.size() != config.dist_domains) throw ShapeError("edge_to_node: distance domain count mismatch");
  std::vector<Var> slots;
  slots.reserve(config.dist_domains);
  for (std::size_t i = 0; i < config.dist_domains; ++i) {
    const auto& ids = in.domain_edges[i];
    std::vector<std::size_t> dst;
    dst.reserve(ids.size());
    for (std::size_t e : ids) dst.push_back(in.edge_dst[e]);
    Var dist = ad::linear(ad::gather_rows(dist_all, ids), param(tape, params, name(view, "e2n", t, "W_r", i)));
    Var msg = ad::mul(dist, ad::linear(ad::gather_rows(edges, ids), param(tape, params, name(view, "e2n", t, "W_a", i))));
    slots.push_back(ad::segment_sum(msg, dst, n_nodes));
  }
  return ad::linear(ad::concat_cols(slots), param(tape, params, name(view, "e2n", t, "W_merge")),
                    param(tape, params, name(view, "e2n", t, "b_merge")));
}

ReadoutResult attentive_readout(Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view,
                                Var nodes) {
  const std::size_t n = nodes.rows();
  if (n == 0) throw ShapeError("attentive_readout: empty node set");
  const std::vector<std::size_t> broadcast(n, 0);
  ReadoutResult out;
  Var h = ad::sum_rows(nodes);
  for (std::size_t t = 0; t < config.readout_steps; ++t) {
    const Var pair[] = {ad::gather_rows(h, broadcast), nodes};
    Var align = ad::leaky_relu(ad::linear(ad::concat_cols(pair), param(tape, params, name(view, "readout", t, "W_align")),
                                          param(tape, params, name(view, "readout", t, "b_align"))),
                               config.leaky_slope);
    Var score = ad::linear(align, param(tape, params, name(view, "readout", t, "w_att")));
    Var alpha = ad::segment_softmax(score, broadcast, 1);
    Var message = ad::linear(nodes, param(tape, params, name(view, "readout", t, "W_g")));
    Var context = ad::sum_rows(ad::mul_col(message, alpha));
    h = ad::gru_cell(tape, params, std::string(view_prefix(view)) + "/readout/" + std::to_string(t), h, context);
    out.attention.push_back(alpha);
  }
  out.graph = h;
  return out;
}

EncodeResult encode_view(Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view,
                         const MoleculeInputs& mol) {
  const ViewInputs& in = view == View::TwoD ? mol.view2d : mol.view3d;
  InitialEmbeddings init = embed_inputs(tape, params, view, mol);
  Var nodes = init.nodes;
  for (std::size_t t = 0; t < config.layers; ++t) {
    Var edges = node_to_edge(tape, params, config, view, t, nodes, init.edge_inputs, in);
    edges = view == View::TwoD ? edge_to_edge_2d(tape, params, t, edges, in)
                               : edge_to_edge_3d(tape, params, config, t, edges, in);
    nodes = edge_to_node(tape, params, config, view, t, edges, in);
  }
  EncodeResult out;
  out.nodes = nodes;
  out.graph = attentive_readout(tape, params, config, view, nodes).graph;
  return out;
}

Tensor encode_value(const ParameterStore& params, const EncoderConfig& config, View view, const MoleculeInputs& mol) {
  Tape tape;
  return encode_view(tape, params, config, view, mol).graph.value();
}

}  // namespace geomgcl
