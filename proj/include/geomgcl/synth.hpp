// SPDX-License-Identifier: Apache-2.0
//
// Random small molecules for tests, demos and the `synth` command.
#pragma once

#include <cstddef>
#include <cstdint>

#include "geomgcl/molio.hpp"

namespace geomgcl {

struct SynthOptions {
  std::size_t count = 32;
  std::size_t min_atoms = 4;
  std::size_t max_atoms = 16;
  std::size_t atom_feature_dim = 8;
  std::size_t bond_feature_dim = 4;
  std::size_t conformers = 2;
  double conformer_noise = 0.05;
  TaskType task_type = TaskType::Regression;
  std::size_t task_count = 1;
  std::uint64_t seed = 0;
};

/// Chains built by a 3D random walk (step 1.5, atoms at least 1.0 apart) with
/// consecutive bonds, an independent 2D layout and geometry-derived labels.
Dataset synth_dataset(const SynthOptions& options);

}  // namespace geomgcl
