// SPDX-License-Identifier: Apache-2.0
//
// Molecule datasets: one JSON object per line, conformers averaged at parse
// time, reproducible train/valid/test splits.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace geomgcl {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;
using Coords2 = std::vector<Vec2>;
using Coords3 = std::vector<Vec3>;

enum class TaskType { Classification, Regression };

TaskType parse_task_type(std::string_view s);
std::string_view to_string(TaskType t);

struct Bond {
  std::size_t u = 0;
  std::size_t v = 0;
  friend bool operator==(const Bond&, const Bond&) = default;
};

struct Molecule {
  std::string id;
  std::vector<std::vector<double>> atom_features;
  std::vector<Bond> bonds;
  std::vector<std::vector<double>> bond_features;
  Coords2 pos2d;
  /// Set when pos2d was absent and synthesised from the averaged 3D coordinates.
  bool pos2d_synthesized = false;
  /// Raw conformers as read; kept for provenance.
  std::vector<Coords3> conformers;
  /// Mean of `conformers`; every downstream geometry uses this.
  Coords3 pos3d;
  /// One entry per task; nullopt marks a missing label.
  std::vector<std::optional<double>> labels;

  std::size_t atom_count() const { return atom_features.size(); }

  friend bool operator==(const Molecule&, const Molecule&) = default;
};

struct Dataset {
  std::vector<Molecule> molecules;
  TaskType task_type = TaskType::Regression;
  std::size_t task_count = 0;
  std::size_t atom_feature_dim = 0;
  std::size_t bond_feature_dim = 0;

  std::size_t size() const { return molecules.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Elementwise mean of P >= 1 same-shaped conformers.
Coords3 average_conformers(const std::vector<Coords3>& conformers);

/// Parses one record; `line_no` is used in error messages only.
Molecule parse_record(std::string_view line, std::size_t line_no);

/// Validates a molecule in isolation (bond ranges, self/duplicate bonds,
/// coordinate shapes, row widths).
void validate_molecule(const Molecule& mol);

/// Reads a dataset file. Blank lines and lines starting with '#' are skipped.
/// Throws ParseError naming the line number or molecule id on any violation,
/// and "no molecules" for an empty file unless `allow_empty` is set.
Dataset parse_dataset(const std::filesystem::path& path, TaskType task_type, bool allow_empty = false);
Dataset parse_dataset_string(std::string_view text, TaskType task_type, bool allow_empty = false);

/// Writes a molecule back to a single JSON line (raw conformers, explicit pos2d
/// only when it was present in the input).
std::string serialize_record(const Molecule& mol);
std::string serialize_dataset(const Dataset& ds);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

/// Random split with sizes floor(train*N), floor(valid*N) and the remainder.
/// Deterministic in (N, ratios, seed).
Split split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);
inline Split split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  return split_dataset(ds.size(), ratios, seed);
}

}  // namespace geomgcl
