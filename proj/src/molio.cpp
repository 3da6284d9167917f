// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/molio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "geomgcl/error.hpp"
#include "json.hpp"

namespace geomgcl {

using nlohmann::json;

namespace {

std::string where(std::size_t line_no, const std::string& id) {
  std::string s = "line " + std::to_string(line_no);
  if (!id.empty()) s += " (molecule '" + id + "')";
  return s;
}

std::vector<std::vector<double>> read_matrix(const json& j, const char* key, std::size_t line_no,
                                             const std::string& id) {
  if (!j.is_array()) throw ParseError(where(line_no, id) + ": '" + key + "' must be an array of arrays");
  std::vector<std::vector<double>> out;
  out.reserve(j.size());
  for (const auto& row : j) {
    if (!row.is_array()) throw ParseError(where(line_no, id) + ": '" + key + "' rows must be arrays");
    std::vector<double> r;
    r.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number()) throw ParseError(where(line_no, id) + ": non-numeric entry in '" + key + "'");
      r.push_back(v.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

template <std::size_t N>
std::vector<std::array<double, N>> read_points(const json& j, const char* key, std::size_t line_no,
                                               const std::string& id) {
  auto rows = read_matrix(j, key, line_no, id);
  std::vector<std::array<double, N>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != N) {
      throw ParseError(where(line_no, id) + ": '" + key + "' points must have " + std::to_string(N) +
                       " coordinates");
    }
    std::array<double, N> p{};
    std::copy(r.begin(), r.end(), p.begin());
    out.push_back(p);
  }
  return out;
}

void check_finite(const std::vector<std::vector<double>>& m, const char* what, const std::string& id) {
  for (const auto& row : m)
    for (double v : row)
      if (!std::isfinite(v)) throw ParseError("molecule '" + id + "': non-finite value in " + what);
}

}  // namespace

TaskType parse_task_type(std::string_view s) {
  if (s == "cls" || s == "classification") return TaskType::Classification;
  if (s == "reg" || s == "regression") return TaskType::Regression;
  throw ConfigError("unknown task type '" + std::string(s) + "' (expected cls or reg)");
}

std::string_view to_string(TaskType t) { return t == TaskType::Classification ? "classification" : "regression"; }

Coords3 average_conformers(const std::vector<Coords3>& conformers) {
  if (conformers.empty()) throw GeometryError("average_conformers: need at least one conformer");
  const std::size_t n = conformers.front().size();
  Coords3 mean(n, Vec3{0.0, 0.0, 0.0});
  for (const auto& c : conformers) {
    if (c.size() != n) {
      throw GeometryError("average_conformers: conformer shape mismatch (" + std::to_string(c.size()) + " vs " +
                          std::to_string(n) + " atoms)");
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t k = 0; k < 3; ++k) mean[a][k] += c[a][k];
  }
  const double p = static_cast<double>(conformers.size());
  for (auto& a : mean)
    for (double& v : a) v /= p;
  return mean;
}

void validate_molecule(const Molecule& mol) {
  const std::string& id = mol.id;
  const std::size_t n = mol.atom_count();
  if (n == 0) throw ParseError("molecule '" + id + "': no atoms");
  const std::size_t fa = mol.atom_features.front().size();
  for (const auto& row : mol.atom_features) {
    if (row.size() != fa) throw ParseError("molecule '" + id + "': ragged atom_features");
  }
  check_finite(mol.atom_features, "atom_features", id);
  if (mol.bond_features.size() != mol.bonds.size()) {
    throw ParseError("molecule '" + id + "': bond_features has " + std::to_string(mol.bond_features.size()) +
                     " rows for " + std::to_string(mol.bonds.size()) + " bonds");
  }
  if (!mol.bond_features.empty()) {
    const std::size_t fb = mol.bond_features.front().size();
    for (const auto& row : mol.bond_features) {
      if (row.size() != fb) throw ParseError("molecule '" + id + "': ragged bond_features");
    }
  }
  check_finite(mol.bond_features, "bond_features", id);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Bond& b : mol.bonds) {
    if (b.u >= n || b.v >= n) {
      throw ParseError("molecule '" + id + "': bond index out of range (" + std::to_string(b.u) + ", " +
                       std::to_string(b.v) + ") with " + std::to_string(n) + " atoms");
    }
    if (b.u == b.v) throw ParseError("molecule '" + id + "': self-bond on atom " + std::to_string(b.u));
    if (!seen.insert(std::minmax(b.u, b.v)).second) {
      throw ParseError("molecule '" + id + "': duplicate bond (" + std::to_string(b.u) + ", " +
                       std::to_string(b.v) + ")");
    }
  }
  if (mol.conformers.empty()) throw ParseError("molecule '" + id + "': no conformers");
  for (const auto& c : mol.conformers) {
    if (c.size() != n) {
      throw ParseError("molecule '" + id + "': conformer has " + std::to_string(c.size()) + " atoms, expected " +
                       std::to_string(n));
    }
    for (const auto& p : c)
      for (double v : p)
        if (!std::isfinite(v)) throw ParseError("molecule '" + id + "': non-finite conformer coordinate");
  }
  if (mol.pos2d.size() != n) {
    throw ParseError("molecule '" + id + "': pos2d has " + std::to_string(mol.pos2d.size()) + " atoms, expected " +
                     std::to_string(n));
  }
}

Molecule parse_record(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where(line_no, "") + ": malformed record: " + e.what());
  }
  if (!j.is_object()) throw ParseError(where(line_no, "") + ": malformed record: expected a JSON object");
  static const std::set<std::string> kKeys = {"id",     "atom_features", "bonds", "bond_features",
                                              "pos2d", "conformers",    "labels"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ParseError(where(line_no, "") + ": malformed record: unknown key '" + key + "'");
  }
  Molecule mol;
  if (!j.contains("id") || !j["id"].is_string()) throw ParseError(where(line_no, "") + ": malformed record: missing 'id'");
  mol.id = j["id"].get<std::string>();
  for (const char* key : {"atom_features", "bonds", "conformers"}) {
    if (!j.contains(key)) throw ParseError(where(line_no, mol.id) + ": malformed record: missing '" + key + "'");
  }
  mol.atom_features = read_matrix(j["atom_features"], "atom_features", line_no, mol.id);
  if (!j["bonds"].is_array()) throw ParseError(where(line_no, mol.id) + ": 'bonds' must be an array");
  for (const auto& b : j["bonds"]) {
    if (!b.is_array() || b.size() != 2 || !b[0].is_number_integer() || !b[1].is_number_integer() ||
        b[0].get<long long>() < 0 || b[1].get<long long>() < 0) {
      throw ParseError(where(line_no, mol.id) + ": bonds must be [u, v] pairs of non-negative integers");
    }
    mol.bonds.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>()});
  }
  if (j.contains("bond_features")) {
    mol.bond_features = read_matrix(j["bond_features"], "bond_features", line_no, mol.id);
  }
  if (!j["conformers"].is_array()) throw ParseError(where(line_no, mol.id) + ": 'conformers' must be an array");
  for (const auto& c : j["conformers"]) mol.conformers.push_back(read_points<3>(c, "conformers", line_no, mol.id));
  if (j.contains("labels") && !j["labels"].is_null()) {
    if (!j["labels"].is_array()) throw ParseError(where(line_no, mol.id) + ": 'labels' must be an array");
    for (const auto& v : j["labels"]) {
      if (v.is_null()) {
        mol.labels.emplace_back(std::nullopt);
      } else if (v.is_number()) {
        mol.labels.emplace_back(v.get<double>());
      } else {
        throw ParseError(where(line_no, mol.id) + ": labels must be numbers or null");
      }
    }
  }

  try {
    if (mol.conformers.empty()) throw ParseError("molecule '" + mol.id + "': no conformers");
    for (const auto& c : mol.conformers) {
      if (c.size() != mol.atom_count()) {
        throw ParseError("molecule '" + mol.id + "': conformer has " + std::to_string(c.size()) +
                         " atoms, expected " + std::to_string(mol.atom_count()));
      }
    }
    mol.pos3d = average_conformers(mol.conformers);
    if (j.contains("pos2d") && !j["pos2d"].is_null()) {
      mol.pos2d = read_points<2>(j["pos2d"], "pos2d", line_no, mol.id);
    } else {
      mol.pos2d.reserve(mol.pos3d.size());
      for (const auto& p : mol.pos3d) mol.pos2d.push_back({p[0], p[1]});
      mol.pos2d_synthesized = true;
    }
    validate_molecule(mol);
  } catch (const Error& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
  return mol;
}

Dataset parse_dataset_string(std::string_view text, TaskType task_type, bool allow_empty) {
  Dataset ds;
  ds.task_type = task_type;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool have_labels = false;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;

    Molecule mol = parse_record(line, line_no);
    const std::string at = "line " + std::to_string(line_no) + " (molecule '" + mol.id + "')";
    if (ds.molecules.empty()) {
      ds.atom_feature_dim = mol.atom_features.front().size();
    } else if (mol.atom_features.front().size() != ds.atom_feature_dim) {
      throw ParseError(at + ": inconsistent atom feature dimension " + std::to_string(mol.atom_features.front().size()) +
                       " (expected " + std::to_string(ds.atom_feature_dim) + ")");
    }
    if (!mol.bond_features.empty()) {
      const std::size_t fb = mol.bond_features.front().size();
      if (ds.bond_feature_dim == 0 && fb != 0) {
        ds.bond_feature_dim = fb;
      } else if (fb != ds.bond_feature_dim) {
        throw ParseError(at + ": inconsistent bond feature dimension " + std::to_string(fb) + " (expected " +
                         std::to_string(ds.bond_feature_dim) + ")");
      }
    }
    if (!mol.labels.empty()) {
      if (!have_labels) {
        ds.task_count = mol.labels.size();
        have_labels = true;
      } else if (mol.labels.size() != ds.task_count) {
        throw ParseError(at + ": label arity mismatch (" + std::to_string(mol.labels.size()) + " vs " +
                         std::to_string(ds.task_count) + ")");
      }
      for (const auto& y : mol.labels) {
        if (!y) continue;
        if (!std::isfinite(*y)) throw ParseError(at + ": non-finite label");
        if (task_type == TaskType::Classification && *y != 0.0 && *y != 1.0) {
          throw ParseError(at + ": classification labels must be 0, 1 or null");
        }
      }
    }
    ds.molecules.push_back(std::move(mol));
  }
  if (ds.molecules.empty() && !allow_empty) throw ParseError("no molecules");
  return ds;
}

Dataset parse_dataset(const std::filesystem::path& path, TaskType task_type, bool allow_empty) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_string(buf.str(), task_type, allow_empty);
}

std::string serialize_record(const Molecule& mol) {
  json j;
  j["id"] = mol.id;
  j["atom_features"] = mol.atom_features;
  json bonds = json::array();
  for (const Bond& b : mol.bonds) bonds.push_back({b.u, b.v});
  j["bonds"] = bonds;
  j["bond_features"] = mol.bond_features;
  if (!mol.pos2d_synthesized) j["pos2d"] = mol.pos2d;
  j["conformers"] = mol.conformers;
  if (!mol.labels.empty()) {
    json labels = json::array();
    for (const auto& y : mol.labels) labels.push_back(y ? json(*y) : json(nullptr));
    j["labels"] = labels;
  }
  return j.dump();
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  for (const Molecule& m : ds.molecules) {
    out += serialize_record(m);
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset '" + path.string() + "'");
  out << serialize_dataset(ds);
}

Split split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  if (n == 0) throw Error("split_dataset: empty dataset");
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::fabs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw Error("split_dataset: ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  // The epsilon absorbs products like 0.7 * 10 = 6.999...
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n) + 1e-9));
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * static_cast<double>(n) + 1e-9));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), order.end());
  return s;
}

}  // namespace geomgcl
