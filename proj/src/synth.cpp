// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "geomgcl/error.hpp"

namespace geomgcl {

namespace {

constexpr double kStep = 1.5;
constexpr double kMinSeparation = 1.0;

template <typename V>
double dist(const V& a, const V& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

template <typename V>
bool far_enough(const std::vector<V>& pts, const V& p) {
  for (const auto& q : pts)
    if (dist(p, q) < kMinSeparation) return false;
  return true;
}

Coords3 walk3(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Coords3 pts{{0.0, 0.0, 0.0}};
    for (int tries = 0; pts.size() < n && tries < 1000; ++tries) {
      Vec3 d{g(rng), g(rng), g(rng)};
      const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      if (norm < 1e-6) continue;
      const Vec3& last = pts.back();
      Vec3 p{last[0] + kStep * d[0] / norm, last[1] + kStep * d[1] / norm, last[2] + kStep * d[2] / norm};
      if (far_enough(pts, p)) pts.push_back(p);
    }
    if (pts.size() == n) return pts;
  }
}

Coords2 walk2(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (;;) {
    Coords2 pts{{0.0, 0.0}};
    for (int tries = 0; pts.size() < n && tries < 1000; ++tries) {
      const double a = angle(rng);
      Vec2 p{pts.back()[0] + kStep * std::cos(a), pts.back()[1] + kStep * std::sin(a)};
      if (far_enough(pts, p)) pts.push_back(p);
    }
    if (pts.size() == n) return pts;
  }
}

}  // namespace

Dataset synth_dataset(const SynthOptions& o) {
  if (o.min_atoms < 2 || o.max_atoms < o.min_atoms) throw ConfigError("synth: need 2 <= min_atoms <= max_atoms");
  if (o.conformers == 0 || o.atom_feature_dim == 0) throw ConfigError("synth: conformers and atom features must be positive");
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<std::size_t> atoms(o.min_atoms, o.max_atoms);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.conformer_noise);

  Dataset ds;
  ds.task_type = o.task_type;
  ds.task_count = o.task_count;
  ds.atom_feature_dim = o.atom_feature_dim;
  ds.bond_feature_dim = o.bond_feature_dim;
  std::vector<double> scores;
  for (std::size_t k = 0; k < o.count; ++k) {
    Molecule m;
    m.id = "synth-" + std::to_string(k);
    const std::size_t n = atoms(rng);
    const Coords3 base = walk3(n, rng);
    for (std::size_t p = 0; p < o.conformers; ++p) {
      Coords3 c = base;
      if (p > 0)
        for (auto& v : c)
          for (double& x : v) x += noise(rng);
      m.conformers.push_back(std::move(c));
    }
    m.pos3d = average_conformers(m.conformers);
    m.pos2d = walk2(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> f(o.atom_feature_dim, 0.0);
      f[static_cast<std::size_t>(unit(rng) * static_cast<double>(o.atom_feature_dim)) % o.atom_feature_dim] = 1.0;
      m.atom_features.push_back(std::move(f));
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      m.bonds.push_back({i, i + 1});
      std::vector<double> f(o.bond_feature_dim);
      for (double& x : f) x = unit(rng) < 0.5 ? 0.0 : 1.0;
      m.bond_features.push_back(std::move(f));
    }
    // Radius of gyration of the averaged structure.
    Vec3 c{0, 0, 0};
    for (const auto& p : m.pos3d)
      for (int d = 0; d < 3; ++d) c[d] += p[d] / static_cast<double>(n);
    double rg = 0.0;
    for (const auto& p : m.pos3d) rg += dist(p, c) * dist(p, c) / static_cast<double>(n);
    scores.push_back(std::sqrt(rg));
    ds.molecules.push_back(std::move(m));
  }
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
  for (std::size_t k = 0; k < ds.molecules.size(); ++k) {
    auto& labels = ds.molecules[k].labels;
    for (std::size_t t = 0; t < o.task_count; ++t) {
      const double s = scores[k] * (1.0 + 0.25 * static_cast<double>(t));
      labels.emplace_back(o.task_type == TaskType::Classification ? (scores[k] >= median ? 1.0 : 0.0) : s);
    }
  }
  return ds;
}

}  // namespace geomgcl
