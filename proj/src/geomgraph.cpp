// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/geomgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geomgcl/error.hpp"

namespace geomgcl {

namespace {

template <std::size_t N>
void link_neighbors(ViewGraph& g, const std::vector<std::array<double, N>>& pos, std::size_t angle_domains) {
  g.node_in_edges.assign(g.node_count, {});
  for (std::size_t e = 0; e < g.edges.size(); ++e) g.node_in_edges[g.edges[e].dst].push_back(e);
  g.neighbors.assign(g.edges.size(), {});
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const std::size_t u = g.edges[e].src;
    const std::size_t v = g.edges[e].dst;
    for (std::size_t in : g.node_in_edges[u]) {
      const std::size_t w = g.edges[in].src;
      if (w == v) continue;
      EdgeNeighbor nb;
      nb.edge = in;
      nb.angle = angle_at(pos[u], pos[w], pos[v]);
      nb.domain = angle_domains > 0 ? assign_angle_domain(nb.angle, angle_domains) : 0;
      g.neighbors[e].push_back(nb);
    }
  }
}

}  // namespace

std::size_t ViewGraph::pair_count() const {
  std::size_t n = 0;
  for (const auto& nb : neighbors) n += nb.size();
  return n;
}

double pair_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw GeometryError("pair_distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double angle_at(std::span<const double> shared, std::span<const double> p, std::span<const double> q) {
  if (p.size() != shared.size() || q.size() != shared.size()) throw GeometryError("angle_at: dimension mismatch");
  double dot = 0.0, np = 0.0, nq = 0.0;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    const double a = p[i] - shared[i];
    const double b = q[i] - shared[i];
    dot += a * b;
    np += a * a;
    nq += b * b;
  }
  if (np == 0.0 || nq == 0.0) throw GeometryError("degenerate angle: zero-length vector");
  const double c = std::clamp(dot / std::sqrt(np * nq), -1.0, 1.0);
  return std::acos(c);
}

std::size_t assign_angle_domain(double theta, std::size_t n) {
  if (n == 0) throw GeometryError("assign_angle_domain: n must be positive");
  if (!(theta >= 0.0 && theta <= std::numbers::pi)) {
    throw GeometryError("assign_angle_domain: angle " + std::to_string(theta) + " outside [0, pi]");
  }
  const auto i = static_cast<std::size_t>(std::floor(theta * static_cast<double>(n) / std::numbers::pi));
  return std::min(i, n - 1);
}

std::size_t assign_distance_domain(double r, double cutoff, std::size_t m) {
  if (m == 0) throw GeometryError("assign_distance_domain: m must be positive");
  if (!(r > 0.0 && r < cutoff)) {
    throw GeometryError("assign_distance_domain: distance " + std::to_string(r) + " outside (0, " +
                        std::to_string(cutoff) + ")");
  }
  const auto i = static_cast<std::size_t>(std::floor(r * static_cast<double>(m) / cutoff));
  return std::min(i, m - 1);
}

ViewGraph build_2d_graph(const Molecule& mol) {
  ViewGraph g;
  g.view = View::TwoD;
  g.node_count = mol.atom_count();
  if (mol.pos2d.size() != g.node_count) throw GeometryError("build_2d_graph: pos2d size mismatch");
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    const auto [u, v] = mol.bonds[b];
    if (u >= g.node_count || v >= g.node_count) throw GeometryError("build_2d_graph: bond index out of range");
    const double d = pair_distance(mol.pos2d[u], mol.pos2d[v]);
    if (d == 0.0) {
      throw GeometryError("molecule '" + mol.id + "': bonded atoms " + std::to_string(u) + " and " +
                          std::to_string(v) + " coincide in pos2d");
    }
    g.edges.push_back({u, v, b});
    g.edges.push_back({v, u, b});
    g.edge_distance.push_back(d);
    g.edge_distance.push_back(d);
  }
  link_neighbors(g, mol.pos2d, 0);
  return g;
}

ViewGraph build_3d_graph(const Coords3& pos, double cutoff, std::size_t angle_domains, std::size_t dist_domains) {
  if (!(cutoff > 0.0)) throw GeometryError("build_3d_graph: cutoff must be positive");
  if (angle_domains == 0 || dist_domains == 0) throw GeometryError("build_3d_graph: domain counts must be positive");
  ViewGraph g;
  g.view = View::ThreeD;
  g.node_count = pos.size();
  for (std::size_t u = 0; u < pos.size(); ++u) {
    for (std::size_t v = 0; v < pos.size(); ++v) {
      if (u == v) continue;
      const double d = pair_distance(pos[u], pos[v]);
      if (d == 0.0) {
        throw GeometryError("build_3d_graph: atoms " + std::to_string(std::min(u, v)) + " and " +
                            std::to_string(std::max(u, v)) + " have identical coordinates");
      }
      if (d < cutoff) {
        g.edges.push_back({u, v, std::nullopt});
        g.edge_distance.push_back(d);
        g.dist_domain.push_back(assign_distance_domain(d, cutoff, dist_domains));
      }
    }
  }
  link_neighbors(g, pos, angle_domains);
  return g;
}

ViewGraph build_3d_graph(const Molecule& mol, double cutoff, std::size_t angle_domains, std::size_t dist_domains) {
  return build_3d_graph(mol.pos3d, cutoff, angle_domains, dist_domains);
}

}  // namespace geomgcl
