// SPDX-License-Identifier: Apache-2.0
//
// Directed-edge view graphs of a molecule.
//
// The 2D view holds both orientations of every covalent bond, measured on the
// depiction coordinates. The 3D view connects every ordered atom pair closer
// than the cutoff in the averaged conformer. For an edge u->v the neighbour
// edges are the incoming edges w->u with w != v; the angle of the pair is
// taken at u between (w - u) and (v - u).
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "geomgcl/molio.hpp"

namespace geomgcl {

enum class View { TwoD, ThreeD };

struct DirectedEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  /// Row of the molecule's bond_features; set for covalent (2D) edges only.
  std::optional<std::size_t> bond_index;
  friend bool operator==(const DirectedEdge&, const DirectedEdge&) = default;
};

struct EdgeNeighbor {
  /// Index of the neighbouring edge w->u.
  std::size_t edge = 0;
  /// Angle at the shared atom, in [0, pi].
  double angle = 0.0;
  /// Angle domain in [0, n); 3D view only (0 in 2D).
  std::size_t domain = 0;
};

struct ViewGraph {
  View view = View::TwoD;
  std::size_t node_count = 0;
  std::vector<DirectedEdge> edges;
  /// Length of each edge (l in 2D, r in 3D).
  std::vector<double> edge_distance;
  /// Distance domain of each edge at its destination node, in [0, m); 3D only.
  std::vector<std::size_t> dist_domain;
  /// For each edge u->v, the incoming edges w->u with w != v.
  std::vector<std::vector<EdgeNeighbor>> neighbors;
  /// For each node, its incoming edge indices in ascending order.
  std::vector<std::vector<std::size_t>> node_in_edges;

  std::size_t edge_count() const { return edges.size(); }
  std::size_t pair_count() const;
};

double pair_distance(std::span<const double> a, std::span<const double> b);
inline double pair_distance(const Vec3& a, const Vec3& b) { return pair_distance(std::span(a), std::span(b)); }
inline double pair_distance(const Vec2& a, const Vec2& b) { return pair_distance(std::span(a), std::span(b)); }

/// Angle at `shared` between (p - shared) and (q - shared); the cosine is
/// clamped to [-1, 1]. Throws GeometryError on a zero-length vector.
double angle_at(std::span<const double> shared, std::span<const double> p, std::span<const double> q);
inline double angle_at(const Vec3& s, const Vec3& p, const Vec3& q) {
  return angle_at(std::span(s), std::span(p), std::span(q));
}
inline double angle_at(const Vec2& s, const Vec2& p, const Vec2& q) {
  return angle_at(std::span(s), std::span(p), std::span(q));
}

/// min(floor(theta * n / pi), n - 1) for theta in [0, pi].
std::size_t assign_angle_domain(double theta, std::size_t n);
/// min(floor(r * m / cutoff), m - 1) for r in (0, cutoff).
std::size_t assign_distance_domain(double r, double cutoff, std::size_t m);

ViewGraph build_2d_graph(const Molecule& mol);
ViewGraph build_3d_graph(const Molecule& mol, double cutoff, std::size_t angle_domains, std::size_t dist_domains);
/// Same as above over explicit coordinates.
ViewGraph build_3d_graph(const Coords3& pos, double cutoff, std::size_t angle_domains, std::size_t dist_domains);

}  // namespace geomgcl
