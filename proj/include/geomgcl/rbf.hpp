// SPDX-License-Identifier: Apache-2.0
//
// Gaussian radial-basis expansion of distances and angles.
//
//   distance: phi_k(x) = exp(-beta * (exp(-x) - mu_k)^2), mu_k uniform over [exp(-d_max), 1],
//             beta = (2/K * (1 - exp(-d_max)))^-2
//   angle:    phi_k(x) = exp(-beta * (x - mu_k)^2),       mu_k uniform over [0, pi],
//             beta = (2*pi/K)^-2
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "geomgcl/tensor.hpp"

namespace geomgcl::rbf {

enum class Kind { Distance, Angle };

struct RbfSpec {
  Kind kind = Kind::Angle;
  std::vector<double> centers;
  double beta = 1.0;
  /// Upper end of the distance range; unused for angles.
  double d_max = 0.0;

  std::size_t size() const { return centers.size(); }
};

/// Builds a spec. `d_max` is required (and must be > 0) for distances.
RbfSpec make_spec(Kind kind, std::size_t k, std::optional<double> d_max = std::nullopt);

/// K-vector of Gaussian responses for one scalar.
std::vector<double> expand(const RbfSpec& spec, double x);
/// Writes the expansion of `x` into `out` (size K).
void expand_into(const RbfSpec& spec, double x, std::span<double> out);
/// d/dx of each component.
std::vector<double> expand_derivative(const RbfSpec& spec, double x);

/// Row i holds expand(spec, xs[i]).
Tensor expand_all(const RbfSpec& spec, std::span<const double> xs);

}  // namespace geomgcl::rbf
