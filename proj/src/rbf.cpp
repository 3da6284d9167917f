// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/rbf.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "geomgcl/error.hpp"

namespace geomgcl::rbf {

namespace {

void check_domain(const RbfSpec& spec, double x) {
  if (!std::isfinite(x)) throw GeometryError("rbf: non-finite input");
  if (spec.kind == Kind::Angle) {
    if (x < 0.0 || x > std::numbers::pi) throw GeometryError("rbf: angle " + std::to_string(x) + " outside [0, pi]");
  } else if (x < 0.0) {
    throw GeometryError("rbf: negative distance " + std::to_string(x));
  }
}

}  // namespace

RbfSpec make_spec(Kind kind, std::size_t k, std::optional<double> d_max) {
  if (k < 2) throw Error("rbf: K must be at least 2");
  RbfSpec spec;
  spec.kind = kind;
  spec.centers.resize(k);
  double lo = 0.0;
  double hi = std::numbers::pi;
  const double kk = static_cast<double>(k);
  if (kind == Kind::Distance) {
    if (!d_max || !(*d_max > 0.0)) throw Error("rbf: distance spec requires d_max > 0");
    spec.d_max = *d_max;
    lo = std::exp(-*d_max);
    hi = 1.0;
    const double width = 2.0 / kk * (1.0 - lo);
    spec.beta = 1.0 / (width * width);
  } else {
    const double width = 2.0 * std::numbers::pi / kk;
    spec.beta = 1.0 / (width * width);
  }
  const double step = (hi - lo) / (kk - 1.0);
  for (std::size_t i = 0; i < k; ++i) spec.centers[i] = lo + step * static_cast<double>(i);
  spec.centers.front() = lo;
  spec.centers.back() = hi;
  return spec;
}

void expand_into(const RbfSpec& spec, double x, std::span<double> out) {
  check_domain(spec, x);
  const double t = spec.kind == Kind::Distance ? std::exp(-x) : x;
  for (std::size_t k = 0; k < spec.centers.size(); ++k) {
    const double d = t - spec.centers[k];
    out[k] = std::exp(-spec.beta * d * d);
  }
}

std::vector<double> expand(const RbfSpec& spec, double x) {
  std::vector<double> out(spec.size());
  expand_into(spec, x, out);
  return out;
}

std::vector<double> expand_derivative(const RbfSpec& spec, double x) {
  check_domain(spec, x);
  const bool dist = spec.kind == Kind::Distance;
  const double t = dist ? std::exp(-x) : x;
  const double dt = dist ? -t : 1.0;
  std::vector<double> out(spec.size());
  for (std::size_t k = 0; k < spec.centers.size(); ++k) {
    const double d = t - spec.centers[k];
    out[k] = std::exp(-spec.beta * d * d) * (-2.0 * spec.beta * d) * dt;
  }
  return out;
}

Tensor expand_all(const RbfSpec& spec, std::span<const double> xs) {
  Tensor out(xs.size(), spec.size());
  for (std::size_t i = 0; i < xs.size(); ++i) expand_into(spec, xs[i], out.row_span(i));
  return out;
}

}  // namespace geomgcl::rbf
