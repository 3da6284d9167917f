// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace geomgcl {

/// Dense row-major tensor of 64-bit reals. Rank 1 tensors behave as a single
/// row (1 x n) in matrix operations.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor(std::vector<std::size_t>{n}, fill); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::span<const double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// True when both tensors have the same rows x cols layout (rank-1 and 1 x n compare equal).
  bool same_layout(const Tensor& other) const { return rows() == other.rows() && cols() == other.cols(); }

  void fill(double v);
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Named parameter tensors iterated in lexicographic name order.
///
/// Names follow `<view>/<layer>/<t>/<role>[/<domain>]`, e.g. `3d/e2e/0/W_theta/2`.
class ParameterStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return tensors_.size(); }
  std::size_t parameter_count() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  /// Zero-filled store with the same names and shapes.
  ParameterStore zeros_like() const;
  /// this += scale * other, over the names of `other` (all must exist here).
  void axpy(double scale, const ParameterStore& other);

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  Map tensors_;
};

/// Uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)); `rows` is fan_out.
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

}  // namespace geomgcl
