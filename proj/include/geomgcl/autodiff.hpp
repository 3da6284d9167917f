// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over 2-D tensors.
//
// A Tape records every operation applied to Vars created from it. Values are
// computed eagerly; calling backward() walks the record in reverse and
// accumulates gradients into every node that depends on a parameter.
// Reductions over index groups always visit members in ascending row order,
// so identical inputs give bit-identical outputs.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geomgcl/tensor.hpp"

namespace geomgcl::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant owned by the tape.
  Var constant(Tensor value);
  /// Constant referencing external storage; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Differentiable leaf bound to `name`. Repeated calls with the same name
  /// return the same node. `value` must outlive the tape.
  Var parameter(const std::string& name, const Tensor& value);
  /// Differentiable leaf without a name (used for gradient checks on inputs).
  Var input(Tensor value);

  /// Records a computed node. `backward` receives d(output)/d(node).
  Var record(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and back-propagates.
  void backward(Var out);
  /// Back-propagates several seeded outputs at once.
  void backward(std::span<const std::pair<Var, Tensor>> seeds);

  /// Gradient buffer for a node, zero-initialised on first access.
  Tensor& grad_buffer(std::size_t id);
  /// Gradient after backward(); zero tensor when nothing flowed into the node.
  Tensor grad(Var v) const;
  /// Gradients of all named parameters touched by this tape.
  ParameterStore parameter_grads() const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };

  void run_backward();

  // Deque so references returned by value() stay valid as the tape grows.
  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> parameters_;
};

// Linear algebra. Weights are stored (out x in); `linear` computes x W^T + b.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var w);
Var transpose(Var a);
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a * s + shift, elementwise.
Var affine(Var a, double s, double shift);
/// Adds a 1 x m row to every row of a.
Var add_row(Var a, Var row);
/// Multiplies every row r of a by the scalar col(r, 0).
Var mul_col(Var a, Var col);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var abs(Var a);
/// log(1 + exp(a)), computed stably.
Var softplus(Var a);
/// Elementwise maximum across same-shaped inputs; ties resolve to the first.
Var max_elementwise(std::span<const Var> parts);

// Structural.
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> index);
/// out[s] = sum of rows i with segment[i] == s; empty segments are zero.
Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t segments);
/// Elementwise maximum per segment; empty segments are zero.
Var segment_max(Var a, std::span<const std::size_t> segment, std::size_t segments);
/// Softmax of an n x 1 score column within each segment.
Var segment_softmax(Var scores, std::span<const std::size_t> segment, std::size_t segments);
/// Softmax across the columns of each row.
Var softmax_rows(Var a);
/// log(sum_j exp(a_ij)) per row, n x 1.
Var logsumexp_rows(Var a);
/// Diagonal of a square matrix as an n x 1 column.
Var diag(Var a);

// Reductions.
Var sum(Var a);
/// Column sums, 1 x m.
Var sum_rows(Var a);
Var mean(Var a);

// Composite layers built from the primitives above.

/// Two-layer perceptron: Linear -> leaky-rectifier -> Linear.
/// Expects `<prefix>/W1`, `b1`, `W2`, `b2` in the store.
Var mlp2(Tape& tape, const ParameterStore& params, const std::string& prefix, Var x, double slope);

/// Gated recurrent unit cell, rows are independent.
/// z = s(x Wz^T + h Uz^T + bz), r = s(x Wr^T + h Ur^T + br),
/// n = tanh(x Wn^T + bn + r * (h Un^T + bhn)), h' = (1 - z) * n + z * h.
Var gru_cell(Tape& tape, const ParameterStore& params, const std::string& prefix, Var h, Var x);

/// Adds the parameters used by mlp2 under `prefix`.
void init_mlp2(ParameterStore& params, const std::string& prefix, std::size_t in, std::size_t hidden,
               std::size_t out, std::mt19937_64& rng);
/// Adds the parameters used by gru_cell under `prefix` for hidden size `dim`.
void init_gru(ParameterStore& params, const std::string& prefix, std::size_t dim, std::mt19937_64& rng);

/// Scalar loss builder used by value_and_grad.
using LossFn = std::function<Var(Tape&, const ParameterStore&)>;

struct ValueAndGrad {
  double value = 0.0;
  ParameterStore grads;
};

/// Evaluates `fn` on a fresh tape and returns the loss with gradients for
/// every parameter in `params` (zero for parameters the loss does not touch).
ValueAndGrad value_and_grad(const ParameterStore& params, const LossFn& fn);

}  // namespace geomgcl::ad
