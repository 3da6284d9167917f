// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "geomgcl/error.hpp"

namespace geomgcl::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ShapeError(std::string(op) + ": operands belong to different tapes");
  }
  return a.tape();
}

bool rg(Var v) { return v.tape().requires_grad(v.id()); }

template <typename F>
Var unary(Var a, F&& forward, std::function<double(double x, double y)> dydx) {
  Tape& t = a.tape();
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const std::size_t ia = a.id();
  // The backward pass needs the forward output; keep a copy alongside.
  Tensor y_copy = y;
  return t.record(std::move(y), rg(a), [ia, dydx, y_copy = std::move(y_copy)](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(ia);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dydx(xv[i], y_copy[i]);
  });
}

void check_index(std::span<const std::size_t> index, std::size_t limit, const char* op) {
  for (std::size_t i : index) {
    if (i >= limit) {
      throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range " + std::to_string(limit));
    }
  }
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = parameters_.find(name); it != parameters_.end()) return {this, it->second};
  Node n;
  n.ref = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  parameters_[name] = nodes_.size() - 1;
  return {this, nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Tensor& v = n.ref ? *n.ref : n.owned;
    n.grad = Tensor(v.rows(), v.cols(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  const Tensor& val = value(v.id());
  return Tensor(val.rows(), val.cols(), 0.0);
}

void Tape::backward(Var out) {
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward: differentiation target must be scalar, got " + out.value().shape_string());
  }
  grad_buffer(out.id())[0] += 1.0;
  run_backward();
}

void Tape::backward(std::span<const std::pair<Var, Tensor>> seeds) {
  for (const auto& [v, seed] : seeds) {
    Tensor& g = grad_buffer(v.id());
    if (!g.same_layout(seed)) shape_fail("backward seed", g, seed);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }
  run_backward();
}

void Tape::run_backward() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

ParameterStore Tape::parameter_grads() const {
  ParameterStore out;
  for (const auto& [name, id] : parameters_) {
    const Node& n = nodes_[id];
    const Tensor& v = value(id);
    out.set(name, n.has_grad ? Tensor(v.shape(), n.grad.data()) : Tensor(v.shape(), 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Tensor y(av.rows(), bv.cols());
  view(y).noalias() = view(av) * view(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), rg(a) || rg(b), [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) view(tp.grad_buffer(ia)).noalias() += view(g) * view(tp.value(ib)).transpose();
    if (tp.requires_grad(ib)) view(tp.grad_buffer(ib)).noalias() += view(tp.value(ia)).transpose() * view(g);
  });
}

Var matmul_nt(Var a, Var w) {
  Tape& t = same_tape(a, w, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& wv = w.value();
  if (av.cols() != wv.cols()) shape_fail("matmul_nt", av, wv);
  Tensor y(av.rows(), wv.rows());
  view(y).noalias() = view(av) * view(wv).transpose();
  const std::size_t ia = a.id(), iw = w.id();
  return t.record(std::move(y), rg(a) || rg(w), [ia, iw](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) view(tp.grad_buffer(ia)).noalias() += view(g) * view(tp.value(iw));
    if (tp.requires_grad(iw)) view(tp.grad_buffer(iw)).noalias() += view(g).transpose() * view(tp.value(ia));
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor y(av.cols(), av.rows());
  view(y) = view(av).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), rg(a), [ia](Tape& tp, const Tensor& g) {
    view(tp.grad_buffer(ia)) += view(g).transpose();
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul_nt(x, w), b); }
Var linear(Var x, Var w) { return matmul_nt(x, w); }

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_layout(bv)) shape_fail("add", av, bv);
  Tensor y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), rg(a) || rg(b), [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) view(tp.grad_buffer(ia)) += view(g);
    if (tp.requires_grad(ib)) view(tp.grad_buffer(ib)) += view(g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_layout(bv)) shape_fail("sub", av, bv);
  Tensor y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), rg(a) || rg(b), [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) view(tp.grad_buffer(ia)) += view(g);
    if (tp.requires_grad(ib)) view(tp.grad_buffer(ib)) -= view(g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_layout(bv)) shape_fail("mul", av, bv);
  Tensor y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), rg(a) || rg(b), [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      const Tensor& bv2 = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      const Tensor& av2 = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double s, double shift) {
  return unary(a, [s, shift](double x) { return x * s + shift; }, [s](double, double) { return s; });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_fail("add_row", av, rv);
  Tensor y = Tensor(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) y(r, c) = av(r, c) + rv[c];
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(y), rg(a) || rg(row), [ia, ir](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) view(tp.grad_buffer(ia)) += view(g);
    if (tp.requires_grad(ir)) {
      Tensor& gr = tp.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    }
  });
}

Var mul_col(Var a, Var col) {
  Tape& t = same_tape(a, col, "mul_col");
  const Tensor& av = a.value();
  const Tensor& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) shape_fail("mul_col", av, cv);
  Tensor y(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) y(r, c) = av(r, c) * cv[r];
  const std::size_t ia = a.id(), ic = col.id();
  return t.record(std::move(y), rg(a) || rg(col), [ia, ic](Tape& tp, const Tensor& g) {
    const Tensor& av2 = tp.value(ia);
    const Tensor& cv2 = tp.value(ic);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * cv2[r];
    }
    if (tp.requires_grad(ic)) {
      Tensor& gc = tp.grad_buffer(ic);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) acc += g(r, c) * av2(r, c);
        gc[r] += acc;
      }
    }
  });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var max_elementwise(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("max_elementwise: no inputs");
  Tape& t = parts[0].tape();
  const Tensor& first = parts[0].value();
  bool any_rg = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "max_elementwise");
    if (!p.value().same_layout(first)) shape_fail("max_elementwise", first, p.value());
    any_rg = any_rg || rg(p);
  }
  Tensor y = Tensor(first.rows(), first.cols());
  std::vector<std::size_t> argmax(first.size(), 0);
  for (std::size_t i = 0; i < first.size(); ++i) {
    double best = first[i];
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const double v = parts[k].value()[i];
      if (v > best) {
        best = v;
        argmax[i] = k;
      }
    }
    y[i] = best;
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return t.record(std::move(y), any_rg, [ids, argmax = std::move(argmax)](Tape& tp, const Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t id = ids[argmax[i]];
      if (tp.requires_grad(id)) tp.grad_buffer(id)[i] += g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = parts[0].tape();
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool any_rg = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    any_rg = any_rg || rg(p);
  }
  Tensor y(rows, cols);
  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (id, column offset)
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) y(r, offset + c) = v(r, c);
    slots.emplace_back(p.id(), offset);
    offset += v.cols();
  }
  return t.record(std::move(y), any_rg, [slots = std::move(slots)](Tape& tp, const Tensor& g) {
    for (const auto& [id, off] : slots) {
      if (!tp.requires_grad(id)) continue;
      Tensor& gp = tp.grad_buffer(id);
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, off + c);
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  const Tensor& av = a.value();
  check_index(index, av.rows(), "gather_rows");
  Tensor y(index.size(), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto src = av.row_span(index[r]);
    std::copy(src.begin(), src.end(), y.row_span(r).begin());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.tape().record(std::move(y), rg(a), [ia, idx = std::move(idx)](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto dst = ga.row_span(idx[r]);
      auto src = g.row_span(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t segments) {
  const Tensor& av = a.value();
  if (segment.size() != av.rows()) {
    throw ShapeError("segment_sum: " + std::to_string(segment.size()) + " segment ids for " +
                     std::to_string(av.rows()) + " rows");
  }
  check_index(segment, segments, "segment_sum");
  Tensor y(segments, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto dst = y.row_span(segment[r]);
    auto src = av.row_span(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return a.tape().record(std::move(y), rg(a), [ia, seg = std::move(seg)](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < seg.size(); ++r) {
      auto dst = ga.row_span(r);
      auto src = g.row_span(seg[r]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var segment_max(Var a, std::span<const std::size_t> segment, std::size_t segments) {
  const Tensor& av = a.value();
  if (segment.size() != av.rows()) throw ShapeError("segment_max: segment ids do not match rows");
  check_index(segment, segments, "segment_max");
  const std::size_t cols = av.cols();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> winner(segments * cols, kNone);
  Tensor y(segments, cols);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const std::size_t s = segment[r];
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t& w = winner[s * cols + c];
      if (w == kNone || av(r, c) > y(s, c)) {
        w = r;
        y(s, c) = av(r, c);
      }
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), rg(a), [ia, cols, winner = std::move(winner)](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < winner.size(); ++k) {
      if (winner[k] == kNone) continue;
      ga(winner[k], k % cols) += g[k];
    }
  });
}

Var segment_softmax(Var scores, std::span<const std::size_t> segment, std::size_t segments) {
  const Tensor& sv = scores.value();
  if (sv.cols() != 1 || segment.size() != sv.rows()) {
    throw ShapeError("segment_softmax: expected n x 1 scores with n segment ids, got " + sv.shape_string());
  }
  check_index(segment, segments, "segment_softmax");
  std::vector<double> peak(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < sv.rows(); ++r) peak[segment[r]] = std::max(peak[segment[r]], sv[r]);
  std::vector<double> total(segments, 0.0);
  Tensor y(sv.rows(), 1);
  for (std::size_t r = 0; r < sv.rows(); ++r) {
    y[r] = std::exp(sv[r] - peak[segment[r]]);
    total[segment[r]] += y[r];
  }
  for (std::size_t r = 0; r < sv.rows(); ++r) y[r] /= total[segment[r]];
  const std::size_t is = scores.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  Tensor y_copy = y;
  return scores.tape().record(
      std::move(y), rg(scores), [is, segments, seg = std::move(seg), y_copy = std::move(y_copy)](Tape& tp, const Tensor& g) {
        // d s_r = y_r (g_r - sum_{q in seg(r)} g_q y_q)
        std::vector<double> dot(segments, 0.0);
        for (std::size_t r = 0; r < seg.size(); ++r) dot[seg[r]] += g[r] * y_copy[r];
        Tensor& gs = tp.grad_buffer(is);
        for (std::size_t r = 0; r < seg.size(); ++r) gs[r] += y_copy[r] * (g[r] - dot[seg[r]]);
      });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor y(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto in = av.row_span(r);
    auto out = y.row_span(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) total += out[c] = std::exp(in[c] - peak);
    for (double& v : out) v /= total;
  }
  const std::size_t ia = a.id();
  Tensor y_copy = y;
  return a.tape().record(std::move(y), rg(a), [ia, y_copy = std::move(y_copy)](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y_copy(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += y_copy(r, c) * (g(r, c) - dot);
    }
  });
}

Var logsumexp_rows(Var a) {
  const Tensor& av = a.value();
  if (av.cols() == 0) throw ShapeError("logsumexp_rows: no columns");
  Tensor y(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto in = av.row_span(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - peak);
    y[r] = peak + std::log(total);
  }
  const std::size_t ia = a.id();
  Tensor y_copy = y;
  return a.tape().record(std::move(y), rg(a), [ia, y_copy = std::move(y_copy)](Tape& tp, const Tensor& g) {
    const Tensor& av2 = tp.value(ia);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < av2.rows(); ++r)
      for (std::size_t c = 0; c < av2.cols(); ++c) ga(r, c) += g[r] * std::exp(av2(r, c) - y_copy[r]);
  });
}

Var diag(Var a) {
  const Tensor& av = a.value();
  if (av.rows() != av.cols()) throw ShapeError("diag: matrix is not square " + av.shape_string());
  Tensor y(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) y[i] = av(i, i);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), rg(a), [ia](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) ga(i, i) += g[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
  const Tensor& av = a.value();
  Tensor y(1, 1);
  for (double v : av.data()) y[0] += v;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), rg(a), [ia](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (double& v : ga.data()) v += g[0];
  });
}

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  Tensor y(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) y[c] += av(r, c);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), rg(a), [ia](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Composite layers

Var mlp2(Tape& tape, const ParameterStore& params, const std::string& prefix, Var x, double slope) {
  auto p = [&](const char* role) { return tape.parameter(prefix + "/" + role, params.at(prefix + "/" + role)); };
  Var hidden = leaky_relu(linear(x, p("W1"), p("b1")), slope);
  return linear(hidden, p("W2"), p("b2"));
}

Var gru_cell(Tape& tape, const ParameterStore& params, const std::string& prefix, Var h, Var x) {
  auto p = [&](const char* role) { return tape.parameter(prefix + "/" + role, params.at(prefix + "/" + role)); };
  Var z = sigmoid(add(linear(x, p("W_z"), p("b_z")), linear(h, p("U_z"))));
  Var r = sigmoid(add(linear(x, p("W_r"), p("b_r")), linear(h, p("U_r"))));
  Var n = tanh(add(linear(x, p("W_n"), p("b_n")), mul(r, linear(h, p("U_n"), p("b_hn")))));
  return add(mul(affine(z, -1.0, 1.0), n), mul(z, h));
}

void init_mlp2(ParameterStore& params, const std::string& prefix, std::size_t in, std::size_t hidden,
               std::size_t out, std::mt19937_64& rng) {
  params.set(prefix + "/W1", glorot_uniform(hidden, in, rng));
  params.set(prefix + "/b1", Tensor::vector(hidden));
  params.set(prefix + "/W2", glorot_uniform(out, hidden, rng));
  params.set(prefix + "/b2", Tensor::vector(out));
}

void init_gru(ParameterStore& params, const std::string& prefix, std::size_t dim, std::mt19937_64& rng) {
  for (const char* gate : {"z", "r", "n"}) {
    params.set(prefix + "/W_" + gate, glorot_uniform(dim, dim, rng));
    params.set(prefix + "/U_" + gate, glorot_uniform(dim, dim, rng));
    params.set(prefix + "/b_" + gate, Tensor::vector(dim));
  }
  params.set(prefix + "/b_hn", Tensor::vector(dim));
}

ValueAndGrad value_and_grad(const ParameterStore& params, const LossFn& fn) {
  Tape tape;
  Var loss = fn(tape, params);
  tape.backward(loss);
  ValueAndGrad out;
  out.value = loss.value()[0];
  out.grads = params.zeros_like();
  for (auto& [name, g] : tape.parameter_grads()) out.grads.at(name) = g;
  return out;
}

}  // namespace geomgcl::ad
