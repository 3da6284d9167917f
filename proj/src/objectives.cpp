// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "geomgcl/error.hpp"

namespace geomgcl {

using ad::Tape;
using ad::Var;

namespace {

std::string head(const char* view, const char* layer) { return std::string(view) + "/" + layer + "/0"; }

std::string theta_name(std::size_t t, std::size_t i) {
  return "3d/e2e/" + std::to_string(t) + "/W_theta/" + std::to_string(i);
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite input");
}

void check_task_batch(const Tensor& a, const Tensor& labels, const Tensor& mask, const char* op) {
  if (!a.same_layout(labels) || !a.same_layout(mask)) {
    throw ShapeError(std::string(op) + ": predictions " + a.shape_string() + ", labels " + labels.shape_string() +
                     ", mask " + mask.shape_string() + " differ");
  }
}

double present_count(const Tensor& mask) {
  double n = 0.0;
  for (double m : mask.data()) n += m != 0.0 ? 1.0 : 0.0;
  return n;
}

/// Labels with masked entries zeroed so arbitrary fill values never reach the loss.
Tensor clean_labels(const Tensor& labels, const Tensor& mask) {
  Tensor out(labels.rows(), labels.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = mask[i] != 0.0 ? labels[i] : 0.0;
  return out;
}

Tensor binary_mask(const Tensor& mask) {
  Tensor out(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] != 0.0 ? 1.0 : 0.0;
  return out;
}

}  // namespace

void init_projection_params(ParameterStore& params, const EncoderConfig& config, std::mt19937_64& rng) {
  for (const char* v : {"2d", "3d"}) {
    ad::init_mlp2(params, head(v, "proj"), config.hidden, config.hidden, config.projection_width(), rng);
  }
}

void init_prediction_params(ParameterStore& params, const EncoderConfig& config, std::size_t task_count,
                            std::mt19937_64& rng) {
  if (task_count == 0) throw ConfigError("prediction head needs at least one task");
  for (const char* v : {"2d", "3d"}) ad::init_mlp2(params, head(v, "pred"), config.hidden, config.hidden, config.hidden, rng);
  ad::init_mlp2(params, head("fused", "pred"), config.hidden, config.hidden, task_count, rng);
}

Var project(Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view, Var h) {
  return ad::mlp2(tape, params, head(view_prefix(view), "proj"), h, config.leaky_slope);
}

Var predict(Tape& tape, const ParameterStore& params, const EncoderConfig& config, Var h2d, Var h3d) {
  Var a = ad::mlp2(tape, params, head("2d", "pred"), h2d, config.leaky_slope);
  Var b = ad::mlp2(tape, params, head("3d", "pred"), h3d, config.leaky_slope);
  return ad::mlp2(tape, params, head("fused", "pred"), ad::add(a, b), config.leaky_slope);
}

Var contrastive_loss(Var z2d, Var z3d, double tau) {
  if (!(tau > 0.0)) throw Error("contrastive_loss: tau must be positive");
  if (!z2d.value().same_layout(z3d.value())) {
    throw ShapeError("contrastive_loss: " + z2d.value().shape_string() + " vs " + z3d.value().shape_string());
  }
  if (z2d.rows() == 0) throw Error("contrastive_loss: empty batch");
  check_finite(z2d.value(), "contrastive_loss");
  check_finite(z3d.value(), "contrastive_loss");
  Var sim = ad::scale(ad::matmul_nt(z2d, z3d), 1.0 / tau);
  Var row_terms = ad::sum(ad::logsumexp_rows(sim));
  Var col_terms = ad::sum(ad::logsumexp_rows(ad::transpose(sim)));
  Var positives = ad::sum(ad::diag(sim));
  return ad::sub(ad::add(row_terms, col_terms), ad::scale(positives, 2.0));
}

ContrastiveValue contrastive_loss(const Tensor& z2d, const Tensor& z3d, double tau) {
  Tape tape;
  Var loss = contrastive_loss(tape.constant_ref(z2d), tape.constant_ref(z3d), tau);
  ContrastiveValue out;
  out.total = loss.value()[0];
  out.per_molecule = out.total / static_cast<double>(z2d.rows());
  return out;
}

double retrieval_top1(const Tensor& z2d, const Tensor& z3d) {
  if (!z2d.same_layout(z3d) || z2d.rows() == 0) throw ShapeError("retrieval_top1: shape mismatch or empty");
  const std::size_t n = z2d.rows();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < z2d.cols(); ++c) s += z2d(i, c) * z3d(j, c);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    hits += best == i ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

Var spatial_regularizer(Tape& tape, const ParameterStore& params, std::size_t layers, std::size_t domains) {
  Var total = tape.constant(Tensor(1, 1));
  for (std::size_t t = 0; t < layers; ++t) {
    for (std::size_t i = 0; i + 1 < domains; ++i) {
      const std::string lo = theta_name(t, i), hi = theta_name(t, i + 1);
      const Tensor& a = params.at(lo);
      const Tensor& b = params.at(hi);
      if (!a.same_layout(b)) throw ShapeError("spatial_regularizer: " + lo + " and " + hi + " differ in shape");
      Var diff = ad::sub(tape.parameter(hi, b), tape.parameter(lo, a));
      total = ad::add(total, ad::sum(ad::mul(diff, diff)));
    }
  }
  return total;
}

double spatial_regularizer(const ParameterStore& params, std::size_t layers, std::size_t domains) {
  Tape tape;
  return spatial_regularizer(tape, params, layers, domains).value()[0];
}

Var masked_bce(Var logits, const Tensor& labels, const Tensor& mask) {
  check_task_batch(logits.value(), labels, mask, "masked_bce");
  const double count = present_count(mask);
  if (count == 0.0) throw Error("no labels");
  Tape& tape = logits.tape();
  Var y = tape.constant(clean_labels(labels, mask));
  Var m = tape.constant(binary_mask(mask));
  // softplus(x) - x*y == -[y log s(x) + (1-y) log(1-s(x))]
  Var per_entry = ad::sub(ad::softplus(logits), ad::mul(logits, y));
  return ad::scale(ad::sum(ad::mul(per_entry, m)), 1.0 / count);
}

Var masked_l1(Var predictions, const Tensor& labels, const Tensor& mask) {
  check_task_batch(predictions.value(), labels, mask, "masked_l1");
  const double count = present_count(mask);
  if (count == 0.0) throw Error("no labels");
  Tape& tape = predictions.tape();
  Var y = tape.constant(clean_labels(labels, mask));
  Var m = tape.constant(binary_mask(mask));
  Var err = ad::abs(ad::mul(ad::sub(predictions, y), m));
  return ad::scale(ad::sum(err), 1.0 / count);
}

double classification_loss(const TaskBatch& batch, double lambda, double reg) {
  Tape tape;
  return masked_bce(tape.constant_ref(batch.predictions), batch.labels, batch.mask).value()[0] + lambda * reg;
}

double regression_loss(const TaskBatch& batch, double lambda, double reg) {
  Tape tape;
  return masked_l1(tape.constant_ref(batch.predictions), batch.labels, batch.mask).value()[0] + lambda * reg;
}

double roc_auc_single(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of mid-ranks of the positives (Mann-Whitney U).
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0.0) {
        pos += 1.0;
        rank_sum += mid_rank;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) throw Error("roc_auc: need at least one positive and one negative label");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

AucReport roc_auc(const Tensor& scores, const Tensor& labels, const Tensor& mask) {
  check_task_batch(scores, labels, mask, "roc_auc");
  AucReport report;
  double total = 0.0;
  std::size_t scored = 0;
  for (std::size_t task = 0; task < scores.cols(); ++task) {
    std::vector<double> s, y;
    bool has_pos = false, has_neg = false;
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      if (mask(r, task) == 0.0) continue;
      s.push_back(scores(r, task));
      y.push_back(labels(r, task));
      (labels(r, task) != 0.0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) {
      report.per_task.emplace_back(std::nullopt);
      continue;
    }
    const double auc = roc_auc_single(s, y);
    report.per_task.emplace_back(auc);
    total += auc;
    ++scored;
  }
  if (scored > 0) report.mean = total / static_cast<double>(scored);
  return report;
}

double rmse(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("rmse: length mismatch");
  if (predictions.empty()) throw Error("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - labels[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

double masked_rmse(const Tensor& predictions, const Tensor& labels, const Tensor& mask) {
  check_task_batch(predictions, labels, mask, "masked_rmse");
  std::vector<double> p, y;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (mask[i] == 0.0) continue;
    p.push_back(predictions[i]);
    y.push_back(labels[i]);
  }
  return rmse(p, y);
}

}  // namespace geomgcl
