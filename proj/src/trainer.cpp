// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/trainer.hpp"
#include "geomgcl/checkpoint.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "geomgcl/error.hpp"
#include "geomgcl/objectives.hpp"

namespace geomgcl {

using ad::Tape;
using ad::Var;

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first error.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

using ItemForward = std::function<std::vector<Var>(Tape&, std::size_t item)>;
using HeadLoss = std::function<Var(Tape&, std::span<const Var> stacked)>;

struct StackedGrad {
  double loss = 0.0;
  ParameterStore grads;
};

/// Evaluates every item on its own tape, stacks the per-item row outputs,
/// applies `head` to the stacks and back-propagates through all tapes.
/// Per-item gradients are summed in item order, so the result does not
/// depend on the thread count.
StackedGrad stacked_value_and_grad(const ParameterStore& params, std::span<const std::size_t> items,
                                   std::size_t outputs, const ItemForward& forward, const HeadLoss& head,
                                   std::size_t threads) {
  const std::size_t n = items.size();
  std::vector<std::unique_ptr<Tape>> tapes(n);
  std::vector<std::vector<Var>> outs(n);
  parallel_for(n, threads, [&](std::size_t k) {
    tapes[k] = std::make_unique<Tape>();
    outs[k] = forward(*tapes[k], items[k]);
    if (outs[k].size() != outputs) throw ShapeError("stacked_value_and_grad: wrong output count");
  });

  Tape head_tape;
  std::vector<Var> stacked;
  for (std::size_t o = 0; o < outputs; ++o) {
    const std::size_t width = outs[0][o].cols();
    Tensor s(n, width);
    for (std::size_t k = 0; k < n; ++k) {
      const Tensor& row = outs[k][o].value();
      if (row.rows() != 1 || row.cols() != width) throw ShapeError("stacked_value_and_grad: ragged outputs");
      std::copy(row.data().begin(), row.data().end(), s.row_span(k).begin());
    }
    stacked.push_back(head_tape.input(std::move(s)));
  }
  Var loss = head(head_tape, stacked);
  head_tape.backward(loss);
  std::vector<Tensor> seeds;
  for (Var s : stacked) seeds.push_back(head_tape.grad(s));

  std::vector<ParameterStore> item_grads(n);
  parallel_for(n, threads, [&](std::size_t k) {
    std::vector<std::pair<Var, Tensor>> seed;
    for (std::size_t o = 0; o < outputs; ++o) seed.emplace_back(outs[k][o], Tensor::row(seeds[o].row_span(k)));
    tapes[k]->backward(seed);
    item_grads[k] = tapes[k]->parameter_grads();
    tapes[k].reset();
  });

  StackedGrad out;
  out.loss = loss.value()[0];
  out.grads = params.zeros_like();
  for (const auto& g : item_grads) out.grads.axpy(1.0, g);
  return out;
}

/// Adds lambda * regulariser gradients into `grads`; returns the regulariser value.
double add_regularizer(const ParameterStore& params, const EncoderConfig& encoder, double lambda,
                       ParameterStore& grads) {
  auto vg = ad::value_and_grad(params, [&](Tape& tape, const ParameterStore& p) {
    return spatial_regularizer(tape, p, encoder.layers, encoder.angle_domains);
  });
  if (lambda != 0.0) grads.axpy(lambda, vg.grads);
  return vg.value;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
  }
  return out;
}

bool is_head_param(const std::string& name) {
  return name.find("/proj/") != std::string::npos || name.find("/pred/") != std::string::npos;
}

std::string metric_name(TaskType t) { return t == TaskType::Classification ? "roc_auc" : "rmse"; }

/// True when `candidate` beats `best` under the selection direction.
bool improves(double candidate, const std::optional<double>& best, bool higher_is_better) {
  if (!best) return true;
  return higher_is_better ? candidate > *best : candidate < *best;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || batch_pretrain == 0 || batch_finetune == 0 || !(tau > 0.0) || !(lambda >= 0.0)) {
    throw ConfigError("train config: lr, batch sizes and tau must be positive; lambda non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("train config: adam betas must lie in [0, 1) and eps must be positive");
  }
}

std::size_t worker_threads(std::size_t requested) {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const std::size_t wanted = requested > 0 ? requested : hw;
  if (const char* env = std::getenv("GEOMGCL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return std::min(wanted, static_cast<std::size_t>(v));
  }
  return wanted;
}

void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state, const TrainConfig& config) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name) || params.at(name).size() != g.size()) {
      throw ShapeError("adam_step: gradient '" + name + "' " + g.shape_string() + " does not match parameter" +
                       (params.contains(name) ? " " + params.at(name).shape_string() : std::string(" (missing)")));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (!state.m.contains(name)) {
      state.m.set(name, Tensor(p.shape(), 0.0));
      state.v.set(name, Tensor(p.shape(), 0.0));
    }
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

ParameterStore init_pretrain_params(const EncoderConfig& config, const FeatureDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterStore params;
  init_encoder_params(params, config, dims, rng);
  init_projection_params(params, config, rng);
  return params;
}

ParameterStore init_finetune_params(const EncoderConfig& config, const FeatureDims& dims, std::size_t task_count,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterStore params;
  init_encoder_params(params, config, dims, rng);
  init_prediction_params(params, config, task_count, rng);
  return params;
}

BatchObjective pretrain_batch_objective(const ParameterStore& params, const std::vector<MoleculeInputs>& inputs,
                                        std::span<const std::size_t> batch, const EncoderConfig& encoder,
                                        const TrainConfig& train) {
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  auto sg = stacked_value_and_grad(
      params, batch, 2,
      [&](Tape& tape, std::size_t item) {
        const MoleculeInputs& mol = inputs[item];
        Var h2 = encode_view(tape, params, encoder, View::TwoD, mol).graph;
        Var h3 = encode_view(tape, params, encoder, View::ThreeD, mol).graph;
        return std::vector<Var>{project(tape, params, encoder, View::TwoD, h2),
                                project(tape, params, encoder, View::ThreeD, h3)};
      },
      [&](Tape&, std::span<const Var> z) {
        Var loss = contrastive_loss(z[0], z[1], train.tau);
        total = loss.value()[0];
        return ad::scale(loss, 1.0 / n);
      },
      worker_threads(train.threads));
  BatchObjective out;
  out.contrastive_total = total;
  out.grads = std::move(sg.grads);
  const double reg = add_regularizer(params, encoder, train.lambda, out.grads);
  out.objective = sg.loss + train.lambda * reg;
  return out;
}

PretrainResult pretrain(const std::vector<MoleculeInputs>& inputs, const FeatureDims& dims,
                        const EncoderConfig& encoder, const TrainConfig& train, ParameterStore initial,
                        const LogFn& log) {
  encoder.validate();
  train.validate();
  if (inputs.empty()) throw Error("pretrain: no molecules");
  PretrainResult result;
  result.fingerprint = config_fingerprint(encoder, dims);
  ParameterStore params = std::move(initial);
  AdamState adam;
  std::mt19937_64 shuffle_rng(train.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t epochs = train.effective_pretrain_epochs();
  double best = std::numeric_limits<double>::infinity();
  result.params = params;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (const auto& batch : make_batches(order, train.batch_pretrain)) {
      if (batch.size() == 1 && log) log("warning: pretraining batch of size 1 contributes zero contrastive loss");
      BatchObjective obj = pretrain_batch_objective(params, inputs, batch, encoder, train);
      total += obj.contrastive_total;
      adam_step(params, obj.grads, adam, train);
    }
    PretrainEpoch e;
    e.epoch = epoch;
    e.contrastive_total = total;
    e.contrastive_mean = total / static_cast<double>(inputs.size());
    e.regularizer = spatial_regularizer(params, encoder.layers, encoder.angle_domains);
    e.objective = total + train.lambda * e.regularizer;
    result.log.push_back(e);
    if (e.objective < best) {
      best = e.objective;
      result.best_epoch = epoch;
      result.best_loss = e.objective;
      result.params = params;
    }
    if (log) {
      log("pretrain epoch " + std::to_string(epoch) + " contrastive_mean " + std::to_string(e.contrastive_mean) +
          " reg " + std::to_string(e.regularizer));
    }
  }
  return result;
}

PretrainResult pretrain(const Dataset& ds, const EncoderConfig& encoder, const TrainConfig& train, const LogFn& log) {
  const auto inputs = prepare_dataset(ds, encoder);
  const FeatureDims dims = feature_dims(ds);
  return pretrain(inputs, dims, encoder, train, init_pretrain_params(encoder, dims, train.seed), log);
}

Projections project_all(const ParameterStore& params, const std::vector<MoleculeInputs>& inputs,
                        const EncoderConfig& encoder, std::size_t threads) {
  const std::size_t width = encoder.projection_width();
  Projections out{Tensor(inputs.size(), width), Tensor(inputs.size(), width)};
  parallel_for(inputs.size(), worker_threads(threads), [&](std::size_t i) {
    Tape tape;
    Var h2 = encode_view(tape, params, encoder, View::TwoD, inputs[i]).graph;
    Var h3 = encode_view(tape, params, encoder, View::ThreeD, inputs[i]).graph;
    const Tensor z2 = project(tape, params, encoder, View::TwoD, h2).value();
    const Tensor z3 = project(tape, params, encoder, View::ThreeD, h3).value();
    std::copy(z2.data().begin(), z2.data().end(), out.z2d.row_span(i).begin());
    std::copy(z3.data().begin(), z3.data().end(), out.z3d.row_span(i).begin());
  });
  return out;
}

LabelBlock gather_labels(const Dataset& ds, std::span<const std::size_t> rows) {
  LabelBlock out{Tensor(rows.size(), ds.task_count), Tensor(rows.size(), ds.task_count)};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Molecule& m = ds.molecules.at(rows[r]);
    for (std::size_t t = 0; t < m.labels.size() && t < ds.task_count; ++t) {
      if (!m.labels[t]) continue;
      out.labels(r, t) = *m.labels[t];
      out.mask(r, t) = 1.0;
    }
  }
  return out;
}

Tensor predict_all(const ParameterStore& params, const std::vector<MoleculeInputs>& inputs,
                   std::span<const std::size_t> rows, const EncoderConfig& encoder, std::size_t threads) {
  const std::size_t tasks = model_task_count(params);
  Tensor out(rows.size(), tasks);
  parallel_for(rows.size(), worker_threads(threads), [&](std::size_t r) {
    Tape tape;
    const MoleculeInputs& mol = inputs.at(rows[r]);
    Var h2 = encode_view(tape, params, encoder, View::TwoD, mol).graph;
    Var h3 = encode_view(tape, params, encoder, View::ThreeD, mol).graph;
    const Tensor y = predict(tape, params, encoder, h2, h3).value();
    std::copy(y.data().begin(), y.data().end(), out.row_span(r).begin());
  });
  return out;
}

std::size_t model_task_count(const ParameterStore& params) { return params.at("fused/pred/0/b2").size(); }

EvalReport evaluate(const ParameterStore& params, const Dataset& ds, const std::vector<MoleculeInputs>& inputs,
                    std::span<const std::size_t> rows, const EncoderConfig& encoder, std::size_t threads) {
  if (model_task_count(params) != ds.task_count) {
    throw ShapeError("task arity mismatch: model predicts " + std::to_string(model_task_count(params)) +
                     " tasks, dataset has " + std::to_string(ds.task_count));
  }
  EvalReport report;
  report.metric = metric_name(ds.task_type);
  report.count = rows.size();
  if (rows.empty()) return report;
  const Tensor pred = predict_all(params, inputs, rows, encoder, threads);
  const LabelBlock lb = gather_labels(ds, rows);
  bool any = false;
  for (double m : lb.mask.data()) any = any || m != 0.0;
  if (!any) return report;
  TaskBatch batch{pred, lb.labels, lb.mask};
  if (ds.task_type == TaskType::Classification) {
    report.loss = classification_loss(batch, 0.0, 0.0);
    AucReport auc = roc_auc(pred, lb.labels, lb.mask);
    report.value = auc.mean;
    report.per_task = auc.per_task;
  } else {
    report.loss = regression_loss(batch, 0.0, 0.0);
    report.value = masked_rmse(pred, lb.labels, lb.mask);
    for (std::size_t t = 0; t < ds.task_count; ++t) {
      std::vector<double> p, y;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (lb.mask(r, t) == 0.0) continue;
        p.push_back(pred(r, t));
        y.push_back(lb.labels(r, t));
      }
      report.per_task.push_back(p.empty() ? std::nullopt : std::optional<double>(rmse(p, y)));
    }
  }
  return report;
}

FinetuneResult finetune(const Dataset& ds, const std::vector<MoleculeInputs>& inputs, const Checkpoint* pretrained,
                        const EncoderConfig& encoder, const TrainConfig& train, const Split& split,
                        const LogFn& log) {
  encoder.validate();
  train.validate();
  if (ds.task_count == 0) throw Error("finetune: dataset has no labels");
  if (split.train.empty()) throw Error("finetune: empty training split");
  const FeatureDims dims = feature_dims(ds);
  FinetuneResult result;
  result.fingerprint = config_fingerprint(encoder, dims);
  result.task_type = ds.task_type;
  result.task_count = ds.task_count;
  result.split = split;

  ParameterStore params = init_finetune_params(encoder, dims, ds.task_count, train.seed);
  if (pretrained) {
    if (pretrained->fingerprint != result.fingerprint) {
      throw CheckpointError("fingerprint mismatch: checkpoint was trained with a different encoder configuration or "
                            "feature dimensions");
    }
    for (auto& [name, t] : params) {
      if (is_head_param(name)) continue;
      const Tensor& src = pretrained->params.at(name);
      if (src.size() != t.size()) throw CheckpointError("checkpoint tensor '" + name + "' has shape " + src.shape_string());
      t.data() = src.data();
    }
  }

  const bool cls = ds.task_type == TaskType::Classification;
  const std::size_t threads = worker_threads(train.threads);
  AdamState adam;
  std::mt19937_64 shuffle_rng(train.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order = split.train;
  const bool select_on_valid = !split.valid.empty();
  // Classification selects on ROC-AUC when the validation labels allow it,
  // otherwise (and for regression) on the lower-is-better metric.
  std::optional<double> best;
  bool higher_is_better = false;
  std::size_t since_best = 0;
  result.params = params;

  for (std::size_t epoch = 1; epoch <= train.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    for (const auto& batch : make_batches(order, train.batch_finetune)) {
      const LabelBlock lb = gather_labels(ds, batch);
      bool any = false;
      for (double m : lb.mask.data()) any = any || m != 0.0;
      if (!any) continue;
      auto sg = stacked_value_and_grad(
          params, batch, 1,
          [&](Tape& tape, std::size_t item) {
            Var h2 = encode_view(tape, params, encoder, View::TwoD, inputs[item]).graph;
            Var h3 = encode_view(tape, params, encoder, View::ThreeD, inputs[item]).graph;
            return std::vector<Var>{predict(tape, params, encoder, h2, h3)};
          },
          [&](Tape&, std::span<const Var> y) {
            return cls ? masked_bce(y[0], lb.labels, lb.mask) : masked_l1(y[0], lb.labels, lb.mask);
          },
          threads);
      const double reg = add_regularizer(params, encoder, train.lambda, sg.grads);
      loss_sum += sg.loss + train.lambda * reg;
      ++loss_batches;
      adam_step(params, sg.grads, adam, train);
    }

    FinetuneEpoch e;
    e.epoch = epoch;
    e.train_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    double key = e.train_loss;
    // Validate the weights at stored precision so the selected model scores
    // exactly what was logged, before and after a save.
    ParameterStore snapshot = round_to_float(params);
    if (select_on_valid) {
      EvalReport valid = evaluate(snapshot, ds, inputs, split.valid, encoder, threads);
      e.valid_loss = valid.loss;
      e.valid_metric = valid.value;
      higher_is_better = cls && valid.value.has_value();
      key = valid.value ? *valid.value : valid.loss;
    }
    result.log.push_back(e);
    if (improves(key, best, higher_is_better)) {
      best = key;
      result.best_epoch = epoch;
      result.params = std::move(snapshot);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (log) {
      log("finetune epoch " + std::to_string(epoch) + " train_loss " + std::to_string(e.train_loss) +
          (e.valid_metric ? " valid_" + metric_name(ds.task_type) + " " + std::to_string(*e.valid_metric) : ""));
    }
    if (train.patience > 0 && since_best >= train.patience) break;
  }
  result.best_valid = best;
  if (select_on_valid && result.best_epoch > 0) {
    const auto& best_epoch = result.log.at(result.best_epoch - 1);
    result.best_valid = best_epoch.valid_metric ? best_epoch.valid_metric : std::optional<double>(best_epoch.valid_loss);
  }
  result.params = round_to_float(result.params);
  if (!split.test.empty()) result.test_metric = evaluate(result.params, ds, inputs, split.test, encoder, threads).value;
  result.train_metric = evaluate(result.params, ds, inputs, split.train, encoder, threads).value;
  return result;
}

FinetuneResult finetune(const Dataset& ds, const Checkpoint* pretrained, const EncoderConfig& encoder,
                        const TrainConfig& train, const Split& split, const LogFn& log) {
  const auto inputs = prepare_dataset(ds, encoder);
  return finetune(ds, inputs, pretrained, encoder, train, split, log);
}

KFoldReport kfold_evaluate(const Dataset& ds, std::size_t k, const PipelineConfig& config, const LogFn& log) {
  if (k < 2) throw ConfigError("kfold_evaluate: k must be at least 2");
  KFoldReport report;
  report.metric = metric_name(ds.task_type);
  const auto inputs = prepare_dataset(ds, config.encoder);
  const FeatureDims dims = feature_dims(ds);
  double total = 0.0;
  std::size_t scored = 0;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const Split split = split_dataset(ds, config.ratios, fold);
    if (split.train.empty() || split.test.empty() || (config.ratios.valid > 0.0 && split.valid.empty())) {
      throw Error("kfold_evaluate: dataset of " + std::to_string(ds.size()) + " molecules is too small for the split");
    }
    TrainConfig train = config.train;
    train.seed = config.train.seed + fold;
    std::optional<Checkpoint> ck;
    if (config.pretrain) {
      PretrainResult pr = pretrain(inputs, dims, config.encoder, train,
                                   init_pretrain_params(config.encoder, dims, train.seed), log);
      ck = Checkpoint{kCheckpointVersion, pr.fingerprint, round_to_float(pr.params)};
    }
    FinetuneResult fr = finetune(ds, inputs, ck ? &*ck : nullptr, config.encoder, train, split, log);
    report.per_fold.push_back(fr.test_metric);
    if (fr.test_metric) {
      total += *fr.test_metric;
      ++scored;
    }
  }
  if (scored > 0) report.mean = total / static_cast<double>(scored);
  return report;
}

EncoderConfig probe_encoder(const EncoderConfig& encoder) {
  EncoderConfig probe = encoder;
  probe.hidden = 8;
  probe.rbf_size = 8;
  probe.layers = 2;
  probe.readout_steps = 2;
  probe.angle_domains = 2;
  probe.dist_domains = 2;
  probe.projection_dim = 0;
  return probe;
}

GradientCheckReport gradient_self_test(const std::vector<MoleculeInputs>& inputs, const FeatureDims& dims,
                                       const EncoderConfig& encoder, const TrainConfig& train, std::size_t entries) {
  if (inputs.empty()) throw Error("gradient_self_test: no molecules");
  std::vector<std::size_t> batch(std::min<std::size_t>(3, inputs.size()));
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const ParameterStore params = init_pretrain_params(encoder, dims, train.seed);
  const BatchObjective analytic = pretrain_batch_objective(params, inputs, batch, encoder, train);

  std::vector<std::pair<std::string, std::size_t>> all;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) all.emplace_back(name, i);
  std::mt19937_64 rng(train.seed ^ 0x2545f4914f6cdd1dULL);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(entries, all.size()));

  GradientCheckReport report;
  report.entries = all.size();
  constexpr double step = 1e-5;
  for (const auto& [name, i] : all) {
    ParameterStore hi = params, lo = params;
    hi.at(name)[i] += step;
    lo.at(name)[i] -= step;
    const double numeric = (pretrain_batch_objective(hi, inputs, batch, encoder, train).objective -
                            pretrain_batch_objective(lo, inputs, batch, encoder, train).objective) /
                           (2.0 * step);
    const double a = analytic.grads.at(name)[i];
    const double err = std::abs(a - numeric);
    const double scale = std::max(std::abs(a), std::abs(numeric));
    // A zero gradient has no meaningful relative error; the difference
    // quotient there is rounding noise, so bound it absolutely.
    if (scale < kGradientCheckFloor) {
      report.max_abs_error = std::max(report.max_abs_error, err);
      report.ok = report.ok && err <= kGradientCheckAbsTol;
    } else {
      report.max_rel_error = std::max(report.max_rel_error, err / scale);
      report.ok = report.ok && err / scale < kGradientCheckRelTol;
    }
  }
  return report;
}

}  // namespace geomgcl
