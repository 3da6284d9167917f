// SPDX-License-Identifier: Apache-2.0
//
// Optimisation loops: contrastive pretraining, supervised finetuning with
// early stopping, and repeated-split evaluation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geomgcl/checkpoint.hpp"
#include "geomgcl/geommpnn.hpp"
#include "geomgcl/molio.hpp"
#include "geomgcl/tensor.hpp"

namespace geomgcl {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_pretrain = 256;
  std::size_t batch_finetune = 32;
  std::size_t max_epochs = 100;
  /// Pretraining epochs; 0 means max_epochs.
  std::size_t pretrain_epochs = 0;
  /// Epochs without validation improvement before stopping.
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  double lambda = 0.01;
  double tau = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Worker threads for per-molecule encoding; 0 means the hardware count. GEOMGCL_THREADS caps either.
  std::size_t threads = 0;

  std::size_t effective_pretrain_epochs() const { return pretrain_epochs == 0 ? max_epochs : pretrain_epochs; }
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Optional progress/warning sink.
using LogFn = std::function<void(const std::string&)>;

/// Worker count: the explicit value or the hardware count, capped by GEOMGCL_THREADS when set.
std::size_t worker_threads(std::size_t requested);

// --- Adam -----------------------------------------------------------------

struct AdamState {
  ParameterStore m;
  ParameterStore v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state, const TrainConfig& config);

// --- parameter sets ---------------------------------------------------------

/// Fresh encoder + projection heads.
ParameterStore init_pretrain_params(const EncoderConfig& config, const FeatureDims& dims, std::uint64_t seed);
/// Fresh encoder + prediction heads.
ParameterStore init_finetune_params(const EncoderConfig& config, const FeatureDims& dims, std::size_t task_count,
                                    std::uint64_t seed);

// --- pretraining ------------------------------------------------------------

struct PretrainEpoch {
  std::size_t epoch = 0;
  /// Sum over molecules of the per-molecule contrastive loss.
  double contrastive_total = 0.0;
  double contrastive_mean = 0.0;
  /// Spatial regulariser at the end of the epoch.
  double regularizer = 0.0;
  /// contrastive_total + lambda * regularizer.
  double objective = 0.0;
};

struct PretrainResult {
  ParameterStore params;  // best-loss epoch
  std::uint64_t fingerprint = 0;
  std::vector<PretrainEpoch> log;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
};

/// Minimises mean contrastive loss + lambda * regulariser over shuffled batches.
PretrainResult pretrain(const Dataset& ds, const EncoderConfig& encoder, const TrainConfig& train,
                        const LogFn& log = {});
PretrainResult pretrain(const std::vector<MoleculeInputs>& inputs, const FeatureDims& dims,
                        const EncoderConfig& encoder, const TrainConfig& train, ParameterStore initial,
                        const LogFn& log = {});

/// Mean contrastive loss plus lambda * regulariser on one batch, with gradients.
struct BatchObjective {
  double contrastive_total = 0.0;
  double objective = 0.0;
  ParameterStore grads;
};
BatchObjective pretrain_batch_objective(const ParameterStore& params, const std::vector<MoleculeInputs>& inputs,
                                        std::span<const std::size_t> batch, const EncoderConfig& encoder,
                                        const TrainConfig& train);

/// Projections of every molecule (rows aligned with `inputs`).
struct Projections {
  Tensor z2d;
  Tensor z3d;
};
Projections project_all(const ParameterStore& params, const std::vector<MoleculeInputs>& inputs,
                        const EncoderConfig& encoder, std::size_t threads = 1);

// --- finetuning -------------------------------------------------------------

struct FinetuneEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  /// ROC-AUC (classification) or RMSE (regression); nullopt when undefined.
  std::optional<double> valid_metric;
};

struct FinetuneResult {
  ParameterStore params;  // best-validation model
  std::uint64_t fingerprint = 0;
  TaskType task_type = TaskType::Regression;
  std::size_t task_count = 0;
  std::vector<FinetuneEpoch> log;
  std::size_t best_epoch = 0;
  std::optional<double> best_valid;
  std::optional<double> test_metric;
  std::optional<double> train_metric;
  Split split;
};

/// Labels of a molecule subset as N x tasks tensors (mask 1 where present).
struct LabelBlock {
  Tensor labels;
  Tensor mask;
};
LabelBlock gather_labels(const Dataset& ds, std::span<const std::size_t> rows);

/// Trains the fused prediction head end to end. When `pretrained` is given its
/// fingerprint must match `encoder` and the dataset features, and its encoder
/// weights seed the model.
FinetuneResult finetune(const Dataset& ds, const Checkpoint* pretrained, const EncoderConfig& encoder,
                        const TrainConfig& train, const Split& split, const LogFn& log = {});
FinetuneResult finetune(const Dataset& ds, const std::vector<MoleculeInputs>& inputs, const Checkpoint* pretrained,
                        const EncoderConfig& encoder, const TrainConfig& train, const Split& split,
                        const LogFn& log = {});

/// Raw predictions (N x tasks) for the given molecules.
Tensor predict_all(const ParameterStore& params, const std::vector<MoleculeInputs>& inputs,
                   std::span<const std::size_t> rows, const EncoderConfig& encoder, std::size_t threads = 1);

/// Task count of the fused prediction head stored in `params`.
std::size_t model_task_count(const ParameterStore& params);

struct EvalReport {
  std::string metric;  // "roc_auc" or "rmse"
  std::optional<double> value;
  std::vector<std::optional<double>> per_task;
  double loss = 0.0;
  std::size_t count = 0;
};

/// Task loss (without the regulariser) and metric for the given molecules.
EvalReport evaluate(const ParameterStore& params, const Dataset& ds, const std::vector<MoleculeInputs>& inputs,
                    std::span<const std::size_t> rows, const EncoderConfig& encoder, std::size_t threads = 1);

// --- repeated-split evaluation ------------------------------------------------

struct PipelineConfig {
  EncoderConfig encoder;
  TrainConfig train;
  bool pretrain = true;
  SplitRatios ratios;
};

struct KFoldReport {
  std::string metric;
  std::vector<std::optional<double>> per_fold;
  std::optional<double> mean;
};

/// Runs split seeds 0..k-1 with the full pipeline per seed.
KFoldReport kfold_evaluate(const Dataset& ds, std::size_t k, const PipelineConfig& config, const LogFn& log = {});

// --- self-test --------------------------------------------------------------

inline constexpr double kGradientCheckRelTol = 1e-4;
inline constexpr double kGradientCheckAbsTol = 1e-6;
/// Below this magnitude an entry is held to the absolute tolerance.
inline constexpr double kGradientCheckFloor = 1e-2;

struct GradientCheckReport {
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool ok = true;
};

/// Narrow copy of `encoder` (D=8, K=8, T=2, n=m=2) that keeps its geometry
/// settings. Wide encoders saturate at initialisation, which leaves most
/// gradients below the noise of a difference quotient.
EncoderConfig probe_encoder(const EncoderConfig& encoder);

/// Central-difference check of the pretraining objective's gradient on the
/// first three molecules, at freshly initialised parameters.
GradientCheckReport gradient_self_test(const std::vector<MoleculeInputs>& inputs, const FeatureDims& dims,
                                       const EncoderConfig& encoder, const TrainConfig& train,
                                       std::size_t entries = 200);

}  // namespace geomgcl

