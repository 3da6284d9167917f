// SPDX-License-Identifier: Apache-2.0
//
// Projection heads, cross-view contrastive loss, angle-domain regulariser,
// fused prediction head, task losses and evaluation metrics.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "geomgcl/autodiff.hpp"
#include "geomgcl/geommpnn.hpp"
#include "geomgcl/tensor.hpp"

namespace geomgcl {

// --- heads ----------------------------------------------------------------

/// Adds `2d/proj/0/*` and `3d/proj/0/*` (D -> D -> D_p).
void init_projection_params(ParameterStore& params, const EncoderConfig& config, std::mt19937_64& rng);
/// Adds `2d/pred/0/*`, `3d/pred/0/*` (D -> D -> D) and `fused/pred/0/*` (D -> D -> tasks).
void init_prediction_params(ParameterStore& params, const EncoderConfig& config, std::size_t task_count,
                            std::mt19937_64& rng);

/// z = MLP(h) for the given view's projection head. Not normalised.
ad::Var project(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, View view, ad::Var h);

/// y = MLP_fused(MLP_2d(h2d) + MLP_3d(h3d)); rows are molecules.
ad::Var predict(ad::Tape& tape, const ParameterStore& params, const EncoderConfig& config, ad::Var h2d, ad::Var h3d);

// --- contrastive loss -----------------------------------------------------

/// Sum over i of
///   -log softmax_j(<z2_i, z3_j>/tau)[i] - log softmax_j(<z3_i, z2_j>/tau)[i].
/// Inputs are N x D_p with row i of each forming a positive pair.
ad::Var contrastive_loss(ad::Var z2d, ad::Var z3d, double tau);

struct ContrastiveValue {
  double total = 0.0;
  double per_molecule = 0.0;
};

ContrastiveValue contrastive_loss(const Tensor& z2d, const Tensor& z3d, double tau);

/// Fraction of rows i with argmax_j <z2_i, z3_j> == i (ties resolve to the lowest j).
double retrieval_top1(const Tensor& z2d, const Tensor& z3d);

// --- spatial regulariser --------------------------------------------------

/// Sum over layers t and domains i of ||W_theta,i+1 - W_theta,i||_F^2.
ad::Var spatial_regularizer(ad::Tape& tape, const ParameterStore& params, std::size_t layers, std::size_t domains);
double spatial_regularizer(const ParameterStore& params, std::size_t layers, std::size_t domains);

inline double combined_pretrain_loss(double contrastive, double reg, double lambda) {
  return contrastive + lambda * reg;
}

// --- task losses ----------------------------------------------------------

/// Predictions, labels and presence mask, all N x tasks.
struct TaskBatch {
  Tensor predictions;
  Tensor labels;
  Tensor mask;  // 1 where the label is present, 0 otherwise
};

/// Mean sigmoid cross-entropy over present labels.
ad::Var masked_bce(ad::Var logits, const Tensor& labels, const Tensor& mask);
/// Mean absolute error over present labels.
ad::Var masked_l1(ad::Var predictions, const Tensor& labels, const Tensor& mask);

double classification_loss(const TaskBatch& batch, double lambda, double reg);
double regression_loss(const TaskBatch& batch, double lambda, double reg);

// --- metrics --------------------------------------------------------------

struct AucReport {
  /// nullopt for tasks lacking a positive or a negative label.
  std::vector<std::optional<double>> per_task;
  /// Mean over scored tasks; nullopt when none were scored.
  std::optional<double> mean;
};

/// Mann-Whitney ROC-AUC per task with ties counted as 0.5.
AucReport roc_auc(const Tensor& scores, const Tensor& labels, const Tensor& mask);
double roc_auc_single(std::span<const double> scores, std::span<const double> labels);

/// Root mean squared error; throws on empty input.
double rmse(std::span<const double> predictions, std::span<const double> labels);
/// RMSE over present entries of N x tasks tensors.
double masked_rmse(const Tensor& predictions, const Tensor& labels, const Tensor& mask);

}  // namespace geomgcl
