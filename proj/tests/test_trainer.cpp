// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "geomgcl/checkpoint.hpp"
#include "geomgcl/error.hpp"
#include "geomgcl/objectives.hpp"
#include "geomgcl/trainer.hpp"
#include "test_util.hpp"

using namespace geomgcl;

namespace {

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_pretrain = 8;
  t.batch_finetune = 4;
  t.threads = 1;
  return t;
}

Split everything(std::size_t n) {
  Split s;
  for (std::size_t i = 0; i < n; ++i) s.train.push_back(i);
  return s;
}

}  // namespace

TEST_CASE("adam_step") {
  ParameterStore p;
  p.set("a", Tensor(2, 3, 0.5));
  p.set("b", Tensor::vector(4, -1.0));
  ParameterStore g;
  g.set("a", Tensor(2, 3, 1.0));
  g.set("b", Tensor::vector(4, 1.0));
  AdamState s;
  TrainConfig cfg;
  adam_step(p, g, s, cfg);
  CHECK(s.step == 1);
  for (double v : p.at("a").data()) CHECK(v == doctest::Approx(0.5 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(0.5 - p.at("a")[0] == doctest::Approx(9.99999990e-4).epsilon(1e-8));

  ParameterStore q = p;
  ParameterStore zero = g.zeros_like();
  AdamState fresh;
  adam_step(q, zero, fresh, cfg);
  CHECK(q == p);

  // Identical parameters with identical gradients remain identical.
  ParameterStore twins;
  twins.set("x", Tensor(1, 1, 0.3));
  twins.set("y", Tensor(1, 1, 0.3));
  AdamState ts;
  for (int k = 0; k < 50; ++k) {
    ParameterStore tg;
    const double grad = std::sin(0.7 * k) + twins.at("x")[0];
    tg.set("x", Tensor(1, 1, grad));
    tg.set("y", Tensor(1, 1, grad));
    adam_step(twins, tg, ts, cfg);
    CHECK(twins.at("x") == twins.at("y"));
  }

  ParameterStore wrong;
  wrong.set("a", Tensor(3, 3, 1.0));
  CHECK_THROWS_AS(adam_step(p, wrong, s, cfg), ShapeError);
  ParameterStore unknown;
  unknown.set("zzz", Tensor(1, 1));
  CHECK_THROWS_AS(adam_step(p, unknown, s, cfg), ShapeError);
}

TEST_CASE("worker_threads") {
  CHECK(worker_threads(3) == 3);
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  ::setenv("GEOMGCL_THREADS", "1", 1);
  CHECK(worker_threads(0) == 1);
  CHECK(worker_threads(3) == 1);
  ::setenv("GEOMGCL_THREADS", "100000", 1);
  CHECK(worker_threads(0) == hw);
  ::setenv("GEOMGCL_THREADS", "junk", 1);
  CHECK(worker_threads(0) == hw);
  ::unsetenv("GEOMGCL_THREADS");
  CHECK(worker_threads(0) == hw);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.tau = -1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.beta2 = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK(TrainConfig{}.effective_pretrain_epochs() == 100);
}

TEST_CASE("pretrain reduces the contrastive loss") {
  const Dataset ds = testing::random_molecules(16, 2);
  const EncoderConfig enc = testing::small_encoder(16, 8);
  TrainConfig t = quick_train(25);
  std::vector<std::string> messages;
  const PretrainResult r = pretrain(ds, enc, t, [&](const std::string& m) { messages.push_back(m); });
  REQUIRE(r.log.size() == 25);
  CHECK(r.log.back().contrastive_mean < r.log.front().contrastive_mean);
  CHECK(messages.size() == 25);
  CHECK(r.fingerprint == config_fingerprint(enc, feature_dims(ds)));
  for (const auto& e : r.log) {
    CHECK(e.objective == doctest::Approx(e.contrastive_total + t.lambda * e.regularizer).epsilon(1e-14));
    CHECK(r.best_loss <= e.objective);
  }
  CHECK(r.log.at(r.best_epoch - 1).objective == r.best_loss);
  CHECK(spatial_regularizer(r.params, enc.layers, enc.angle_domains) == r.log.at(r.best_epoch - 1).regularizer);
}

TEST_CASE("pretrain keeps a final batch of one and warns") {
  const Dataset ds = testing::random_molecules(9, 3);
  const EncoderConfig enc = testing::small_encoder(8, 8);
  TrainConfig t = quick_train(2);
  std::size_t warnings = 0;
  const auto r = pretrain(ds, enc, t, [&](const std::string& m) { warnings += m.starts_with("warning") ? 1 : 0; });
  CHECK(warnings == 2);
  CHECK(std::isfinite(r.log.back().contrastive_total));
}

TEST_CASE("batch objective matches a single-tape computation") {
  const Dataset ds = testing::random_molecules(4, 4);
  const EncoderConfig enc = testing::small_encoder(8, 8);
  const auto inputs = prepare_dataset(ds, enc);
  const ParameterStore params = init_pretrain_params(enc, feature_dims(ds), 5);
  TrainConfig t;
  t.threads = 2;
  const std::vector<std::size_t> batch{3, 1, 0};
  const BatchObjective obj = pretrain_batch_objective(params, inputs, batch, enc, t);
  const auto ref = ad::value_and_grad(params, [&](ad::Tape& tape, const ParameterStore& p) {
    std::vector<ad::Var> z2, z3;
    for (std::size_t i : batch) {
      z2.push_back(project(tape, p, enc, View::TwoD, encode_view(tape, p, enc, View::TwoD, inputs[i]).graph));
      z3.push_back(project(tape, p, enc, View::ThreeD, encode_view(tape, p, enc, View::ThreeD, inputs[i]).graph));
    }
    // Stack rows through transpose(concat_cols(transpose)).
    std::vector<ad::Var> c2, c3;
    for (auto v : z2) c2.push_back(ad::transpose(v));
    for (auto v : z3) c3.push_back(ad::transpose(v));
    ad::Var a = ad::transpose(ad::concat_cols(c2)), b = ad::transpose(ad::concat_cols(c3));
    ad::Var loss = ad::scale(contrastive_loss(a, b, t.tau), 1.0 / 3.0);
    return ad::add(loss, ad::scale(spatial_regularizer(tape, p, enc.layers, enc.angle_domains), t.lambda));
  });
  CHECK(obj.objective == doctest::Approx(ref.value).epsilon(1e-12));
  for (const auto& [name, g] : ref.grads) {
    const Tensor& mine = obj.grads.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(mine[i] - g[i]) <= 1e-10 * std::max(1.0, std::abs(g[i])));
  }
}

TEST_CASE("results do not depend on the thread count") {
  const Dataset ds = testing::random_molecules(10, 6);
  const EncoderConfig enc = testing::small_encoder(8, 8);
  TrainConfig t = quick_train(3);
  t.threads = 1;
  const auto a = pretrain(ds, enc, t);
  t.threads = 4;
  const auto b = pretrain(ds, enc, t);
  CHECK(a.params == b.params);
  CHECK(a.log.back().objective == b.log.back().objective);
}

TEST_CASE("finetune") {
  const Dataset ds = testing::random_molecules(12, 7, TaskType::Regression, 2);
  const EncoderConfig enc = testing::small_encoder(8, 8);
  TrainConfig t = quick_train(6);
  const auto pre = pretrain(ds, enc, t);
  const Checkpoint ck{kCheckpointVersion, pre.fingerprint, round_to_float(pre.params)};
  const Split split = split_dataset(ds, {0.5, 0.25, 0.25}, 1);
  const FinetuneResult r = finetune(ds, &ck, enc, t, split);
  CHECK(r.task_count == 2);
  CHECK(model_task_count(r.params) == 2);
  CHECK(r.test_metric.has_value());
  CHECK_FALSE(r.params.contains("2d/proj/0/W1"));
  REQUIRE(r.log.size() == 6);
  // The returned model is the best validation epoch.
  double best = INFINITY;
  for (const auto& e : r.log) best = std::min(best, *e.valid_metric);
  CHECK(*r.best_valid == best);
  CHECK(*r.log.at(r.best_epoch - 1).valid_metric == best);
  const auto inputs = prepare_dataset(ds, enc);
  // Returned weights are already at checkpoint precision.
  CHECK(r.params == round_to_float(r.params));
  CHECK(*evaluate(r.params, ds, inputs, split.valid, enc).value == best);
  CHECK(*evaluate(r.params, ds, inputs, split.test, enc).value == *r.test_metric);

  SUBCASE("weights come from the checkpoint") {
    TrainConfig none = t;
    none.max_epochs = 0;
    const FinetuneResult z = finetune(ds, &ck, enc, none, split);
    CHECK(z.params.at("3d/e2e/0/W_theta/1") == ck.params.at("3d/e2e/0/W_theta/1"));
  }
  SUBCASE("fingerprint mismatch") {
    EncoderConfig other = enc;
    other.cutoff = 4.5;
    CHECK_THROWS_WITH_AS(finetune(ds, &ck, other, t, split), doctest::Contains("fingerprint mismatch"), CheckpointError);
  }
  SUBCASE("task arity mismatch") {
    Dataset one = ds;
    one.task_count = 1;
    for (auto& m : one.molecules) m.labels.resize(1);
    CHECK_THROWS_WITH_AS(evaluate(r.params, one, inputs, split.test, enc), doctest::Contains("task arity"), ShapeError);
  }
  SUBCASE("no labels") {
    Dataset bare = ds;
    bare.task_count = 0;
    CHECK_THROWS(finetune(bare, nullptr, enc, t, split));
  }
}

TEST_CASE("finetune early stopping") {
  const Dataset ds = testing::random_molecules(16, 8, TaskType::Classification, 1);
  const EncoderConfig enc = testing::small_encoder(8, 8);
  TrainConfig t = quick_train(40);
  t.patience = 3;
  t.lr = 0.05;
  const Split split = split_dataset(ds, {0.5, 0.25, 0.25}, 2);
  const FinetuneResult r = finetune(ds, nullptr, enc, t, split);
  CHECK(r.log.size() <= 40);
  CHECK(r.log.size() - r.best_epoch <= 3);
  for (const auto& e : r.log) {
    if (r.log.front().valid_metric) CHECK(*e.valid_metric <= *r.best_valid);
  }
}

TEST_CASE("constant-label classification task is skipped") {
  Dataset ds = testing::random_molecules(8, 9, TaskType::Classification, 2);
  for (auto& m : ds.molecules) m.labels[1] = 1.0;
  const EncoderConfig enc = testing::small_encoder(8, 8);
  const FinetuneResult r = finetune(ds, nullptr, enc, quick_train(2), everything(8));
  const auto inputs = prepare_dataset(ds, enc);
  const EvalReport e = evaluate(r.params, ds, inputs, everything(8).train, enc);
  REQUIRE(e.per_task.size() == 2);
  CHECK(e.per_task[0].has_value());
  CHECK_FALSE(e.per_task[1].has_value());
  CHECK(*e.value == *e.per_task[0]);
}

TEST_CASE("gather_labels") {
  Dataset ds = testing::random_molecules(3, 10, TaskType::Regression, 2);
  ds.molecules[1].labels[0].reset();
  ds.molecules[2].labels.clear();
  const std::vector<std::size_t> rows{2, 1, 0};
  const LabelBlock b = gather_labels(ds, rows);
  CHECK(b.mask == Tensor::from_rows({{0, 0}, {0, 1}, {1, 1}}));
  CHECK(b.labels(2, 0) == *ds.molecules[0].labels[0]);
}

TEST_CASE("kfold_evaluate") {
  const Dataset ds = testing::random_molecules(20, 11);
  PipelineConfig cfg;
  cfg.encoder = testing::small_encoder(8, 8);
  cfg.train = quick_train(2);
  const KFoldReport a = kfold_evaluate(ds, 2, cfg);
  REQUIRE(a.per_fold.size() == 2);
  CHECK(*a.mean == doctest::Approx((*a.per_fold[0] + *a.per_fold[1]) / 2.0).epsilon(1e-15));
  CHECK(a.metric == "rmse");
  const KFoldReport b = kfold_evaluate(ds, 2, cfg);
  CHECK(a.per_fold == b.per_fold);
  CHECK_THROWS_AS(kfold_evaluate(ds, 1, cfg), ConfigError);
  CHECK_THROWS(kfold_evaluate(testing::random_molecules(3, 1), 2, cfg));
}

TEST_CASE("gradient self-test") {
  EncoderConfig wide;
  wide.cutoff = 4.5;
  const EncoderConfig probe = probe_encoder(wide);
  CHECK(probe.hidden == 8);
  CHECK(probe.rbf_size == 8);
  CHECK(probe.angle_domains == 2);
  CHECK(probe.cutoff == 4.5);

  const Dataset ds = testing::random_molecules(5, 17);
  TrainConfig t;
  t.threads = 1;
  const auto inputs = prepare_dataset(ds, probe);
  const GradientCheckReport r = gradient_self_test(inputs, feature_dims(ds), probe, t, 60);
  CHECK(r.ok);
  CHECK(r.entries == 60);
  CHECK(r.max_rel_error < kGradientCheckRelTol);
  CHECK_THROWS_AS(gradient_self_test({}, feature_dims(ds), probe, t), Error);
}
