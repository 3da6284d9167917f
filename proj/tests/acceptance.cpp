// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fail. Pass criterion numbers as arguments to run a
// subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geomgcl/checkpoint.hpp"
#include "geomgcl/error.hpp"
#include "geomgcl/geomgraph.hpp"
#include "geomgcl/objectives.hpp"
#include "geomgcl/rbf.hpp"
#include "geomgcl/trainer.hpp"
#include "test_util.hpp"

using namespace geomgcl;
namespace fs = std::filesystem;
using testing::max_abs_diff;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

/// Synthetic molecules with 4 to 16 atoms.
Dataset molecules(std::size_t count, std::uint64_t seed, TaskType task = TaskType::Regression) {
  SynthOptions o;
  o.count = count;
  o.seed = seed;
  o.min_atoms = 4;
  o.max_atoms = 16;
  o.task_type = task;
  return synth_dataset(o);
}

ParameterStore encoder_params(const EncoderConfig& config, const FeatureDims& dims, std::uint64_t seed) {
  ParameterStore p;
  std::mt19937_64 rng(seed);
  init_encoder_params(p, config, dims, rng);
  return p;
}

// 1. Rigid motions leave the 3D graph and h3d unchanged.
Outcome geometry_invariance() {
  const auto t0 = Clock::now();
  const EncoderConfig config;
  const Dataset ds = molecules(100, 11);
  const FeatureDims dims = feature_dims(ds);
  const ParameterStore params = encoder_params(config, dims, 1);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  double worst_geom = 0.0, worst_h = 0.0;
  std::size_t structure_mismatches = 0;
  for (const Molecule& m : ds.molecules) {
    const MoleculeInputs base = prepare_molecule(m, config, dims);
    const ViewGraph& g = base.view3d.graph;
    const Tensor h = encode_value(params, config, View::ThreeD, base);
    for (int k = 0; k < 20; ++k) {
      const Molecule moved = testing::move_molecule(m, testing::random_rotation(rng), {shift(rng), shift(rng), shift(rng)});
      const MoleculeInputs in = prepare_molecule(moved, config, dims);
      const ViewGraph& q = in.view3d.graph;
      bool same = q.edges.size() == g.edges.size() && q.dist_domain == g.dist_domain;
      for (std::size_t e = 0; same && e < g.edges.size(); ++e) {
        same = q.edges[e].src == g.edges[e].src && q.edges[e].dst == g.edges[e].dst &&
               q.neighbors[e].size() == g.neighbors[e].size();
        worst_geom = std::max(worst_geom, std::abs(q.edge_distance[e] - g.edge_distance[e]));
        for (std::size_t j = 0; same && j < g.neighbors[e].size(); ++j) {
          same = q.neighbors[e][j].edge == g.neighbors[e][j].edge && q.neighbors[e][j].domain == g.neighbors[e][j].domain;
          worst_geom = std::max(worst_geom, std::abs(q.neighbors[e][j].angle - g.neighbors[e][j].angle));
        }
      }
      if (!same) {
        ++structure_mismatches;
        continue;
      }
      worst_h = std::max(worst_h, max_abs_diff(h, encode_value(params, config, View::ThreeD, in)));
    }
  }
  const double secs = seconds_since(t0);
  return {structure_mismatches == 0 && worst_geom < 1e-9 && worst_h < 1e-9 && secs < 60.0,
          "2000 motions, structure mismatches " + std::to_string(structure_mismatches) + ", max geometry diff " +
              fmt("%.2e", worst_geom) + ", max h3d diff " + fmt("%.2e", worst_h) + ", " + fmt("%.1f", secs) + " s"};
}

// 2. Atom relabelling leaves both graph embeddings unchanged.
Outcome permutation_invariance() {
  const EncoderConfig config;
  const Dataset ds = molecules(100, 21);
  const FeatureDims dims = feature_dims(ds);
  const ParameterStore params = encoder_params(config, dims, 2);
  std::mt19937_64 rng(22);
  double worst = 0.0;
  for (const Molecule& m : ds.molecules) {
    const MoleculeInputs base = prepare_molecule(m, config, dims);
    const Tensor h2 = encode_value(params, config, View::TwoD, base);
    const Tensor h3 = encode_value(params, config, View::ThreeD, base);
    for (int k = 0; k < 10; ++k) {
      const auto perm = testing::random_permutation(m.atom_count(), rng);
      const MoleculeInputs in = prepare_molecule(testing::permute_atoms(m, perm), config, dims);
      worst = std::max(worst, max_abs_diff(h2, encode_value(params, config, View::TwoD, in)));
      worst = std::max(worst, max_abs_diff(h3, encode_value(params, config, View::ThreeD, in)));
    }
  }
  return {worst < 1e-9, "1000 relabellings, max embedding diff " + fmt("%.2e", worst)};
}

// 3. Analytic gradient of the full pretraining objective against central differences.
Outcome gradient_check() {
  const auto t0 = Clock::now();
  EncoderConfig config = testing::small_encoder(8, 8);
  const Dataset ds = molecules(3, 31);
  const FeatureDims dims = feature_dims(ds);
  const auto inputs = prepare_dataset(ds, config);
  ParameterStore params = init_pretrain_params(config, dims, 3);
  // Non-zero biases and spread-out angle weights so every term contributes.
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& [name, t] : params)
    for (double& v : t.data())
      if (v == 0.0) v = u(rng);
  TrainConfig train;
  train.lambda = 0.01;
  train.threads = 1;
  const std::vector<std::size_t> batch{0, 1, 2};
  const BatchObjective analytic = pretrain_batch_objective(params, inputs, batch, config, train);
  auto objective = [&](const ParameterStore& p) { return pretrain_batch_objective(p, inputs, batch, config, train).objective; };

  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) entries.emplace_back(name, i);
  std::shuffle(entries.begin(), entries.end(), rng);
  entries.resize(std::min<std::size_t>(200, entries.size()));

  // Relative error needs a non-zero reference. Entries whose true gradient
  // is zero (e.g. a shift that softmax cancels) only show difference noise,
  // so those are held to an absolute bound instead.
  double worst_rel = 0.0, worst_abs = 0.0;
  std::size_t near_zero = 0, failures = 0;
  std::string worst_name;
  for (const auto& [name, i] : entries) {
    ParameterStore hi = params, lo = params;
    hi.at(name)[i] += 1e-5;
    lo.at(name)[i] -= 1e-5;
    const double numeric = (objective(hi) - objective(lo)) / 2e-5;
    const double a = analytic.grads.at(name)[i];
    const double err = std::abs(a - numeric);
    const double scale = std::max(std::abs(a), std::abs(numeric));
    if (scale < 1e-2) {
      ++near_zero;
      worst_abs = std::max(worst_abs, err);
      failures += err > 1e-6;
    } else {
      failures += err / scale >= 1e-4;
      if (err / scale > worst_rel) {
        worst_rel = err / scale;
        worst_name = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && entries.size() == 200 && secs < 120.0,
          std::to_string(entries.size()) + " entries, max relative error " + fmt("%.2e", worst_rel) + " at " + worst_name +
              ", " + std::to_string(near_zero) + " near-zero entries with max abs error " + fmt("%.2e", worst_abs) + ", " +
              fmt("%.1f", secs) + " s"};
}

// 4. Closed-form values of the contrastive loss and regulariser.
Outcome loss_fixtures() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g;
  Tensor a(1, 6), b(1, 6);
  for (double& v : a.data()) v = g(rng);
  for (double& v : b.data()) v = g(rng);
  check(std::abs(contrastive_loss(a, b, 0.5).per_molecule) < 1e-9, "N=1");

  for (std::size_t n : {2, 5, 32}) {
    Tensor same(n, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      const double v = g(rng);
      for (std::size_t r = 0; r < n; ++r) same(r, c) = v;
    }
    check(std::abs(contrastive_loss(same, same, 0.5).per_molecule - 2.0 * std::log(static_cast<double>(n))) < 1e-9,
          "identical rows N=" + std::to_string(n));
  }

  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  // Each direction: -log(e^2 / (e^2 + e^0)) = log(1 + e^-2).
  const double per_direction = std::log(std::exp(2.0) + 1.0) - 2.0;
  check(std::abs(contrastive_loss(eye, eye, 0.5).per_molecule - 2.0 * per_direction) < 1e-9, "orthonormal N=2");

  ParameterStore p;
  p.set("3d/e2e/0/W_theta/0", Tensor(2, 2, 0.0));
  p.set("3d/e2e/0/W_theta/1", Tensor::from_rows({{1, 0}, {0, 1}}));
  p.set("3d/e2e/0/W_theta/2", Tensor::from_rows({{1, 2}, {0, 1}}));
  check(std::abs(spatial_regularizer(p, 1, 3) - 6.0) < 1e-12, "regulariser 0/I/shifted");
  ParameterStore flat;
  for (std::size_t i = 0; i < 4; ++i) flat.set("3d/e2e/0/W_theta/" + std::to_string(i), Tensor(3, 3, 0.25));
  check(std::abs(spatial_regularizer(flat, 1, 4)) < 1e-12, "regulariser tied");

  std::string detail = "contrastive N=1, identical rows, orthonormal; regulariser fixtures";
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail};
}

// 5. RBF centre hits and agreement with a scalar oracle.
Outcome rbf_fixtures() {
  const double pi = std::numbers::pi;
  bool hits = true;
  for (std::size_t k : {2, 8, 64}) {
    const auto a = rbf::make_spec(rbf::Kind::Angle, k);
    for (std::size_t i = 0; i < k; ++i) hits = hits && rbf::expand(a, a.centers[i])[i] == 1.0;
    const auto d = rbf::make_spec(rbf::Kind::Distance, k, 5.0);
    // A distance whose transform lands on the first centre exactly.
    hits = hits && rbf::expand(d, 5.0)[0] == 1.0;
  }
  auto oracle = [&](rbf::Kind kind, std::size_t k, std::size_t K, double x, double d_max) {
    if (kind == rbf::Kind::Angle) {
      const double mu = pi * static_cast<double>(k) / static_cast<double>(K - 1);
      const double w = 2.0 * pi / static_cast<double>(K);
      return std::exp(-(x - mu) * (x - mu) / (w * w));
    }
    const double lo = std::exp(-d_max);
    const double mu = lo + (1.0 - lo) * static_cast<double>(k) / static_cast<double>(K - 1);
    const double w = 2.0 / static_cast<double>(K) * (1.0 - lo);
    return std::exp(-(std::exp(-x) - mu) * (std::exp(-x) - mu) / (w * w));
  };
  std::mt19937_64 rng(51);
  double worst = 0.0;
  for (const auto& [K, d_max] : std::vector<std::pair<std::size_t, double>>{{64, 5.0}, {16, 4.0}}) {
    const auto a = rbf::make_spec(rbf::Kind::Angle, K);
    const auto d = rbf::make_spec(rbf::Kind::Distance, K, d_max);
    std::uniform_real_distribution<double> ang(0.0, pi), dist(0.0, d_max);
    for (int i = 0; i < 1000; ++i) {
      const double x = ang(rng), r = dist(rng);
      const auto ea = rbf::expand(a, x), ed = rbf::expand(d, r);
      for (std::size_t k = 0; k < K; ++k) {
        worst = std::max(worst, std::abs(ea[k] - oracle(rbf::Kind::Angle, k, K, x, 0.0)));
        worst = std::max(worst, std::abs(ed[k] - oracle(rbf::Kind::Distance, k, K, r, d_max)));
      }
    }
  }
  return {hits && worst < 1e-12, std::string("centre hits ") + (hits ? "exact" : "NOT exact") +
                                     ", 1000 inputs per kind and size, max oracle diff " + fmt("%.2e", worst)};
}

EncoderConfig bench_encoder(std::size_t d) {
  EncoderConfig e;
  e.hidden = d;
  e.rbf_size = 16;
  e.angle_domains = 4;
  e.dist_domains = 4;
  return e;
}

// 6. Pretraining learns to pair each molecule's two views.
Outcome pretrain_sanity() {
  const auto t0 = Clock::now();
  const EncoderConfig e = bench_encoder(32);
  const Dataset ds = molecules(32, 0);
  TrainConfig t;
  t.batch_pretrain = 32;
  t.pretrain_epochs = 500;
  t.lr = 1e-3;
  const auto inputs = prepare_dataset(ds, e);
  const PretrainResult r = pretrain(inputs, feature_dims(ds), e, t, init_pretrain_params(e, feature_dims(ds), 0));
  const Projections pr = project_all(r.params, inputs, e, t.threads);
  const double top1 = retrieval_top1(pr.z2d, pr.z3d);
  const double mean = contrastive_loss(pr.z2d, pr.z3d, t.tau).per_molecule;
  const double secs = seconds_since(t0);
  return {top1 >= 0.9 && mean < 2.0 * std::log(32.0) && secs < 600.0,
          "top-1 " + fmt("%.3f", top1) + ", mean loss " + fmt("%.4f", mean) + " (chance " + fmt("%.4f", 2.0 * std::log(32.0)) +
              "), epoch 1 mean " + fmt("%.4f", r.log.front().contrastive_mean) + ", " + fmt("%.1f", secs) + " s"};
}

// 7. Finetuning can fit eight molecules.
Outcome memorization() {
  const EncoderConfig e = bench_encoder(32);
  TrainConfig t;
  t.max_epochs = 500;
  t.lr = 1e-3;
  t.patience = 0;
  Split all;
  for (std::size_t i = 0; i < 8; ++i) all.train.push_back(i);
  const Dataset reg = molecules(8, 3, TaskType::Regression);
  const FinetuneResult rr = finetune(reg, nullptr, e, t, all);
  const Dataset cls = molecules(8, 3, TaskType::Classification);
  const FinetuneResult rc = finetune(cls, nullptr, e, t, all);
  const double rmse = rr.train_metric.value_or(INFINITY);
  const double auc = rc.train_metric.value_or(0.0);
  return {rmse < 0.05 && auc == 1.0, "regression train RMSE " + fmt("%.4f", rmse) + ", classification train ROC-AUC " +
                                         fmt("%.4f", auc) + ", 500 epochs"};
}

// 8. The regulariser weight tightens adjacent angle-domain weights.
Outcome lambda_effect() {
  const EncoderConfig e = bench_encoder(16);
  int wins = 0;
  std::string values;
  for (int seed = 0; seed < 10; ++seed) {
    const Dataset ds = molecules(32, 100 + seed);
    const auto inputs = prepare_dataset(ds, e);
    double reg[2];
    for (int k = 0; k < 2; ++k) {
      TrainConfig t;
      t.batch_pretrain = 32;
      t.pretrain_epochs = 30;
      t.seed = seed;
      t.lambda = k ? 0.01 : 0.0;
      const PretrainResult r = pretrain(inputs, feature_dims(ds), e, t, init_pretrain_params(e, feature_dims(ds), seed));
      reg[k] = spatial_regularizer(r.params, e.layers, e.angle_domains);
    }
    wins += reg[1] < reg[0];
    values += (seed ? ", " : " (") + fmt("%.1f", reg[0]) + "/" + fmt("%.1f", reg[1]);
  }
  return {wins >= 8, std::to_string(wins) + "/10 seeds with lower regulariser at lambda 0.01" + values + ")"};
}

struct PipelineRun {
  std::string pretrain_checkpoint, model, pretrain_log, finetune_log;
};

std::string pretrain_log_text(const PretrainResult& r) {
  std::ostringstream s;
  s.precision(17);
  for (const auto& e : r.log) s << e.epoch << ',' << e.contrastive_total << ',' << e.regularizer << ',' << e.objective << '\n';
  return s.str();
}

std::string finetune_log_text(const FinetuneResult& r) {
  std::ostringstream s;
  s.precision(17);
  for (const auto& e : r.log) s << e.epoch << ',' << e.train_loss << ',' << e.valid_loss << ',' << e.valid_metric.value_or(-1) << '\n';
  s << r.best_epoch << ',' << r.test_metric.value_or(-1) << '\n';
  return s.str();
}

PipelineRun pipeline(const Dataset& ds, const fs::path& dir, std::size_t threads) {
  const EncoderConfig e = testing::small_encoder(8, 8);
  TrainConfig t;
  t.max_epochs = 4;
  t.batch_pretrain = 8;
  t.batch_finetune = 8;
  t.seed = 9;
  t.threads = threads;
  const PretrainResult pre = pretrain(ds, e, t);
  fs::create_directories(dir);
  save_checkpoint(pre.params, pre.fingerprint, dir / "checkpoint.ggcl");
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.ggcl", pre.fingerprint);
  const FinetuneResult fin = finetune(ds, &ck, e, t, split_dataset(ds, {}, 4));
  save_checkpoint(fin.params, fin.fingerprint, dir / "model.ggcl");
  auto bytes = [](const fs::path& p) { return encode_checkpoint(load_checkpoint(p).params, load_checkpoint(p).fingerprint); };
  return {bytes(dir / "checkpoint.ggcl"), bytes(dir / "model.ggcl"), pretrain_log_text(pre), finetune_log_text(fin)};
}

// 9. Repeated runs with the same seeds are bit-identical.
Outcome determinism() {
  const Dataset ds = molecules(20, 91, TaskType::Classification);
  const fs::path root = fs::temp_directory_path() / "geomgcl_acceptance";
  fs::remove_all(root);
  const PipelineRun a = pipeline(ds, root / "a", 1);
  const PipelineRun b = pipeline(ds, root / "b", 1);
  const PipelineRun c = pipeline(ds, root / "c", 3);
  fs::remove_all(root);
  auto same = [](const PipelineRun& x, const PipelineRun& y) {
    return x.pretrain_checkpoint == y.pretrain_checkpoint && x.model == y.model && x.pretrain_log == y.pretrain_log &&
           x.finetune_log == y.finetune_log;
  };
  return {same(a, b) && same(a, c), std::string("two runs ") + (same(a, b) ? "identical" : "DIFFER") +
                                        ", run with 3 worker threads " + (same(a, c) ? "identical" : "DIFFERS")};
}

// 10. Dataset and checkpoint files round-trip, and damaged files are rejected.
Outcome round_trips() {
  std::vector<std::string> failed;
  const fs::path dir = fs::temp_directory_path() / "geomgcl_acceptance_io";
  fs::create_directories(dir);

  Dataset ds = molecules(25, 101, TaskType::Classification);
  ds.molecules[4].labels[0].reset();
  write_dataset(ds, dir / "data.jsonl");
  if (!(parse_dataset(dir / "data.jsonl", TaskType::Classification) == ds)) failed.push_back("dataset round trip");

  const EncoderConfig e = testing::small_encoder();
  const ParameterStore params = init_pretrain_params(e, feature_dims(ds), 5);
  const std::uint64_t fp = config_fingerprint(e, feature_dims(ds));
  save_checkpoint(params, fp, dir / "ck.ggcl");
  const Checkpoint ck = load_checkpoint(dir / "ck.ggcl", fp);
  double worst = 0.0;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i)
      worst = std::max(worst, std::abs(ck.params.at(name)[i] - t[i]) / std::max(1.0, std::abs(t[i])));
  if (!(ck.params == round_to_float(params)) || worst > 6e-8) failed.push_back("checkpoint round trip");

  const std::string good = encode_checkpoint(params, fp);
  std::string bad_magic = good, bad_version = good;
  bad_magic[0] = 'X';
  bad_version[4] = 9;
  const std::vector<std::pair<std::string, std::function<void()>>> corrupt{
      {"checkpoint magic", [&] { decode_checkpoint(bad_magic); }},
      {"checkpoint version", [&] { decode_checkpoint(bad_version); }},
      {"checkpoint truncated", [&] { decode_checkpoint(good.substr(0, good.size() / 2)); }},
      {"checkpoint trailing bytes", [&] { decode_checkpoint(good + "\x01"); }},
      {"checkpoint fingerprint", [&] { load_checkpoint(dir / "ck.ggcl", fp + 1); }},
      {"dataset not json", [&] { parse_dataset_string("{\"id\": \"x\", ", TaskType::Regression); }},
      {"dataset empty", [&] { parse_dataset_string("", TaskType::Regression); }},
      {"dataset bond out of range",
       [&] {
         parse_dataset_string(R"({"id":"b","atom_features":[[1],[1]],"bonds":[[0,7]],"conformers":[[[0,0,0],[1,0,0]]]})",
                              TaskType::Regression);
       }},
      {"dataset truncated file",
       [&] {
         const std::string text = serialize_dataset(ds);
         parse_dataset_string(text.substr(0, text.size() / 2), TaskType::Classification);
       }},
  };
  for (const auto& [what, fn] : corrupt) {
    try {
      fn();
      failed.push_back(what + " accepted");
    } catch (const Error&) {
    }
  }
  fs::remove_all(dir);
  std::string detail = "dataset lossless, checkpoint max relative diff " + fmt("%.1e", worst) + ", " +
                       std::to_string(corrupt.size()) + " corrupted inputs";
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry invariance", geometry_invariance},
      {"permutation invariance", permutation_invariance},
      {"gradient correctness", gradient_check},
      {"analytic loss fixtures", loss_fixtures},
      {"rbf fixtures", rbf_fixtures},
      {"pretrain sanity", pretrain_sanity},
      {"finetune memorization", memorization},
      {"lambda effect", lambda_effect},
      {"determinism", determinism},
      {"format round trips", round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("threw: ") + ex.what()};
    }
    failures += !o.ok;
    std::printf("%s %2d %s: %s\n", o.ok ? "PASS" : "FAIL", n, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
