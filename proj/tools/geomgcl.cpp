// SPDX-License-Identifier: Apache-2.0
//
// geomgcl: command-line front end for pretraining, finetuning, evaluation
// and geometric featurisation of molecule datasets.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geomgcl/checkpoint.hpp"
#include "geomgcl/config.hpp"
#include "geomgcl/error.hpp"
#include "geomgcl/geommpnn.hpp"
#include "geomgcl/molio.hpp"
#include "geomgcl/objectives.hpp"
#include "geomgcl/synth.hpp"
#include "geomgcl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geomgcl;

namespace {

/// Flags shared by the training commands; each overrides the config file.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> pretrain_epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> lambda;
  std::optional<std::size_t> threads;

  void attach(CLI::App* cmd, bool pretraining) {
    cmd->add_option("--config", config_path, "JSON run configuration (encoder and training keys)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Random seed for initialisation and shuffling");
    cmd->add_option("--epochs", epochs, "Maximum epochs (max_epochs)");
    if (pretraining) cmd->add_option("--pretrain-epochs", pretrain_epochs, "Pretraining epochs (pretrain_epochs)");
    cmd->add_option("--batch-size", batch_size, pretraining ? "Pretraining batch size" : "Finetuning batch size");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--lambda", lambda, "Spatial regulariser weight");
    cmd->add_option("--threads", threads, "Worker threads (default: hardware count; GEOMGCL_THREADS caps it)");
  }

  RunConfig resolve(bool pretraining) const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) c.train.seed = *seed;
    if (epochs) c.train.max_epochs = *epochs;
    if (pretrain_epochs) c.train.pretrain_epochs = *pretrain_epochs;
    if (batch_size) (pretraining ? c.train.batch_pretrain : c.train.batch_finetune) = *batch_size;
    if (lr) c.train.lr = *lr;
    if (lambda) c.train.lambda = *lambda;
    if (threads) c.train.threads = *threads;
    c.encoder.validate();
    c.train.validate();
    return c;
  }
};

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
  }
  void operator()(const std::string& line) {
    out_ << line << '\n';
    out_.flush();
    std::cerr << line << '\n';
  }

 private:
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Model metadata saved next to a finetuned model.
json model_metadata(const RunConfig& cfg, const FinetuneResult& r, std::uint64_t split_seed, const SplitRatios& ratios) {
  json j = json::parse(run_config_json(cfg));
  json meta;
  meta["config"] = j;
  meta["task"] = std::string(to_string(r.task_type));
  meta["task_count"] = r.task_count;
  meta["split_seed"] = split_seed;
  meta["split_ratios"] = {ratios.train, ratios.valid, ratios.test};
  meta["fingerprint"] = hex(r.fingerprint);
  return meta;
}

Split rows_for(const std::string& which, const Split& split, std::size_t n) {
  if (which == "train") return {split.train, {}, {}};
  if (which == "valid") return {split.valid, {}, {}};
  if (which == "test") return {split.test, {}, {}};
  Split all;
  for (std::size_t i = 0; i < n; ++i) all.train.push_back(i);
  return all;
}

/// Gradient check on the run's first molecules; every training command runs it first.
void self_test(const Dataset& ds, const RunConfig& cfg, const std::function<void(const std::string&)>& log) {
  const EncoderConfig probe = probe_encoder(cfg.encoder);
  TrainConfig train = cfg.train;
  const std::vector<MoleculeInputs> inputs = [&] {
    Dataset head = ds;
    head.molecules.resize(std::min<std::size_t>(3, ds.size()));
    return prepare_dataset(head, probe);
  }();
  const GradientCheckReport r = gradient_self_test(inputs, feature_dims(ds), probe, train);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "gradient self-test: %zu entries, max relative error %.2e, max absolute error %.2e", r.entries,
                r.max_rel_error, r.max_abs_error);
  log(buf);
  if (!r.ok) throw Error("gradient self-test failed");
}

void log_stderr(const std::string& line) { std::cerr << line << '\n'; }

// --- commands -----------------------------------------------------------------

struct PretrainArgs {
  std::string data, out;
  Overrides o;
};

void cmd_pretrain(const PretrainArgs& a) {
  const RunConfig cfg = a.o.resolve(true);
  const Dataset ds = parse_dataset(a.data, TaskType::Regression);
  fs::create_directories(a.out);
  RunLog log(fs::path(a.out) / "run.log");
  log("effective config: " + run_config_json(cfg, -1));
  log("dataset: " + a.data + " (" + std::to_string(ds.size()) + " molecules)");
  self_test(ds, cfg, std::ref(log));
  const PretrainResult r = pretrain(ds, cfg.encoder, cfg.train, std::ref(log));
  save_checkpoint(r.params, r.fingerprint, fs::path(a.out) / "checkpoint.ggcl");
  std::ostringstream csv;
  csv << "epoch,contrastive_total,contrastive_mean,regularizer,objective\n";
  csv.precision(17);
  for (const auto& e : r.log) {
    csv << e.epoch << ',' << e.contrastive_total << ',' << e.contrastive_mean << ',' << e.regularizer << ',' << e.objective
        << '\n';
  }
  write_text(fs::path(a.out) / "pretrain_loss.csv", csv.str());
  write_text(fs::path(a.out) / "config.json", run_config_json(cfg) + "\n");
  log("best epoch " + std::to_string(r.best_epoch) + ", checkpoint " + (fs::path(a.out) / "checkpoint.ggcl").string());
}

struct FinetuneArgs {
  std::string data, checkpoint, task, out;
  std::uint64_t split_seed = 0;
  Overrides o;
};

void cmd_finetune(const FinetuneArgs& a) {
  const RunConfig cfg = a.o.resolve(false);
  const Dataset ds = parse_dataset(a.data, parse_task_type(a.task));
  fs::create_directories(a.out);
  RunLog log(fs::path(a.out) / "run.log");
  log("effective config: " + run_config_json(cfg, -1));
  std::optional<Checkpoint> ck;
  if (!a.checkpoint.empty()) ck = load_checkpoint(a.checkpoint, config_fingerprint(cfg.encoder, feature_dims(ds)));
  self_test(ds, cfg, std::ref(log));
  const SplitRatios ratios;
  const Split split = split_dataset(ds, ratios, a.split_seed);
  const FinetuneResult r = finetune(ds, ck ? &*ck : nullptr, cfg.encoder, cfg.train, split, std::ref(log));

  save_checkpoint(r.params, r.fingerprint, fs::path(a.out) / "model.ggcl");
  write_text(fs::path(a.out) / "config.json", model_metadata(cfg, r, a.split_seed, ratios).dump(2) + "\n");
  json metrics;
  metrics["metric"] = r.task_type == TaskType::Classification ? "roc_auc" : "rmse";
  metrics["per_epoch"] = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "epoch,train_loss,valid_loss,valid_metric\n";
  for (const auto& e : r.log) {
    metrics["per_epoch"].push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss}, {"valid_metric", optional_json(e.valid_metric)}});
    csv << e.epoch << ',' << e.train_loss << ',' << e.valid_loss << ',';
    if (e.valid_metric) csv << *e.valid_metric;
    csv << '\n';
  }
  metrics["best_epoch"] = r.best_epoch;
  metrics["best_valid"] = optional_json(r.best_valid);
  metrics["test"] = optional_json(r.test_metric);
  metrics["train"] = optional_json(r.train_metric);
  write_text(fs::path(a.out) / "metrics.json", metrics.dump(2) + "\n");
  write_text(fs::path(a.out) / "finetune_loss.csv", csv.str());
  std::cout << metrics.dump() << '\n';
}

struct EvalArgs {
  std::string data, model, split = "test", config;
};

void cmd_eval(const EvalArgs& a) {
  const Checkpoint model = load_checkpoint(a.model);
  const fs::path meta_path = a.config.empty() ? fs::path(a.model).parent_path() / "config.json" : fs::path(a.config);
  const json meta = json::parse(read_text(meta_path));
  const RunConfig cfg = parse_run_config(meta.at("config").dump());
  const Dataset ds = parse_dataset(a.data, parse_task_type(meta.at("task").get<std::string>()));
  if (model.fingerprint != config_fingerprint(cfg.encoder, feature_dims(ds))) {
    throw CheckpointError("fingerprint mismatch: model " + hex(model.fingerprint) + ", dataset and configuration " +
                          hex(config_fingerprint(cfg.encoder, feature_dims(ds))));
  }
  const auto r = meta.at("split_ratios");
  const Split split = split_dataset(ds, {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()},
                                    meta.at("split_seed").get<std::uint64_t>());
  const Split rows = rows_for(a.split, split, ds.size());
  const auto inputs = prepare_dataset(ds, cfg.encoder);
  const EvalReport rep = evaluate(model.params, ds, inputs, rows.train, cfg.encoder, cfg.train.threads);
  json out;
  out["split"] = a.split;
  out["metric"] = rep.metric;
  out["value"] = optional_json(rep.value);
  out["loss"] = rep.loss;
  out["count"] = rep.count;
  out["per_task"] = json::array();
  for (const auto& v : rep.per_task) out["per_task"].push_back(optional_json(v));
  std::cout << out.dump() << '\n';
}

struct FeaturizeArgs {
  std::string data, out, config;
};

json view_json(const ViewInputs& in) {
  const ViewGraph& g = in.graph;
  json j;
  j["edges"] = json::array();
  for (const auto& e : g.edges) j["edges"].push_back({e.src, e.dst});
  j["distances"] = g.edge_distance;
  j["neighbors"] = json::array();
  for (const auto& nb : g.neighbors) {
    json list = json::array();
    for (const auto& n : nb) {
      json item = {{"edge", n.edge}, {"angle", n.angle}};
      if (g.view == View::ThreeD) item["domain"] = n.domain;
      list.push_back(item);
    }
    j["neighbors"].push_back(list);
  }
  if (g.view == View::ThreeD) j["dist_domain"] = g.dist_domain;
  auto rows = [](const Tensor& t) {
    json m = json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) m.push_back(std::vector<double>(t.row_span(r).begin(), t.row_span(r).end()));
    return m;
  };
  j["rbf_distance"] = rows(in.dist_rbf);
  j["rbf_angle"] = rows(in.angle_rbf);
  return j;
}

void cmd_featurize(const FeaturizeArgs& a) {
  const RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  const Dataset ds = parse_dataset(a.data, TaskType::Regression, true);
  std::ostringstream out;
  out.precision(17);
  for (const Molecule& m : ds.molecules) {
    const MoleculeInputs in = prepare_molecule(m, cfg.encoder, feature_dims(ds));
    json j;
    j["id"] = m.id;
    j["2d"] = view_json(in.view2d);
    j["3d"] = view_json(in.view3d);
    out << j.dump() << '\n';
  }
  write_text(a.out, out.str());
}

struct SelfTestArgs {
  std::string data;
  Overrides o;
};

void cmd_selftest(const SelfTestArgs& a) {
  const RunConfig cfg = a.o.resolve(true);
  self_test(parse_dataset(a.data, TaskType::Regression), cfg, [](const std::string& line) { std::cout << line << '\n'; });
}

struct SynthArgs {
  std::string out, task = "reg";
  SynthOptions o;
};

void cmd_synth(SynthArgs a) {
  a.o.task_type = parse_task_type(a.task);
  write_dataset(synth_dataset(a.o), a.out);
}

struct KFoldArgs {
  std::string data, task;
  std::size_t k = 10;
  bool no_pretrain = false;
  Overrides o;
};

void cmd_kfold(const KFoldArgs& a) {
  PipelineConfig p;
  const RunConfig cfg = a.o.resolve(false);
  p.encoder = cfg.encoder;
  p.train = cfg.train;
  p.pretrain = !a.no_pretrain;
  const Dataset ds = parse_dataset(a.data, parse_task_type(a.task));
  self_test(ds, cfg, log_stderr);
  const KFoldReport r = kfold_evaluate(ds, a.k, p, [](const std::string& m) { std::cerr << m << '\n'; });
  json out;
  out["metric"] = r.metric;
  out["per_fold"] = json::array();
  for (const auto& v : r.per_fold) out["per_fold"].push_back(optional_json(v));
  out["mean"] = optional_json(r.mean);
  std::cout << out.dump() << '\n';
}

struct SweepArgs {
  std::string data, out;
  std::vector<double> lambdas{0.0, 0.001, 0.01, 0.1};
  Overrides o;
};

void cmd_sweep(const SweepArgs& a) {
  const RunConfig base = a.o.resolve(true);
  const Dataset ds = parse_dataset(a.data, TaskType::Regression);
  self_test(ds, base, log_stderr);
  const auto inputs = prepare_dataset(ds, base.encoder);
  std::ostringstream csv;
  csv.precision(17);
  csv << "lambda,best_epoch,contrastive_mean,regularizer\n";
  for (double lambda : a.lambdas) {
    TrainConfig t = base.train;
    t.lambda = lambda;
    const PretrainResult r = pretrain(inputs, feature_dims(ds), base.encoder, t,
                                      init_pretrain_params(base.encoder, feature_dims(ds), t.seed));
    const auto& best = r.log.at(r.best_epoch - 1);
    csv << lambda << ',' << r.best_epoch << ',' << best.contrastive_mean << ',' << best.regularizer << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric graph contrastive learning for molecules"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "geomgcl 0.1.0");

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Contrastive 2D/3D pretraining; writes checkpoint.ggcl and pretrain_loss.csv");
  pre->add_option("--data", pa.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pa.out, "Output directory")->required();
  pa.o.attach(pre, true);

  FinetuneArgs fa;
  auto* fin = app.add_subcommand("finetune", "Supervised finetuning; writes model.ggcl, metrics.json and config.json");
  fin->add_option("--data", fa.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  fin->add_option("--checkpoint", fa.checkpoint, "Pretrained checkpoint (omit to start from random weights)");
  fin->add_option("--task", fa.task, "Task type")->required()->check(CLI::IsMember({"cls", "reg", "classification", "regression"}));
  fin->add_option("--out", fa.out, "Output directory")->required();
  fin->add_option("--split-seed", fa.split_seed, "Seed of the 80/10/10 split");
  fa.o.attach(fin, false);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluates a finetuned model; prints metrics JSON");
  ev->add_option("--data", ea.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", ea.model, "Model file written by finetune")->required();
  ev->add_option("--split", ea.split, "Rows to evaluate")->check(CLI::IsMember({"train", "valid", "test", "all"}));
  ev->add_option("--config", ea.config, "Model metadata (default: config.json next to the model)");

  FeaturizeArgs za;
  auto* fz = app.add_subcommand("featurize", "Exports view graphs, angles, domains and RBF expansions as JSON lines");
  fz->add_option("--data", za.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  fz->add_option("--out", za.out, "Output file")->required();
  fz->add_option("--config", za.config, "JSON run configuration")->check(CLI::ExistingFile);

  SelfTestArgs ta;
  auto* st = app.add_subcommand("selftest", "Checks pretraining gradients against finite differences");
  st->add_option("--data", ta.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  ta.o.attach(st, true);

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "Writes a random synthetic dataset");
  sy->add_option("--out", sa.out, "Output file")->required();
  sy->add_option("--count", sa.o.count, "Molecules");
  sy->add_option("--seed", sa.o.seed, "Random seed");
  sy->add_option("--task", sa.task, "Label type")->check(CLI::IsMember({"cls", "reg", "classification", "regression"}));
  sy->add_option("--tasks", sa.o.task_count, "Labels per molecule");
  sy->add_option("--min-atoms", sa.o.min_atoms, "Smallest molecule");
  sy->add_option("--max-atoms", sa.o.max_atoms, "Largest molecule");
  sy->add_option("--atom-features", sa.o.atom_feature_dim, "Atom feature width");
  sy->add_option("--bond-features", sa.o.bond_feature_dim, "Bond feature width");

  KFoldArgs ka;
  auto* kf = app.add_subcommand("kfold", "Repeated-split evaluation of the full pipeline; prints metrics JSON");
  kf->add_option("--data", ka.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  kf->add_option("--task", ka.task, "Task type")->required()->check(CLI::IsMember({"cls", "reg", "classification", "regression"}));
  kf->add_option("--k", ka.k, "Number of split seeds");
  kf->add_flag("--no-pretrain", ka.no_pretrain, "Finetune from random weights");
  ka.o.attach(kf, true);

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep-lambda", "Pretrains once per lambda and reports the regulariser (CSV)");
  sw->add_option("--data", wa.data, "Dataset file (JSON lines)")->required()->check(CLI::ExistingFile);
  sw->add_option("--lambdas", wa.lambdas, "Lambda values")->delimiter(',');
  sw->add_option("--out", wa.out, "Output CSV (default: stdout)");
  wa.o.attach(sw, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pre) cmd_pretrain(pa);
    if (*fin) cmd_finetune(fa);
    if (*ev) cmd_eval(ea);
    if (*fz) cmd_featurize(za);
    if (*sy) cmd_synth(sa);
    if (*st) cmd_selftest(ta);
    if (*kf) cmd_kfold(ka);
    if (*sw) cmd_sweep(wa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
