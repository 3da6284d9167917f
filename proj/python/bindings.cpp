// SPDX-License-Identifier: Apache-2.0
// Python bindings for dataset handling, featurisation and the training loops.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "geomgcl/checkpoint.hpp"
#include "geomgcl/config.hpp"
#include "geomgcl/error.hpp"
#include "geomgcl/objectives.hpp"
#include "geomgcl/rbf.hpp"
#include "geomgcl/synth.hpp"
#include "geomgcl/trainer.hpp"

namespace py = pybind11;
using namespace geomgcl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Tensor t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

py::dict params_dict(const ParameterStore& params) {
  py::dict d;
  for (const auto& [name, t] : params) d[py::str(name)] = to_numpy(t);
  return d;
}

RunConfig config_from(const std::string& json_text) { return json_text.empty() ? RunConfig{} : parse_run_config(json_text); }

Split full_split(std::size_t n) {
  Split s;
  for (std::size_t i = 0; i < n; ++i) s.train.push_back(i);
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Geometric graph contrastive learning for molecules";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::enum_<TaskType>(m, "TaskType")
      .value("Classification", TaskType::Classification)
      .value("Regression", TaskType::Regression);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_readonly("task_type", &Dataset::task_type)
      .def_readonly("task_count", &Dataset::task_count)
      .def_readonly("atom_feature_dim", &Dataset::atom_feature_dim)
      .def_readonly("bond_feature_dim", &Dataset::bond_feature_dim)
      .def_property_readonly("ids",
                             [](const Dataset& ds) {
                               std::vector<std::string> ids;
                               for (const auto& mol : ds.molecules) ids.push_back(mol.id);
                               return ids;
                             })
      .def_property_readonly("labels",
                             [](const Dataset& ds) {
                               std::vector<std::vector<std::optional<double>>> out;
                               for (const auto& mol : ds.molecules) out.push_back(mol.labels);
                               return out;
                             })
      .def("to_jsonl", &serialize_dataset)
      .def("save", [](const Dataset& ds, const std::filesystem::path& p) { write_dataset(ds, p); })
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def("parse_task_type", [](const std::string& s) { return parse_task_type(s); });
  m.def(
      "load_dataset",
      [](const std::filesystem::path& path, const std::string& task) { return parse_dataset(path, parse_task_type(task)); },
      py::arg("path"), py::arg("task") = "reg");
  m.def(
      "parse_dataset",
      [](const std::string& text, const std::string& task) { return parse_dataset_string(text, parse_task_type(task)); },
      py::arg("text"), py::arg("task") = "reg");
  m.def(
      "synth_dataset",
      [](std::size_t count, std::uint64_t seed, const std::string& task, std::size_t tasks) {
        SynthOptions o;
        o.count = count;
        o.seed = seed;
        o.task_type = parse_task_type(task);
        o.task_count = tasks;
        return synth_dataset(o);
      },
      py::arg("count") = 32, py::arg("seed") = 0, py::arg("task") = "reg", py::arg("tasks") = 1);
  m.def(
      "split_dataset",
      [](std::size_t n, std::uint64_t seed, double train, double valid, double test) {
        const Split s = split_dataset(n, {train, valid, test}, seed);
        return py::make_tuple(s.train, s.valid, s.test);
      },
      py::arg("n"), py::arg("seed") = 0, py::arg("train") = 0.8, py::arg("valid") = 0.1, py::arg("test") = 0.1);

  m.def(
      "rbf_expand",
      [](const std::string& kind, std::size_t k, double x, std::optional<double> d_max) {
        const rbf::Kind kd = kind == "angle" ? rbf::Kind::Angle : rbf::Kind::Distance;
        if (kind != "angle" && kind != "distance") throw ConfigError("rbf kind must be 'angle' or 'distance'");
        return rbf::expand(rbf::make_spec(kd, k, d_max), x);
      },
      py::arg("kind"), py::arg("k"), py::arg("x"), py::arg("d_max") = py::none());

  m.def(
      "contrastive_loss",
      [](const Array& z2d, const Array& z3d, double tau) {
        const auto v = contrastive_loss(from_numpy(z2d), from_numpy(z3d), tau);
        return py::make_tuple(v.total, v.per_molecule);
      },
      py::arg("z2d"), py::arg("z3d"), py::arg("tau") = 0.5);
  m.def(
      "retrieval_top1", [](const Array& z2d, const Array& z3d) { return retrieval_top1(from_numpy(z2d), from_numpy(z3d)); },
      py::arg("z2d"), py::arg("z3d"));

  m.def(
      "default_config", [](int indent) { return run_config_json(RunConfig{}, indent); }, py::arg("indent") = 2);

  m.def(
      "encode",
      [](const Dataset& ds, const std::string& config_json, std::uint64_t seed) {
        const RunConfig cfg = config_from(config_json);
        ParameterStore params;
        std::mt19937_64 rng(seed);
        init_encoder_params(params, cfg.encoder, feature_dims(ds), rng);
        const auto inputs = prepare_dataset(ds, cfg.encoder);
        Tensor h2(inputs.size(), cfg.encoder.hidden), h3(inputs.size(), cfg.encoder.hidden);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          const Tensor a = encode_value(params, cfg.encoder, View::TwoD, inputs[i]);
          const Tensor b = encode_value(params, cfg.encoder, View::ThreeD, inputs[i]);
          std::copy(a.data().begin(), a.data().end(), h2.row_span(i).begin());
          std::copy(b.data().begin(), b.data().end(), h3.row_span(i).begin());
        }
        return py::make_tuple(to_numpy(h2), to_numpy(h3));
      },
      py::arg("dataset"), py::arg("config") = "", py::arg("seed") = 0,
      "Graph embeddings (h2d, h3d) of every molecule under freshly initialised encoders.");

  m.def(
      "pretrain",
      [](const Dataset& ds, const std::string& config_json, std::optional<std::filesystem::path> checkpoint) {
        const RunConfig cfg = config_from(config_json);
        PretrainResult r;
        {
          py::gil_scoped_release release;
          r = pretrain(ds, cfg.encoder, cfg.train);
        }
        if (checkpoint) save_checkpoint(r.params, r.fingerprint, *checkpoint);
        py::list log;
        for (const auto& e : r.log) {
          py::dict row;
          row["epoch"] = e.epoch;
          row["contrastive_total"] = e.contrastive_total;
          row["contrastive_mean"] = e.contrastive_mean;
          row["regularizer"] = e.regularizer;
          row["objective"] = e.objective;
          log.append(row);
        }
        py::dict out;
        out["log"] = log;
        out["best_epoch"] = r.best_epoch;
        out["best_loss"] = r.best_loss;
        out["fingerprint"] = r.fingerprint;
        return out;
      },
      py::arg("dataset"), py::arg("config") = "", py::arg("checkpoint") = py::none());

  m.def(
      "finetune",
      [](const Dataset& ds, const std::string& config_json, std::optional<std::filesystem::path> checkpoint,
         std::optional<std::uint64_t> split_seed, std::optional<std::filesystem::path> model) {
        const RunConfig cfg = config_from(config_json);
        std::optional<Checkpoint> ck;
        if (checkpoint) ck = load_checkpoint(*checkpoint, config_fingerprint(cfg.encoder, feature_dims(ds)));
        const Split split = split_seed ? split_dataset(ds, {}, *split_seed) : full_split(ds.size());
        FinetuneResult r;
        {
          py::gil_scoped_release release;
          r = finetune(ds, ck ? &*ck : nullptr, cfg.encoder, cfg.train, split);
        }
        if (model) save_checkpoint(r.params, r.fingerprint, *model);
        py::list log;
        for (const auto& e : r.log) {
          py::dict row;
          row["epoch"] = e.epoch;
          row["train_loss"] = e.train_loss;
          row["valid_loss"] = e.valid_loss;
          row["valid_metric"] = e.valid_metric;
          log.append(row);
        }
        py::dict out;
        out["log"] = log;
        out["metric"] = r.task_type == TaskType::Classification ? "roc_auc" : "rmse";
        out["best_epoch"] = r.best_epoch;
        out["best_valid"] = r.best_valid;
        out["test"] = r.test_metric;
        out["train"] = r.train_metric;
        return out;
      },
      py::arg("dataset"), py::arg("config") = "", py::arg("checkpoint") = py::none(), py::arg("split_seed") = py::none(),
      py::arg("model") = py::none(),
      "Supervised training. Without split_seed every molecule is used for training.");

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        const Checkpoint ck = load_checkpoint(path);
        return py::make_tuple(ck.fingerprint, params_dict(ck.params));
      },
      py::arg("path"));
}
