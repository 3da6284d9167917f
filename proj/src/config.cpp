// SPDX-License-Identifier: Apache-2.0
#include "geomgcl/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "geomgcl/error.hpp"

namespace geomgcl {

using nlohmann::json;

namespace {

template <typename Fn>
void visit_fields(RunConfig& c, Fn&& fn) {
  fn("hidden", c.encoder.hidden);
  fn("layers", c.encoder.layers);
  fn("readout_steps", c.encoder.readout_steps);
  fn("angle_domains", c.encoder.angle_domains);
  fn("dist_domains", c.encoder.dist_domains);
  fn("rbf_size", c.encoder.rbf_size);
  fn("cutoff", c.encoder.cutoff);
  fn("bond_length_max", c.encoder.bond_length_max);
  fn("leaky_slope", c.encoder.leaky_slope);
  fn("projection_dim", c.encoder.projection_dim);
  fn("lr", c.train.lr);
  fn("batch_pretrain", c.train.batch_pretrain);
  fn("batch_finetune", c.train.batch_finetune);
  fn("max_epochs", c.train.max_epochs);
  fn("pretrain_epochs", c.train.pretrain_epochs);
  fn("patience", c.train.patience);
  fn("seed", c.train.seed);
  fn("lambda", c.train.lambda);
  fn("tau", c.train.tau);
  fn("beta1", c.train.beta1);
  fn("beta2", c.train.beta2);
  fn("eps", c.train.eps);
  fn("threads", c.train.threads);
}

template <typename T>
void read_value(const json& v, const std::string& key, T& out) {
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    out = v.get<double>();
  } else {
    if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("config key '" + key + "' must be an integer");
    if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    out = static_cast<T>(v.get<unsigned long long>());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  std::size_t matched = 0;
  visit_fields(cfg, [&](const char* key, auto& field) {
    if (auto it = doc.find(key); it != doc.end()) {
      read_value(*it, key, field);
      ++matched;
    }
  });
  if (matched != doc.size()) {
    RunConfig probe;
    for (const auto& [key, _] : doc.items()) {
      bool known = false;
      visit_fields(probe, [&](const char* k, auto&) { known = known || key == k; });
      if (!known) throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.encoder.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string run_config_json(const RunConfig& config, int indent) {
  RunConfig c = config;
  json doc = json::object();
  visit_fields(c, [&](const char* key, auto& field) { doc[key] = field; });
  return doc.dump(indent);
}

}  // namespace geomgcl
