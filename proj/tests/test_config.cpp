// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "geomgcl/config.hpp"
#include "geomgcl/error.hpp"

using namespace geomgcl;

TEST_CASE("parse_run_config") {
  const RunConfig c = parse_run_config(R"({"hidden": 32, "cutoff": 4.5, "lr": 0.01, "seed": 9, "lambda": 0})");
  CHECK(c.encoder.hidden == 32);
  CHECK(c.encoder.cutoff == 4.5);
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.seed == 9);
  CHECK(c.train.lambda == 0.0);
  CHECK(c.encoder.layers == EncoderConfig{}.layers);
  CHECK(parse_run_config("{}") == RunConfig{});

  CHECK_THROWS_WITH_AS(parse_run_config(R"({"hiddn": 3})"), doctest::Contains("unknown config key 'hiddn'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"hidden": "big"})"), doctest::Contains("'hidden'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"layers": -1})"), doctest::Contains("'layers'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"hidden": 1.5})"), doctest::Contains("'hidden'"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1]"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"tau": 0})"), ConfigError);
}

TEST_CASE("run_config_json round trip") {
  RunConfig c;
  c.encoder.rbf_size = 12;
  c.train.tau = 0.1;
  c.train.beta2 = 0.98;
  CHECK(parse_run_config(run_config_json(c)) == c);
  CHECK(run_config_json(c).find("\"rbf_size\": 12") != std::string::npos);
}
