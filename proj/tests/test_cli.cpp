// Drives the command-line tool end to end on a small synthetic dataset.
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path capture = fs::temp_directory_path() / "geomgcl_cli_stdout.txt";
  const std::string cmd = std::string(GEOMGCL_CLI) + " " + args + " > " + capture.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(capture);
  std::stringstream buf;
  buf << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, buf.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("cli pipeline") {
  const fs::path dir = fs::temp_directory_path() / "geomgcl_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = (dir / "data.jsonl").string();
  const std::string quick = " --epochs 2 --threads 2";

  REQUIRE(run("synth --out " + d + " --count 12 --seed 5").code == 0);
  REQUIRE(run("pretrain --data " + d + " --out " + (dir / "pre").string() + quick + " --pretrain-epochs 2").code == 0);
  for (auto f : {"checkpoint.ggcl", "pretrain_loss.csv", "run.log", "config.json"}) CHECK(fs::exists(dir / "pre" / f));
  CHECK(slurp(dir / "pre" / "run.log").find("effective config") != std::string::npos);
  CHECK(slurp(dir / "pre" / "run.log").find("gradient self-test: 200 entries") != std::string::npos);
  const Run st = run("selftest --data " + d);
  CHECK(st.code == 0);
  CHECK(st.out.find("gradient self-test") != std::string::npos);

  const std::string ft = "finetune --data " + d + " --task reg --checkpoint " + (dir / "pre" / "checkpoint.ggcl").string() + quick;
  REQUIRE(run(ft + " --out " + (dir / "ft").string()).code == 0);
  const json metrics = json::parse(slurp(dir / "ft" / "metrics.json"));
  CHECK(metrics["metric"] == "rmse");
  CHECK(metrics["per_epoch"].size() == 2);

  const Run ev = run("eval --data " + d + " --model " + (dir / "ft" / "model.ggcl").string());
  REQUIRE(ev.code == 0);
  CHECK(json::parse(ev.out)["value"].get<double>() == metrics["test"].get<double>());

  SUBCASE("reruns are identical") {
    REQUIRE(run(ft + " --out " + (dir / "ft2").string()).code == 0);
    CHECK(slurp(dir / "ft" / "model.ggcl") == slurp(dir / "ft2" / "model.ggcl"));
    CHECK(slurp(dir / "ft" / "metrics.json") == slurp(dir / "ft2" / "metrics.json"));
  }
  SUBCASE("featurize") {
    REQUIRE(run("featurize --data " + d + " --out " + (dir / "f.jsonl").string()).code == 0);
    std::ifstream in(dir / "f.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      const json j = json::parse(line);
      CHECK(j["3d"]["distances"].size() == j["3d"]["edges"].size());
      ++lines;
    }
    CHECK(lines == 12);
    std::ofstream(dir / "empty.jsonl").close();
    REQUIRE(run("featurize --data " + (dir / "empty.jsonl").string() + " --out " + (dir / "fe.jsonl").string()).code == 0);
    CHECK(fs::file_size(dir / "fe.jsonl") == 0);
  }
  SUBCASE("exit codes") {
    CHECK(run("--help").code == 0);
    CHECK(run("pretrain --data " + d).code == 2);
    CHECK(run("bogus").code == 2);
    CHECK(run("eval --data " + d + " --model " + (dir / "missing.ggcl").string()).code == 1);
    CHECK(run("finetune --data " + d + " --task cls --out " + (dir / "x").string() + " --lr -1").code == 1);
  }
  SUBCASE("wrong checkpoint is rejected") {
    const std::string other = (dir / "other.jsonl").string();
    REQUIRE(run("synth --out " + other + " --count 12 --atom-features 5").code == 0);
    CHECK(run("finetune --data " + other + " --task reg --checkpoint " + (dir / "pre" / "checkpoint.ggcl").string() +
              " --out " + (dir / "bad").string() + quick)
              .code == 1);
  }
}
