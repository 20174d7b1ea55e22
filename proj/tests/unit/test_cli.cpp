#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "isnpg/commands.hpp"
#include "isnpg/model_io.hpp"

using namespace isnpg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "isnpg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("isnpg_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.toml";
  write_text_file(p.string(), body);
  return p.string();
}

const char* kCoord = R"(
seed = 3
[env]
id = "coord"
discount = 0.9
[train]
iterations = 12
gap_every = 4
db_every = 6
belief_horizon = 3
init = "random"
[eval]
lemma_instances = 4
lemma_horizon = 4
theorem_iterations = 10
)";

}  // namespace

TEST_CASE("help and usage errors") {
  Result h = run({"--help"});
  CHECK(h.code == kExitOk);
  CHECK(h.out.find("[train]") != std::string::npos);
  CHECK(run({}).code == kExitValidation);
  CHECK(run({"bogus"}).code == kExitValidation);
  CHECK(run({"train", "--threads", "0"}).code == kExitValidation);
}

TEST_CASE("train writes all outputs into a new directory") {
  fs::path dir = scratch("train");
  std::string cfg = write_config(dir, kCoord);
  fs::path out = dir / "nested" / "run";
  Result r = run({"--config", cfg, "--out", out.string(), "train"});
  REQUIRE(r.code == kExitOk);
  for (const char* f : {"metrics.csv", "policy.json", "manifest.json", "config.toml"}) {
    CHECK(fs::exists(out / f));
  }
  // The manifest reproduces the run.
  fs::path again = dir / "again";
  REQUIRE(run({"--config", (out / "manifest.json").string(), "--out", again.string(), "train"}).code == kExitOk);
  CHECK(read_text_file((out / "metrics.csv").string()) == read_text_file((again / "metrics.csv").string()));
  CHECK(read_text_file((out / "policy.json").string()) == read_text_file((again / "policy.json").string()));
}

TEST_CASE("seed flag overrides the config") {
  fs::path dir = scratch("seed");
  std::string cfg = write_config(dir, kCoord);
  REQUIRE(run({"--config", cfg, "--out", (dir / "a").string(), "train"}).code == kExitOk);
  REQUIRE(run({"--config", cfg, "--seed", "4", "--out", (dir / "b").string(), "train"}).code == kExitOk);
  CHECK(read_text_file((dir / "a" / "metrics.csv").string()) !=
        read_text_file((dir / "b" / "metrics.csv").string()));
}

TEST_CASE("eval reads a trained policy and rejects mismatches") {
  fs::path dir = scratch("eval");
  std::string cfg = write_config(dir, kCoord);
  fs::path run_dir = dir / "run";
  REQUIRE(run({"--config", cfg, "--out", run_dir.string(), "train"}).code == kExitOk);
  const std::string policy = (run_dir / "policy.json").string();
  Result e = run({"--config", cfg, "--out", (dir / "e").string(), "--policy", policy, "eval"});
  CHECK(e.code == kExitOk);
  CHECK(fs::exists(dir / "e" / "eval.json"));
  CHECK(e.out.find("ne_gap") != std::string::npos);

  fs::create_directories(dir / "tw1");
  std::string tw1 = write_config(dir / "tw1", std::string(kCoord) + "[internal_state]\nt_w = 1\n");
  Result mismatch = run({"--config", tw1, "--out", (dir / "m").string(), "--policy", policy, "eval"});
  CHECK(mismatch.code == kExitValidation);
  CHECK(mismatch.err.find("internal") != std::string::npos);

  write_text_file((dir / "broken.json").string(), "{\"agents\": [");
  Result broken = run({"--config", cfg, "--out", (dir / "b").string(), "--policy", (dir / "broken.json").string(), "eval"});
  CHECK(broken.code == kExitValidation);
  CHECK(run({"--config", cfg, "--out", (dir / "n").string(), "eval"}).code == kExitValidation);
}

TEST_CASE("verify writes a report with every section") {
  fs::path dir = scratch("verify");
  std::string cfg = write_config(dir, kCoord);
  Result r = run({"--config", cfg, "--out", (dir / "v").string(), "verify"});
  CHECK(r.code == kExitOk);
  const std::string report = read_text_file((dir / "v" / "verify.json").string());
  for (const char* key : {"lemma1", "lemma2", "lemma3", "lemma4", "fisher", "theorem", "eps_fsc", "M_hat"}) {
    CHECK(report.find(key) != std::string::npos);
  }
}

TEST_CASE("plot-data emits per-series files and a comparison") {
  fs::path dir = scratch("plot");
  std::string cfg = write_config(dir, kCoord);
  REQUIRE(run({"--config", cfg, "--out", (dir / "r0").string(), "train"}).code == kExitOk);
  REQUIRE(run({"--config", cfg, "--seed", "9", "--out", (dir / "r1").string(), "train"}).code == kExitOk);
  Result one = run({"plot-data", (dir / "r0").string()});
  CHECK(one.code == kExitOk);
  const std::string pot = read_text_file((dir / "r0" / "potential.csv").string());
  CHECK(std::count(pot.begin(), pot.end(), '\n') == 14);
  CHECK(fs::exists(dir / "r0" / "bound.csv"));
  Result two = run({"--out", (dir / "cmp").string(), "plot-data", (dir / "r0").string(), (dir / "r1").string()});
  CHECK(two.code == kExitOk);
  CHECK(fs::exists(dir / "cmp" / "comparison_potential.csv"));
  CHECK(fs::exists(dir / "cmp" / "r1_ne_gap.csv"));
  fs::create_directories(dir / "empty");
  CHECK(run({"plot-data", (dir / "empty").string()}).code == kExitValidation);
}

TEST_CASE("gen-model output loads as a custom environment") {
  fs::path dir = scratch("gen");
  std::string cfg = write_config(dir, "[env]\nid = \"matiger\"\n");
  REQUIRE(run({"--config", cfg, "--out", dir.string(), "gen-model"}).code == kExitOk);
  std::string custom = write_config(dir, "[env]\nid = \"custom\"\nmodel_path = \"" + (dir / "model.json").string() +
                                             "\"\n[train]\niterations = 2\n");
  CHECK(run({"--config", custom, "--out", (dir / "run").string(), "train"}).code == kExitOk);
}

TEST_CASE("compute failures map to exit code 2") {
  fs::path dir = scratch("size");
  std::string cfg = write_config(dir, "[env]\nid = \"mabc\"\n[internal_state]\nt_w = 3\ncap = 100\n");
  Result r = run({"--config", cfg, "--out", dir.string(), "train"});
  CHECK(r.code == kExitCompute);
  CHECK(r.err.find("required") != std::string::npos);
}
