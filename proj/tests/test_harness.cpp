// Copyright 2026 The HIBCG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hibcg/config.hpp"
#include "hibcg/errors.hpp"
#include "hibcg/harness.hpp"

using namespace hibcg;
namespace fs = std::filesystem;

namespace {

const std::set<std::string>& rounding_mismatches() {
  static const std::set<std::string> rows{"flat.total",  "matched.gap", "sub.intra2",  "sub.cross12",
                                          "sub.cross21", "sub.total",   "aib.intra2",  "aib.cross12",
                                          "aib.cross21", "aib.total"};
  return rows;
}

std::set<std::string> failing(const std::vector<CheckRow>& rows) {
  std::set<std::string> out;
  for (const auto& r : rows)
    if (!r.pass) out.insert(r.id);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommandResult {
  int code;
  std::string out;
};

CommandResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + HIBCG_CLI + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hibcg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_run(const std::string& name) {
  RunConfig c = load_config(std::string(HIBCG_SOURCE_DIR) + "/configs/hibcg_default.json");
  c.name = name;
  c.seeds = {1, 2};
  c.workers = 2;
  c.training.steps = 200;
  c.training.learning_starts = 32;
  c.training.batch_size = 8;
  c.training.eval_interval = 10;
  c.training.eval_episodes = 1;
  return c;
}

}  // namespace

TEST_SUITE("harness-cli") {

TEST_CASE("worked example table") {
  const auto rows = verify_worked_example();
  CHECK(failing(rows) == rounding_mismatches());
  for (const auto& r : rows)
    if (r.id.rfind("layout", 0) == 0) CHECK(r.pass);
  CHECK_FALSE(all_pass(rows));
}

TEST_CASE("corrupting one constant fails exactly that row") {
  for (const char* id : {"flat.intra1", "layout5.cross12", "penalty.total", "aib.per_dim_cross"}) {
    VerifyOptions o;
    o.corrupt_row = id;
    auto expect = rounding_mismatches();
    expect.insert(id);
    CHECK(failing(verify_worked_example(o)) == expect);
  }
  VerifyOptions unknown;
  unknown.corrupt_row = "no.such.row";
  CHECK_THROWS_AS(verify_worked_example(unknown), ContractViolation);
}

TEST_CASE("property suites") {
  const auto all = run_props({"all", 200, 7});
  CHECK(all["ok"].get<bool>());
  std::set<std::string> names;
  for (const auto& c : all["checks"]) names.insert(c["name"].get<std::string>());
  CHECK(names.count("prop3.additivity_block_scales") == 1);
  CHECK(names.count("prop5.grid_oracle") == 1);
  CHECK(run_props({"prop3", 50, 1}).dump() == run_props({"prop3", 50, 1}).dump());
  CHECK_THROWS_AS(run_props({"prop9", 10, 1}), ContractViolation);
}

TEST_CASE("config round trip") {
  for (const char* name : {"hibcg_default", "flat_prior", "aib_only"}) {
    const auto c = load_config(std::string(HIBCG_SOURCE_DIR) + "/configs/" + name + ".json");
    CHECK(c.name == name);
    CHECK(config_from_json(config_to_json(c)) == c);
    CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));
  }
  const auto def = load_config(std::string(HIBCG_SOURCE_DIR) + "/configs/hibcg_default.json");
  auto flat = load_config(std::string(HIBCG_SOURCE_DIR) + "/configs/flat_prior.json");
  CHECK(flat.prior.sigma_intra == flat.prior.sigma_cross);
  flat.name = def.name;
  flat.prior.sigma_intra = def.prior.sigma_intra;
  CHECK(flat == def);
  auto aib = load_config(std::string(HIBCG_SOURCE_DIR) + "/configs/aib_only.json");
  CHECK(aib.loss.lambda_x_dim == 0.0);
  CHECK(def.seeds.size() == 5);
}

TEST_CASE("config errors name the offending path") {
  auto expect_error = [](const std::string& text, const std::string& fragment) {
    try {
      parse_config(text);
      FAIL("accepted: " << text);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  expect_error(R"({"prior": {"sigma_intra": -1}})", "prior.sigma_intra");
  expect_error(R"({"network": {"layers": 0}})", "network.layers");
  expect_error(R"({"training": {"lr": "fast"}})", "training.lr");
  expect_error(R"({"env": {"n": 6, "groups": [2, 2]}})", "env.groups");
  expect_error(R"({"bogus": 1})", "bogus");
  expect_error(R"({"network": {"gating": "soft"}})", "network.gating");
  expect_error(R"({"loss": {"xib_per_layer": true}})", "loss.xib_per_layer");
  expect_error(R"({"seeds": []})", "seeds");
  expect_error("{not json", "");
  CHECK(parse_config("{}") == RunConfig{});
  const auto schema = config_schema();
  CHECK(schema["properties"].contains("prior"));
  CHECK(schema["additionalProperties"] == false);
}

TEST_CASE("sweep scale mapping") {
  CHECK(sweep_scales(10.0, 0.01) == std::pair<double, double>{0.1, 0.01});
  CHECK(sweep_scales(1.0, 0.01) == std::pair<double, double>{0.01, 0.01});
  CHECK(sweep_scales(0.1, 0.01).first == 0.01);
  CHECK(sweep_scales(0.1, 0.01).second == doctest::Approx(0.1));
  CHECK(parse_ratio_list("0.1, 1,10") == std::vector<double>{0.1, 1.0, 10.0});
  CHECK_THROWS_AS(parse_ratio_list("1,-2"), ContractViolation);
  CHECK_THROWS_AS(parse_ratio_list("1,x"), ContractViolation);
}

TEST_CASE("training writes a seed-keyed layout") {
  const fs::path root = scratch("train");
  const auto cfg = tiny_run("layout");
  const auto out = train_config(cfg, root.string());
  REQUIRE(out.ok());
  for (const char* seed : {"seed_1", "seed_2"})
    for (const char* file : {"log.csv", "blocks.csv", "returns.csv", "summary.json", "checkpoint.txt"})
      CHECK(fs::exists(root / "layout" / seed / file));
  CHECK(fs::exists(root / "layout" / "aggregate.json"));
  CHECK(fs::exists(root / "layout" / "config.json"));
  CHECK(slurp(root / "layout" / "seed_1" / "blocks.csv").rfind("step,layer,block,kind,size,kl,lambda\n", 0) == 0);

  const fs::path again = scratch("train_again");
  train_config(cfg, again.string());
  for (const auto& entry : fs::recursive_directory_iterator(root / "layout")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root);
    CHECK_MESSAGE(slurp(entry.path()) == slurp(again / rel), rel.string());
  }
}

TEST_CASE("a diverging run records its failure") {
  const fs::path root = scratch("diverge");
  auto cfg = tiny_run("boom");
  cfg.training.lr = 1e300;
  const auto out = train_config(cfg, root.string());
  CHECK_FALSE(out.ok());
  REQUIRE(out.seeds.size() == 2);
  for (const auto& s : out.seeds) {
    CHECK_FALSE(s.ok);
    CHECK(s.error.rfind("training diverged: seed=", 0) == 0);
  }
  CHECK(fs::exists(root / "boom" / "seed_1" / "diverged.txt"));
  CHECK(fs::exists(root / "boom" / "aggregate.json"));
}

TEST_CASE("unit sweep ratio reproduces the flat run") {
  const fs::path root = scratch("sweep");
  auto cfg = tiny_run("shape");
  cfg.seeds = {3};
  const auto sweep = sweep_sigma(cfg, {1.0, 10.0}, root.string());
  REQUIRE(sweep.ok());
  const std::string table = slurp(sweep.csv_path);
  CHECK(table.rfind("ratio,sigma_intra,sigma_cross,seed,", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);

  auto flat = cfg;
  flat.prior.sigma_intra = flat.prior.sigma_cross;
  const auto run = train_config(flat, root.string());
  REQUIRE(run.ok());
  CHECK(slurp(fs::path(run.seeds[0].dir) / "log.csv") ==
        slurp(fs::path(sweep.runs[0].seeds[0].dir) / "log.csv"));
}

TEST_CASE("command line") {
  const std::string src = HIBCG_SOURCE_DIR;
  SUBCASE("verify reports the rounding mismatches") {
    const auto r = run("verify appendix-e");
    CHECK(r.code == 1);
    CHECK(r.out.find("MISMATCH") != std::string::npos);
    CHECK(r.out.find("layout5.total") != std::string::npos);
  }
  SUBCASE("props") {
    CHECK(run("props prop3 --trials 100").code == 0);
    CHECK(run("props prop5 --trials 20 --seed 3").code == 0);
    CHECK(run("props nonsense").code == 2);
  }
  SUBCASE("allocate") {
    const auto r = run("allocate " + src + "/data/four_channels.txt 3");
    CHECK(r.code == 0);
    CHECK(r.out.find("a0,aib,reciprocal,2.33333333") != std::string::npos);
    CHECK(r.out.find("1.2,3,3,ok") != std::string::npos);
    const fs::path dir = scratch("cli_alloc");
    std::ofstream(dir / "pair.txt") << "p aib reciprocal 1\nq xib reciprocal 1\n";
    CHECK(run("allocate " + (dir / "pair.txt").string() + " 2").out.find("p,aib,reciprocal,1,") != std::string::npos);
    std::ofstream(dir / "sated.txt") << "p aib tabulated 0 1 1 0\n";
    CHECK(run("allocate " + (dir / "sated.txt").string() + " 5").out.find("\n0,5,1,ok") != std::string::npos);
    std::ofstream(dir / "bad.txt") << "p aib cubic 1\n";
    CHECK(run("allocate " + (dir / "bad.txt").string() + " 2").code == 2);
  }
  SUBCASE("train honours the output root and rejects bad configs") {
    const fs::path dir = scratch("cli_train");
    auto cfg = tiny_run("cli");
    cfg.seeds = {1};
    std::ofstream(dir / "cfg.json") << config_to_json(cfg).dump(2);
    const auto r = run("train " + (dir / "cfg.json").string(), "HIBCG_OUT=" + (dir / "out").string());
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "out" / "cli" / "seed_1" / "log.csv"));
    std::ofstream(dir / "bad.json") << R"({"prior": {"sigma_cross": 0}})";
    CHECK(run("train " + (dir / "bad.json").string(), "HIBCG_OUT=" + (dir / "out").string()).code == 2);
  }
}

}  // TEST_SUITE
