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

#pragma once

// Entry points behind the command-line tool: worked-example verification,
// property suites, training and sweeps over prior scales, and allocation.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hibcg/capacity.hpp"
#include "hibcg/config.hpp"
#include "hibcg/trainer.hpp"
#include "json.hpp"

namespace hibcg {

// ------------------------------------------------------------ verification

struct CheckRow {
  std::string id;        // stable key, e.g. "flat.intra1"
  std::string quantity;  // human label
  double computed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string rule;  // "round2", "abs", "exact", "greater"
  bool pass = false;
};

struct VerifyOptions {
  // Row id whose published constant is perturbed, to exercise the failure path.
  std::string corrupt_row;
};

std::vector<CheckRow> verify_worked_example(const VerifyOptions& opts = {});
void print_check_table(std::ostream& out, const std::vector<CheckRow>& rows);
bool all_pass(const std::vector<CheckRow>& rows);

// ------------------------------------------------------------ properties

struct PropsOptions {
  std::string suite = "all";  // all | prop1 .. prop5 | network
  int trials = 1000;
  std::uint64_t seed = 7;
};

const std::vector<std::string>& prop_suite_names();

// {"suite", "seed", "ok", "checks": [{"name", "trials", "ok", "worst", "counterexample"?}]}
nlohmann::json run_props(const PropsOptions& opts);

// Exact maximizer of total_utility over rates on a grid of step h with
// sum(rates) <= budget, by dynamic programming over budget units.
struct GridOptimum {
  std::vector<double> rates;
  double objective = 0.0;
};
GridOptimum grid_allocation(const std::vector<Channel>& channels, double budget, double h);

// ------------------------------------------------------------ training

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunSummary summary;
  std::string dir;
};

struct TrainOutcome {
  std::string dir;
  std::vector<SeedOutcome> seeds;
  bool ok() const;
};

// Output root: $HIBCG_OUT when set, else cfg.output_dir.
std::string output_root(const RunConfig& cfg);

// Trains every seed of cfg into <root>/<name>/seed_<k>/ and writes
// <root>/<name>/aggregate.json. A diverging seed records diverged.txt and does
// not stop its siblings.
TrainOutcome train_config(const RunConfig& cfg, const std::string& root);

// Scales for one sweep ratio r = sigma_intra / sigma_cross. The smaller scale
// stays at base; the other is base * max(r, 1/r).
std::pair<double, double> sweep_scales(double ratio, double base);

struct SweepOutcome {
  std::string csv_path;
  std::vector<TrainOutcome> runs;
  bool ok() const;
};

SweepOutcome sweep_sigma(const RunConfig& cfg, const std::vector<double>& ratios,
                         const std::string& root);
std::vector<double> parse_ratio_list(const std::string& text);

// ------------------------------------------------------------ allocation

// Water-fills the channel file, verifies KKT and writes the CSV. Returns the
// KKT status.
bool allocate(const std::string& channels_path, double budget, std::ostream& out);

}  // namespace hibcg
