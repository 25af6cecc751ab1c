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

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "hibcg/errors.hpp"
#include "hibcg/harness.hpp"

namespace {

int run_verify(const std::string& corrupt) {
  hibcg::VerifyOptions opts;
  opts.corrupt_row = corrupt;
  const auto rows = hibcg::verify_worked_example(opts);
  hibcg::print_check_table(std::cout, rows);
  bool ok = true;
  for (const auto& r : rows) {
    if (!r.pass) {
      std::cerr << "mismatch: " << r.id << " computed " << r.computed << " published " << r.expected
                << '\n';
      ok = false;
    }
  }
  return ok ? 0 : 1;
}

int run_train(const std::string& path) {
  const auto cfg = hibcg::load_config(path);
  const auto out = hibcg::train_config(cfg, hibcg::output_root(cfg));
  for (const auto& s : out.seeds) {
    if (s.ok) {
      std::cout << "seed " << s.seed << ": eval return/step " << s.summary.tail_eval_return_per_step
                << ", intra KL/edge " << s.summary.tail_intra_kl_per_edge << ", cross KL/edge "
                << s.summary.tail_cross_kl_per_edge << "  -> " << s.dir << '\n';
    } else {
      std::cerr << "seed " << s.seed << " failed: " << s.error << '\n';
    }
  }
  return out.ok() ? 0 : 1;
}

int run_sweep(const std::string& path, const std::vector<std::string>& ratio_args) {
  const auto cfg = hibcg::load_config(path);
  std::vector<double> ratios;
  for (const auto& a : ratio_args) {
    const auto part = hibcg::parse_ratio_list(a);
    ratios.insert(ratios.end(), part.begin(), part.end());
  }
  const auto out = hibcg::sweep_sigma(cfg, ratios, hibcg::output_root(cfg));
  std::cout << out.csv_path << '\n';
  return out.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-aware information-bottleneck coordination graphs"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "Recompute the worked example and compare");
  verify->require_subcommand(1);
  auto* worked = verify->add_subcommand("appendix-e", "10-agent group prior worked example");
  std::string corrupt;
  worked->add_option("--corrupt", corrupt, "Perturb one published constant (self-test)");

  auto* props = app.add_subcommand("props", "Run property suites and print a JSON report");
  hibcg::PropsOptions popts;
  props->add_option("suite", popts.suite, "all, prop1..prop5 or network")->capture_default_str();
  props->add_option("--trials", popts.trials, "Cases per check")->capture_default_str();
  props->add_option("--seed", popts.seed, "Generator seed")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train every seed of a config");
  std::string train_cfg;
  train->add_option("config", train_cfg, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep-sigma", "Train across sigma_intra/sigma_cross ratios");
  std::string sweep_cfg;
  std::vector<std::string> ratios;
  sweep->add_option("config", sweep_cfg, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("ratios", ratios, "Ratios, comma or space separated")->required();

  auto* alloc = app.add_subcommand("allocate", "Water-fill a channel file");
  std::string channels;
  double budget = 0.0;
  alloc->add_option("channels", channels, "Channel file")->required()->check(CLI::ExistingFile);
  alloc->add_option("budget", budget, "Total rate budget (nats)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return run_verify(corrupt);
    if (*props) {
      const auto report = hibcg::run_props(popts);
      std::cout << report.dump(2) << '\n';
      return report["ok"].get<bool>() ? 0 : 1;
    }
    if (*train) return run_train(train_cfg);
    if (*sweep) return run_sweep(sweep_cfg, ratios);
    if (*alloc) return hibcg::allocate(channels, budget, std::cout) ? 0 : 1;
  } catch (const hibcg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
