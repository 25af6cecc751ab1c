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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hibcg/config.hpp"
#include "hibcg/network.hpp"
#include "json.hpp"

namespace hibcg {

struct StepRow {
  int step = 0;
  double td = 0.0;
  double aib_total = 0.0;
  double aib_intra = 0.0;
  double aib_cross = 0.0;
  double xib_total = 0.0;
  double episode_return = 0.0;  // most recent finished training episode
  double eps = 0.0;
};

struct BlockRow {
  int step = 0;
  int layer = 0;
  int block = 0;
  double kl = 0.0;
  double lambda = 0.0;
};

struct EpisodeRecord {
  int step = 0;  // environment step at which the episode ended
  double value = 0.0;
};

struct RunSummary {
  std::string name;
  std::uint64_t seed = 0;
  int steps = 0;
  int updates = 0;
  int episodes = 0;
  int tail_start_step = 0;
  double tail_td = 0.0;
  double tail_train_return = 0.0;  // per episode
  double tail_eval_return = 0.0;   // per episode, greedy noise-free policy
  double tail_train_return_per_step = 0.0;
  double tail_eval_return_per_step = 0.0;
  double tail_intra_kl_per_edge = 0.0;
  double tail_cross_kl_per_edge = 0.0;
  double cross_intra_ratio = 0.0;
  double oracle_no_comm_per_step = 0.0;
  double max_reward_per_step = 0.0;
  double final_param_norm = 0.0;
};

struct RunLog {
  std::vector<StepRow> rows;
  std::vector<BlockRow> blocks;
  std::vector<EpisodeRecord> train_returns;
  std::vector<EpisodeRecord> eval_returns;  // mean over eval_episodes at each eval point
  RunSummary summary;
  NetworkParams params;
};

// Epsilon for environment step `step`: linear from eps_start to eps_end over
// the first eps_decay_fraction of training, then flat.
double epsilon_at(const TrainingSection& t, int step);

// Trains one seed. Throws NumericError with a diagnostic dump if the loss
// stops being finite.
RunLog train(const RunConfig& cfg, std::uint64_t seed);

void write_step_csv(std::ostream& out, const std::vector<StepRow>& rows);
void write_block_csv(std::ostream& out, const std::vector<BlockRow>& rows,
                     const EdgeBlockIndex& blocks);
nlohmann::json summary_to_json(const RunSummary& s);

// log.csv, blocks.csv, returns.csv, summary.json and checkpoint.txt in `dir`.
void write_run_artifacts(const RunLog& log, const RunConfig& cfg, const std::string& dir);

}  // namespace hibcg
