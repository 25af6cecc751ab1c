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
#include <string>
#include <vector>

#include "hibcg/game.hpp"
#include "hibcg/network.hpp"
#include "hibcg/priors.hpp"
#include "json.hpp"

namespace hibcg {

struct EnvSection {
  int n = 6;
  std::vector<int> groups{3, 3};  // group sizes, agents assigned in order
  int episode_length = 8;
  double p_obs = 0.8;
  double gamma = 0.99;

  bool operator==(const EnvSection&) const = default;
};

struct NetworkSection {
  int layers = 1;
  int message_dim = 8;
  int code_dim = 4;
  int q_hidden = 16;
  std::string normalization = "symmetric";  // symmetric | row
  std::string gating = "sigmoid";           // sigmoid | hard
  double hard_threshold = 0.6;
  double noise_scale = 1.0;
  std::string init_graph = "gaussian";  // gaussian | relaxed
  double init_alpha = 0.1;
  double init_eps = 0.1;
  double temperature = 0.5;

  bool operator==(const NetworkSection&) const = default;
};

struct PriorSection {
  double sigma_intra = 0.1;
  double sigma_cross = 0.01;
  double sigma_x0 = 1.0;
  std::string units = "std";  // std | var

  bool operator==(const PriorSection&) const = default;
};

struct LossSection {
  double lambda_a_dim = 1e-3;
  double lambda_x_dim = 1e-3;
  double lambda_g = 0.0;
  int warmup_steps = 500;
  bool block_size_scaling = true;
  double intra_weight = 1.0;
  double cross_weight = 1.0;
  bool xib_per_layer = false;  // reserved; only the final layer is penalized

  bool operator==(const LossSection&) const = default;
};

struct TrainingSection {
  int steps = 6000;
  int batch_size = 32;
  double lr = 0.001;
  double momentum = 0.9;
  double grad_clip = 10.0;
  int buffer_episodes = 1000;
  int target_interval = 200;
  int learning_starts = 256;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.2;
  int eval_interval = 100;
  int eval_episodes = 10;
  double tail_fraction = 0.1;

  bool operator==(const TrainingSection&) const = default;
};

struct RunConfig {
  std::string name = "run";
  EnvSection env;
  NetworkSection network;
  PriorSection prior;
  LossSection loss;
  TrainingSection training;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "runs";
  int workers = 1;

  bool operator==(const RunConfig&) const = default;
};


// Validates against the schema: every field typed, no unknown keys, all
// scales positive, at least one layer. Missing keys take defaults.
// Errors are ConfigError naming the offending path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// The schema as JSON Schema draft-07, for external tooling.
nlohmann::json config_schema();

GameConfig make_game_config(const RunConfig& cfg);
NetworkConfig make_network_config(const RunConfig& cfg, const HiddenBitGame& game);
BlockPrior make_block_prior(const RunConfig& cfg, const EdgeBlockIndex& blocks);
LossConfig make_loss_config(const RunConfig& cfg);

}  // namespace hibcg
