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

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "hibcg/groups.hpp"

namespace hibcg {

struct GameConfig {
  GroupPartition partition = GroupPartition::from_sizes({3, 3});
  int episode_length = 8;
  double p_obs = 0.8;
  double gamma = 0.99;
};

// Live episode state. Bits and observation masks are those the agents act on
// at `step`.
struct GameState {
  std::vector<int> bits;       // per group
  std::vector<int> seen;       // per agent
  std::vector<int> last_action;  // -1 before the first step
  int step = 0;
  bool done = false;
};

struct Observation {
  Eigen::MatrixXd agent_inputs;  // n x input_dim
  Eigen::VectorXd state;         // group bits, then step / T
};

struct Transition {
  Observation obs;
  std::vector<int> actions;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
  int step = 0;
};

// Cooperative hidden-bit matching game. Each group shares a fresh uniform bit
// per step; agents see their own group's bit with probability p_obs and are
// rewarded one unit per group whose members all play that bit.
class HiddenBitGame {
 public:
  explicit HiddenBitGame(GameConfig cfg);

  const GameConfig& config() const { return cfg_; }
  int num_agents() const { return cfg_.partition.num_agents(); }
  int num_groups() const { return cfg_.partition.num_groups(); }
  int num_actions() const { return 2; }
  // [bit * seen, seen] + last-action one-hot + agent-id one-hot.
  int input_dim() const { return 4 + num_agents(); }
  int state_dim() const { return num_groups() + 1; }

  GameState reset(std::mt19937_64& rng) const;
  Observation observe(const GameState& s) const;
  double reward(const std::vector<int>& bits, const std::vector<int>& actions) const;
  Transition env_step(GameState& s, const std::vector<int>& actions, std::mt19937_64& rng) const;

 private:
  void resample(GameState& s, std::mt19937_64& rng) const;

  GameConfig cfg_;
};

// Expected per-step reward of the best memoryless policy without
// communication: each agent maps {unseen, seen 0, seen 1} to an action.
// Groups are independent, so each group's policy profile is enumerated
// separately against all bits and observation masks.
double oracle_value(const GameConfig& cfg);

// I(o_i ; b_g) in nats from the exact joint of agent i's observation and
// group g's bit.
double observation_bit_mutual_information(const GameConfig& cfg, int agent, int group);

// Immediate team reward for every joint action in every bit configuration:
// row = bits encoded little-endian over groups, column = joint action
// encoded little-endian over agents.
Eigen::MatrixXd immediate_reward_table(const GameConfig& cfg);

// Ring buffer of whole episodes with a private seeded sampler.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity_episodes, std::uint64_t seed);

  void add_episode(std::vector<Transition> episode);
  std::size_t num_episodes() const { return episodes_.size(); }
  std::size_t num_transitions() const { return transitions_; }
  std::size_t capacity() const { return capacity_; }

  // Uniform over stored transitions, with replacement.
  std::vector<const Transition*> sample(std::size_t batch);

 private:
  std::size_t capacity_;
  std::vector<std::vector<Transition>> episodes_;
  std::size_t next_ = 0;
  std::size_t transitions_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace hibcg
