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

#include "hibcg/game.hpp"

#include <algorithm>
#include <cmath>

#include "hibcg/errors.hpp"

namespace hibcg {

HiddenBitGame::HiddenBitGame(GameConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.episode_length >= 1, "HiddenBitGame: episode length must be positive");
  require(cfg_.p_obs >= 0.0 && cfg_.p_obs <= 1.0, "HiddenBitGame: p_obs outside [0, 1]");
  require(cfg_.gamma >= 0.0 && cfg_.gamma <= 1.0, "HiddenBitGame: gamma outside [0, 1]");
}

void HiddenBitGame::resample(GameState& s, std::mt19937_64& rng) const {
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution look(cfg_.p_obs);
  for (auto& b : s.bits) b = coin(rng) ? 1 : 0;
  for (auto& v : s.seen) v = look(rng) ? 1 : 0;
}

GameState HiddenBitGame::reset(std::mt19937_64& rng) const {
  GameState s;
  s.bits.assign(static_cast<std::size_t>(num_groups()), 0);
  s.seen.assign(static_cast<std::size_t>(num_agents()), 0);
  s.last_action.assign(static_cast<std::size_t>(num_agents()), -1);
  resample(s, rng);
  return s;
}

Observation HiddenBitGame::observe(const GameState& s) const {
  const int n = num_agents();
  Observation o;
  o.agent_inputs = Eigen::MatrixXd::Zero(n, input_dim());
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int seen = s.seen[k];
    o.agent_inputs(i, 0) = seen * s.bits[static_cast<std::size_t>(cfg_.partition.group_of(i))];
    o.agent_inputs(i, 1) = seen;
    if (s.last_action[k] >= 0) o.agent_inputs(i, 2 + s.last_action[k]) = 1.0;
    o.agent_inputs(i, 4 + i) = 1.0;
  }
  o.state.resize(state_dim());
  for (int g = 0; g < num_groups(); ++g) o.state(g) = s.bits[static_cast<std::size_t>(g)];
  o.state(num_groups()) = static_cast<double>(s.step) / cfg_.episode_length;
  return o;
}

double HiddenBitGame::reward(const std::vector<int>& bits, const std::vector<int>& actions) const {
  require(static_cast<int>(bits.size()) == num_groups(), "reward: one bit per group");
  require(static_cast<int>(actions.size()) == num_agents(), "reward: one action per agent");
  std::vector<int> matched(bits.size(), 1);
  for (int i = 0; i < num_agents(); ++i) {
    const int g = cfg_.partition.group_of(i);
    if (actions[static_cast<std::size_t>(i)] != bits[static_cast<std::size_t>(g)])
      matched[static_cast<std::size_t>(g)] = 0;
  }
  double r = 0.0;
  for (int m : matched) r += m;
  return r;
}

Transition HiddenBitGame::env_step(GameState& s, const std::vector<int>& actions,
                                   std::mt19937_64& rng) const {
  require(!s.done, "env_step: episode already done");
  require(static_cast<int>(actions.size()) == num_agents(), "env_step: one action per agent");
  for (int a : actions) require(a == 0 || a == 1, "env_step: actions must be 0 or 1");
  Transition t;
  t.obs = observe(s);
  t.actions = actions;
  t.reward = reward(s.bits, actions);
  t.step = s.step;
  s.last_action = actions;
  ++s.step;
  s.done = s.step >= cfg_.episode_length;
  resample(s, rng);
  t.next_obs = observe(s);
  t.done = s.done;
  return t;
}

double oracle_value(const GameConfig& cfg) {
  require(cfg.p_obs >= 0.0 && cfg.p_obs <= 1.0, "oracle_value: p_obs outside [0, 1]");
  const double p = cfg.p_obs;
  double total = 0.0;
  for (int g = 0; g < cfg.partition.num_groups(); ++g) {
    const int k = static_cast<int>(cfg.partition.members(g).size());
    require(k <= 8, "oracle_value: group too large to enumerate");
    // Policy of one agent: bit 0 = action when unseen, bit 1 = seen 0, bit 2 = seen 1.
    const long profiles = 1L << (3 * k);
    double best = 0.0;
    for (long prof = 0; prof < profiles; ++prof) {
      double value = 0.0;
      for (int bit = 0; bit < 2; ++bit) {
        for (int mask = 0; mask < (1 << k); ++mask) {
          double prob = 0.5;
          bool ok = true;
          for (int a = 0; a < k; ++a) {
            const int seen = (mask >> a) & 1;
            prob *= seen ? p : 1.0 - p;
            const int pol = static_cast<int>((prof >> (3 * a)) & 7);
            const int slot = seen ? 1 + bit : 0;
            if (((pol >> slot) & 1) != bit) ok = false;
          }
          if (ok) value += prob;
        }
      }
      best = std::max(best, value);
    }
    total += best;
  }
  return total;
}

double observation_bit_mutual_information(const GameConfig& cfg, int agent, int group) {
  require(agent >= 0 && agent < cfg.partition.num_agents(), "mutual information: bad agent");
  require(group >= 0 && group < cfg.partition.num_groups(), "mutual information: bad group");
  const bool own = cfg.partition.group_of(agent) == group;
  // Joint over (observation in {unseen, seen0, seen1}) x (bit of `group`),
  // marginalizing the agent's own group bit when it differs.
  double joint[3][2] = {};
  for (int own_bit = 0; own_bit < 2; ++own_bit) {
    for (int b = 0; b < 2; ++b) {
      if (own && own_bit != b) continue;
      const double pb = own ? 0.5 : 0.25;
      joint[0][b] += pb * (1.0 - cfg.p_obs);
      joint[1 + own_bit][b] += pb * cfg.p_obs;
    }
  }
  double mi = 0.0;
  for (int o = 0; o < 3; ++o) {
    const double po = joint[o][0] + joint[o][1];
    for (int b = 0; b < 2; ++b) {
      const double pob = joint[o][b];
      if (pob > 0.0) mi += pob * std::log(pob / (po * 0.5));
    }
  }
  return mi;
}

Eigen::MatrixXd immediate_reward_table(const GameConfig& cfg) {
  const int n = cfg.partition.num_agents();
  const int m = cfg.partition.num_groups();
  require(n <= 16, "immediate_reward_table: too many agents to enumerate");
  HiddenBitGame game(cfg);
  Eigen::MatrixXd table(1 << m, 1 << n);
  std::vector<int> bits(static_cast<std::size_t>(m)), actions(static_cast<std::size_t>(n));
  for (int s = 0; s < (1 << m); ++s) {
    for (int g = 0; g < m; ++g) bits[static_cast<std::size_t>(g)] = (s >> g) & 1;
    for (int u = 0; u < (1 << n); ++u) {
      for (int i = 0; i < n; ++i) actions[static_cast<std::size_t>(i)] = (u >> i) & 1;
      table(s, u) = game.reward(bits, actions);
    }
  }
  return table;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity_episodes, std::uint64_t seed)
    : capacity_(capacity_episodes), rng_(seed) {
  require(capacity_ >= 1, "ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add_episode(std::vector<Transition> episode) {
  require(!episode.empty(), "ReplayBuffer: empty episode");
  transitions_ += episode.size();
  if (episodes_.size() < capacity_) {
    episodes_.push_back(std::move(episode));
  } else {
    transitions_ -= episodes_[next_].size();
    episodes_[next_] = std::move(episode);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch) {
  require(transitions_ > 0, "ReplayBuffer: sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, transitions_ - 1);
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    std::size_t k = pick(rng_);
    for (const auto& ep : episodes_) {
      if (k < ep.size()) {
        out.push_back(&ep[k]);
        break;
      }
      k -= ep.size();
    }
  }
  return out;
}

}  // namespace hibcg
