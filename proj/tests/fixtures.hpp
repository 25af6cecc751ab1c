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

// Small randomized networks and batches shared by the unit tests and the
// acceptance binary.

#include <cstdint>
#include <random>
#include <vector>

#include "hibcg/groups.hpp"
#include "hibcg/network.hpp"
#include "hibcg/priors.hpp"

namespace fixture {

struct TinyProblem {
  hibcg::HibcgNetwork net;
  hibcg::NetworkParams params;
  std::vector<hibcg::SampleInput> inputs;
  std::vector<hibcg::SampleNoise> noise;
  std::vector<double> targets;
  hibcg::LossConfig loss;
};

// n = 3 agents in groups {0}, {1, 2}; one layer; message width 4. Parameters
// are jittered away from the initializer so no gradient is trivially zero.
inline TinyProblem tiny_problem(std::uint64_t seed, int batch = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);

  hibcg::NetworkConfig cfg;
  cfg.num_agents = 3;
  cfg.input_dim = 5;
  cfg.state_dim = 3;
  cfg.num_actions = 2;
  cfg.message_dim = 4;
  cfg.code_dim = 3;
  cfg.q_hidden = 5;
  cfg.layers = 1;
  cfg.noise_scale = 0.7;
  const auto part = hibcg::GroupPartition::from_sizes({1, 2});
  const hibcg::EdgeBlockIndex blocks(part);
  const auto prior = hibcg::group_prior(blocks, 0.5, 0.05, 1.0);
  hibcg::HibcgNetwork net(cfg, part, prior);

  hibcg::NetworkParams params = net.init_params(rng);
  params.for_each([&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += 0.3 * g(rng);
  });

  std::vector<hibcg::SampleInput> inputs;
  std::vector<hibcg::SampleNoise> noise;
  std::vector<double> targets;
  for (int s = 0; s < batch; ++s) {
    hibcg::SampleInput in;
    in.agent_inputs = Eigen::MatrixXd(cfg.num_agents, cfg.input_dim);
    for (Eigen::Index k = 0; k < in.agent_inputs.size(); ++k) in.agent_inputs.data()[k] = g(rng);
    in.state = Eigen::VectorXd(cfg.state_dim);
    for (Eigen::Index k = 0; k < in.state.size(); ++k) in.state[k] = g(rng);
    for (int i = 0; i < cfg.num_agents; ++i) in.actions.push_back(coin(rng));
    noise.push_back(net.draw_noise(in, rng));
    inputs.push_back(std::move(in));
    targets.push_back(g(rng));
  }

  hibcg::LossConfig loss;
  loss.lambda_a_dim = 0.05;
  loss.lambda_x_dim = 0.03;
  loss.warmup_steps = 10;
  loss.cross_weight = 2.0;
  return {std::move(net), std::move(params), std::move(inputs), std::move(noise),
          std::move(targets), loss};
}

inline hibcg::NetworkParams analytic_gradient(const TinyProblem& p, int step) {
  hibcg::BatchTrace bt;
  for (std::size_t s = 0; s < p.inputs.size(); ++s)
    bt.samples.push_back(p.net.forward(p.params, p.inputs[s], p.noise[s]));
  const auto report = p.net.assemble_loss(bt, p.targets, p.loss, step);
  return p.net.backward(bt, p.targets, report, p.params);
}

}  // namespace fixture
