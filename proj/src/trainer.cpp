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

#include "hibcg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hibcg/errors.hpp"
#include "hibcg/game.hpp"

namespace hibcg {
namespace {

enum Stream : std::uint32_t { kInit = 1, kEnv, kAct, kNoise, kReplay, kEval };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return stream_rng(seed, s)(); }

// Value of the greedy joint action under the target parameters.
double greedy_value(const HibcgNetwork& net, const NetworkParams& params, const Observation& obs) {
  SampleInput in{obs.agent_inputs, obs.state, {}};
  const auto t = net.forward(params, in, net.zero_noise(in));
  double v = t.b;
  for (Eigen::Index i = 0; i < t.q.rows(); ++i) v += t.w(i) * t.q.row(i).maxCoeff();
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double epsilon_at(const TrainingSection& t, int step) {
  const double span = t.eps_decay_fraction * t.steps;
  if (span <= 0.0) return t.eps_end;
  const double frac = std::clamp(static_cast<double>(step) / span, 0.0, 1.0);
  return t.eps_start + (t.eps_end - t.eps_start) * frac;
}

RunLog train(const RunConfig& cfg, std::uint64_t seed) {
  const auto& tc = cfg.training;
  const HiddenBitGame game(make_game_config(cfg));
  const NetworkConfig ncfg = make_network_config(cfg, game);
  const EdgeBlockIndex blocks(game.config().partition);
  const HibcgNetwork net(ncfg, game.config().partition, make_block_prior(cfg, blocks));
  const LossConfig loss_cfg = make_loss_config(cfg);
  const int n = game.num_agents();
  const double T = game.config().episode_length;
  const double gamma = game.config().gamma;

  auto init_rng = stream_rng(seed, kInit);
  auto env_rng = stream_rng(seed, kEnv);
  auto act_rng = stream_rng(seed, kAct);
  auto noise_rng = stream_rng(seed, kNoise);
  auto eval_rng = stream_rng(seed, kEval);
  ReplayBuffer buffer(static_cast<std::size_t>(tc.buffer_episodes), stream_seed(seed, kReplay));

  RunLog log;
  NetworkParams params = net.init_params(init_rng);
  NetworkParams target = params;
  NetworkParams velocity = params.zeros_like();

  const int tail_start = static_cast<int>(std::floor(tc.steps * (1.0 - tc.tail_fraction)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  GameState state = game.reset(env_rng);
  std::vector<Transition> episode;
  double episode_return = 0.0;
  double last_return = 0.0;
  int updates = 0;

  int step = 0;
  try {
    for (; step < tc.steps; ++step) {
      const double eps = epsilon_at(tc, step);
      const Observation obs = game.observe(state);
      SampleInput act_in{obs.agent_inputs, obs.state, {}};
      const auto act_trace = net.forward(params, act_in, net.draw_noise(act_in, act_rng));
      std::vector<int> actions = greedy_actions(act_trace.q);
      for (int i = 0; i < n; ++i)
        if (unif(act_rng) < eps) actions[static_cast<std::size_t>(i)] = coin(act_rng) ? 1 : 0;

      Transition tr = game.env_step(state, actions, env_rng);
      episode_return += tr.reward;
      const bool done = tr.done;
      episode.push_back(std::move(tr));
      if (done) {
        buffer.add_episode(std::move(episode));
        episode.clear();
        log.train_returns.push_back({step, episode_return});
        last_return = episode_return;
        episode_return = 0.0;
        state = game.reset(env_rng);
      }

      const auto ready = static_cast<std::size_t>(std::max(tc.learning_starts, tc.batch_size));
      if (buffer.num_transitions() >= ready) {
        const auto batch = buffer.sample(static_cast<std::size_t>(tc.batch_size));
        std::vector<double> targets;
        BatchTrace bt;
        for (const Transition* t : batch) {
          double y = t->reward;
          if (!t->done) y += gamma * greedy_value(net, target, t->next_obs);
          targets.push_back(y);
          SampleInput in{t->obs.agent_inputs, t->obs.state, t->actions};
          bt.samples.push_back(net.forward(params, in, net.draw_noise(in, noise_rng)));
        }
        const LossReport report = net.assemble_loss(bt, targets, loss_cfg, updates);
        if (!std::isfinite(report.total)) {
          std::ostringstream diag;
          diag << "training diverged: seed=" << seed << " step=" << step << " update=" << updates
               << " td=" << report.td << " aib=" << report.aib_total()
               << " xib=" << report.xib_total()
               << " param_norm=" << std::sqrt(params.squared_norm());
          throw NumericError(diag.str());
        }
        NetworkParams grad = net.backward(bt, targets, report, params);
        const double gnorm = std::sqrt(grad.squared_norm());
        if (!std::isfinite(gnorm)) {
          std::ostringstream diag;
          diag << "training diverged: non-finite gradient at seed=" << seed << " step=" << step
               << " td=" << report.td;
          throw NumericError(diag.str());
        }
        if (gnorm > tc.grad_clip) grad.scale(tc.grad_clip / gnorm);
        velocity.scale(tc.momentum);
        velocity.axpy(1.0, grad);
        params.axpy(-tc.lr, velocity);
        ++updates;
        if (updates % tc.target_interval == 0) target = params;

        StepRow row;
        row.step = step;
        row.td = report.td;
        row.aib_total = report.aib_total();
        row.aib_intra = report.aib_kind_total(blocks, true);
        row.aib_cross = report.aib_kind_total(blocks, false);
        row.xib_total = report.xib_total();
        row.episode_return = last_return;
        row.eps = eps;
        log.rows.push_back(row);
        for (std::size_t l = 0; l < report.aib.size(); ++l)
          for (std::size_t b = 0; b < report.aib[l].size(); ++b)
            log.blocks.push_back({step, static_cast<int>(l), static_cast<int>(b), report.aib[l][b],
                                  report.lambda_a[l][b]});
      }

      if (step >= tail_start && (step + 1) % tc.eval_interval == 0 && tc.eval_episodes > 0) {
        double total = 0.0;
        for (int e = 0; e < tc.eval_episodes; ++e) {
          GameState es = game.reset(eval_rng);
          while (!es.done) {
            const Observation eo = game.observe(es);
            SampleInput in{eo.agent_inputs, eo.state, {}};
            const auto et = net.forward(params, in, net.zero_noise(in));
            total += game.env_step(es, greedy_actions(et.q), eval_rng).reward;
          }
        }
        log.eval_returns.push_back({step, total / tc.eval_episodes});
      }
    }
  } catch (const NumericError& e) {
    if (std::string(e.what()).rfind("training diverged", 0) == 0) throw;
    std::ostringstream diag;
    diag << "training diverged: seed=" << seed << " step=" << step << " updates=" << updates
         << " param_norm=" << std::sqrt(params.squared_norm()) << ": " << e.what();
    throw NumericError(diag.str());
  }

  auto& s = log.summary;
  s.name = cfg.name;
  s.seed = seed;
  s.steps = tc.steps;
  s.updates = updates;
  s.episodes = static_cast<int>(log.train_returns.size());
  s.tail_start_step = tail_start;
  std::vector<double> td, intra, cross, train_ret, eval_ret;
  const double layers = ncfg.layers;
  for (const auto& r : log.rows) {
    if (r.step < tail_start) continue;
    td.push_back(r.td);
    intra.push_back(r.aib_intra / (layers * blocks.intra_edge_count()));
    cross.push_back(r.aib_cross / (layers * std::max(1, blocks.cross_edge_count())));
  }
  for (const auto& r : log.train_returns)
    if (r.step >= tail_start) train_ret.push_back(r.value);
  for (const auto& r : log.eval_returns) eval_ret.push_back(r.value);
  s.tail_td = mean_of(td);
  s.tail_intra_kl_per_edge = mean_of(intra);
  s.tail_cross_kl_per_edge = mean_of(cross);
  s.cross_intra_ratio =
      s.tail_intra_kl_per_edge > 0.0 ? s.tail_cross_kl_per_edge / s.tail_intra_kl_per_edge : 0.0;
  s.tail_train_return = mean_of(train_ret);
  s.tail_eval_return = mean_of(eval_ret);
  s.tail_train_return_per_step = s.tail_train_return / T;
  s.tail_eval_return_per_step = s.tail_eval_return / T;
  s.oracle_no_comm_per_step = oracle_value(game.config());
  s.max_reward_per_step = game.num_groups();
  s.final_param_norm = std::sqrt(params.squared_norm());
  log.params = std::move(params);
  return log;
}

void write_step_csv(std::ostream& out, const std::vector<StepRow>& rows) {
  out << "step,td,aib_total,aib_intra,aib_cross,xib_total,return,eps\n";
  for (const auto& r : rows) {
    out << r.step << ',' << fmt(r.td) << ',' << fmt(r.aib_total) << ',' << fmt(r.aib_intra) << ','
        << fmt(r.aib_cross) << ',' << fmt(r.xib_total) << ',' << fmt(r.episode_return) << ','
        << fmt(r.eps) << '\n';
  }
}

void write_block_csv(std::ostream& out, const std::vector<BlockRow>& rows,
                     const EdgeBlockIndex& blocks) {
  out << "step,layer,block,kind,size,kl,lambda\n";
  for (const auto& r : rows) {
    const auto& b = blocks.block(r.block);
    out << r.step << ',' << r.layer << ',' << r.block << ',' << (b.intra() ? "intra" : "cross")
        << ',' << b.size() << ',' << fmt(r.kl) << ',' << fmt(r.lambda) << '\n';
  }
}

nlohmann::json summary_to_json(const RunSummary& s) {
  return {{"name", s.name},
          {"seed", s.seed},
          {"steps", s.steps},
          {"updates", s.updates},
          {"episodes", s.episodes},
          {"tail_start_step", s.tail_start_step},
          {"tail_td", s.tail_td},
          {"tail_train_return", s.tail_train_return},
          {"tail_eval_return", s.tail_eval_return},
          {"tail_train_return_per_step", s.tail_train_return_per_step},
          {"tail_eval_return_per_step", s.tail_eval_return_per_step},
          {"tail_intra_kl_per_edge", s.tail_intra_kl_per_edge},
          {"tail_cross_kl_per_edge", s.tail_cross_kl_per_edge},
          {"cross_intra_ratio", s.cross_intra_ratio},
          {"oracle_no_comm_per_step", s.oracle_no_comm_per_step},
          {"max_reward_per_step", s.max_reward_per_step},
          {"final_param_norm", s.final_param_norm}};
}

void write_run_artifacts(const RunLog& log, const RunConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const EdgeBlockIndex blocks(GroupPartition::from_sizes(cfg.env.groups));
  auto open = [&dir](const char* name) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw ConfigError(std::string("cannot write ") + name + " under " + dir);
    return f;
  };
  {
    auto f = open("log.csv");
    write_step_csv(f, log.rows);
  }
  {
    auto f = open("blocks.csv");
    write_block_csv(f, log.blocks, blocks);
  }
  {
    auto f = open("returns.csv");
    f << "kind,step,return\n";
    for (const auto& r : log.train_returns) f << "train," << r.step << ',' << fmt(r.value) << '\n';
    for (const auto& r : log.eval_returns) f << "eval," << r.step << ',' << fmt(r.value) << '\n';
  }
  {
    auto f = open("summary.json");
    f << summary_to_json(log.summary).dump(2) << '\n';
  }
  {
    auto f = open("checkpoint.txt");
    save_checkpoint(f, log.params);
  }
}

}  // namespace hibcg
