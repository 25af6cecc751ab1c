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

// The three-stage coordination-graph network: a group-aware initial graph,
// L layers of Gaussian structural encoders gating message passing (AIB), a
// per-agent Gaussian message code (XIB), shared per-agent Q-heads and a
// monotone state-conditioned mixer. Gradients are computed by an explicit
// reverse pass over a recorded trace.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "hibcg/groups.hpp"
#include "hibcg/kl.hpp"

namespace hibcg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Normalization { kSymmetric, kRow };
enum class Gating { kSigmoid, kHardThreshold };
enum class InitGraphMode { kGaussian, kRelaxed };

struct InitGraphOptions {
  InitGraphMode mode = InitGraphMode::kGaussian;
  double alpha = 0.1;        // weight of the co-group correlated component
  double eps = 0.1;          // i.i.d. edge noise variance
  double temperature = 0.5;  // relaxed-Bernoulli temperature
  Normalization normalization = Normalization::kSymmetric;
};

struct NetworkConfig {
  int num_agents = 6;
  int input_dim = 0;
  int state_dim = 0;
  int num_actions = 2;
  int message_dim = 8;
  int code_dim = 4;
  int q_hidden = 16;
  int layers = 1;
  Normalization normalization = Normalization::kSymmetric;
  Gating gating = Gating::kSigmoid;
  double hard_threshold = 0.6;
  double noise_scale = 1.0;  // delta in (0, 1]
  InitGraphOptions init_graph;
};

struct LayerParams {
  Mat enc_w1, enc_b1;    // (1 + 3d) x d, 1 x d
  Mat enc_wmu, enc_bmu;  // d x 1, 1 x 1
  Mat enc_wlv, enc_blv;  // d x 1, 1 x 1
  Mat msg_w;             // d x d
};

struct NetworkParams {
  Mat in_w, in_b;
  std::vector<LayerParams> layers;
  Mat xib_wmu, xib_bmu, xib_wlv, xib_blv;
  Mat q_w1, q_b1, q_w2, q_b2;
  Mat mix_ww, mix_bw, mix_wb, mix_bb;  // hypernetwork for mixer weights and bias

  static NetworkParams init(const NetworkConfig& cfg, const BlockPrior& prior,
                            std::mt19937_64& rng);
  NetworkParams zeros_like() const;

  template <class F>
  void for_each(F&& f) {
    f("in_w", in_w);
    f("in_b", in_b);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto& L = layers[l];
      f(p + "enc_w1", L.enc_w1);
      f(p + "enc_b1", L.enc_b1);
      f(p + "enc_wmu", L.enc_wmu);
      f(p + "enc_bmu", L.enc_bmu);
      f(p + "enc_wlv", L.enc_wlv);
      f(p + "enc_blv", L.enc_blv);
      f(p + "msg_w", L.msg_w);
    }
    f("xib_wmu", xib_wmu);
    f("xib_bmu", xib_bmu);
    f("xib_wlv", xib_wlv);
    f("xib_blv", xib_blv);
    f("q_w1", q_w1);
    f("q_b1", q_b1);
    f("q_w2", q_w2);
    f("q_b2", q_b2);
    f("mix_ww", mix_ww);
    f("mix_bw", mix_bw);
    f("mix_wb", mix_wb);
    f("mix_bb", mix_bb);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<NetworkParams*>(this)->for_each(
        [&f](const std::string& name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }

  std::size_t size() const;
  double squared_norm() const;
  void axpy(double a, const NetworkParams& x);  // this += a * x
  void scale(double a);
  bool operator==(const NetworkParams& o) const;
};

// Structured text dump: header, tensor count, then one `name rows cols`
// line followed by hex-float values per tensor. Round-trips bit-exactly.
void save_checkpoint(std::ostream& out, const NetworkParams& params);
NetworkParams load_checkpoint(std::istream& in);

struct SampleInput {
  Mat agent_inputs;  // n x input_dim
  Vec state;         // state_dim
  std::vector<int> actions;
};

// Everything random in one forward pass. Replaying the same noise reproduces
// the pass exactly.
struct SampleNoise {
  Mat init_graph;                // A0 after symmetrize + normalize
  std::vector<Vec> edge;         // per layer, n^2 standard normals
  Mat code;                      // n x code_dim standard normals
};

struct NormalizedAdjacency {
  Mat sym;   // (A + A^T) / 2
  Mat ahat;  // sym + I
  Vec deg;   // 1 + sum_j |sym_ij|
  Mat norm;
};

NormalizedAdjacency normalize_adjacency(const Mat& raw, Normalization mode);

struct LayerTrace {
  Mat feat;  // n^2 x (1 + 3d), rows in edge order i * n + j
  Mat hid;
  Vec mu, log_var, eps;
  Mat sampled;  // n x n reshaped draw before symmetrization
  NormalizedAdjacency adj;
  Mat gated;
  Mat zw;  // Z_prev * W
  Mat z;
};

struct SampleTrace {
  SampleInput input;
  SampleNoise noise;
  Mat z0;
  std::vector<LayerTrace> layers;
  Mat mu_x, log_var_x, z_out, tz;
  Mat q_in, q_hid, q;  // q: n x num_actions
  Vec w_pre, w;
  double b = 0.0;
  double q_tot = 0.0;
};

struct BatchTrace {
  std::vector<SampleTrace> samples;
};

// Stage 1 on its own: mean scores from the agent inputs, one draw, then
// symmetrize and normalize.
Mat stage1_init_graph(const Mat& agent_inputs, const GroupPartition& partition,
                      const InitGraphOptions& opts, std::mt19937_64& rng);
Mat stage1_init_graph(const Mat& agent_inputs, const GroupPartition& partition,
                      const InitGraphOptions& opts, std::uint64_t seed);
// Noise-free limit: normalize(sym(mu)).
Mat stage1_mean_graph(const Mat& agent_inputs, Normalization normalization);

struct Stage2Result {
  Mat z;
  Mat gated;
  KlBreakdown aib;
};

Stage2Result stage2_layer(const Mat& a0, const Mat& z_prev, const LayerParams& params,
                          const BlockPrior& prior, const EdgeBlockIndex& blocks,
                          double noise_scale, Normalization normalization, std::uint64_t seed);

struct Stage3Result {
  Mat z_out;
  std::vector<double> xib_per_agent;
};

Stage3Result stage3_xib(const Mat& z_last, const NetworkParams& params, double sigma_x0_sq,
                        std::uint64_t seed);

struct MixResult {
  Mat q;   // n x num_actions
  Vec w;   // nonnegative mixer weights
  double b;
  double q_tot;  // for the supplied actions
};

MixResult q_heads_and_mix(const Mat& agent_inputs, const Mat& z_out, const NetworkParams& params,
                          const Vec& state, const std::vector<int>& actions);

// Greedy joint action: per-agent argmax, exact under nonnegative mixing.
std::vector<int> greedy_actions(const Mat& q);

struct LossConfig {
  double lambda_a_dim = 0.0;
  double lambda_x_dim = 0.0;
  double lambda_g = 0.0;
  int warmup_steps = 0;
  bool block_size_scaling = true;  // lambda_A^(l,g) = lambda_a_dim * k_{l,g}
  double intra_weight = 1.0;
  double cross_weight = 1.0;
};

struct LossReport {
  double td = 0.0;
  double group_loss = 0.0;
  double lambda_g = 0.0;
  std::vector<std::vector<double>> aib;       // [layer][block], batch mean
  std::vector<std::vector<double>> lambda_a;  // [layer][block], warmup applied
  std::vector<double> xib;                    // per agent, batch mean
  double lambda_x = 0.0;
  double total = 0.0;

  double recompute_total() const;
  double aib_total() const;
  double xib_total() const;
  double aib_kind_total(const EdgeBlockIndex& blocks, bool intra) const;
  double aib_penalty() const;
};

// Linear ramp factor min(1, step / warmup_steps).
double warmup_factor(int step, int warmup_steps);

std::vector<std::vector<double>> block_weights(const LossConfig& cfg, const EdgeBlockIndex& blocks,
                                               int layers, int step);

LossReport assemble_loss_from_parts(double td, std::vector<std::vector<double>> aib,
                                    std::vector<double> xib, const LossConfig& cfg,
                                    const EdgeBlockIndex& blocks, int step);

class HibcgNetwork {
 public:
  HibcgNetwork(NetworkConfig cfg, GroupPartition partition, BlockPrior prior);

  const NetworkConfig& config() const { return cfg_; }
  const GroupPartition& partition() const { return partition_; }
  const EdgeBlockIndex& blocks() const { return blocks_; }
  const BlockPrior& prior() const { return prior_; }

  NetworkParams init_params(std::mt19937_64& rng) const;

  SampleNoise draw_noise(const SampleInput& in, std::mt19937_64& rng) const;
  SampleNoise zero_noise(const SampleInput& in) const;

  SampleTrace forward(const NetworkParams& params, const SampleInput& in,
                      const SampleNoise& noise) const;

  // Per-sample AIB breakdown for one layer of a trace.
  KlBreakdown layer_aib(const SampleTrace& t, int layer) const;
  std::vector<double> sample_xib(const SampleTrace& t) const;

  LossReport assemble_loss(const BatchTrace& trace, const std::vector<double>& targets,
                           const LossConfig& cfg, int step) const;

  NetworkParams backward(const BatchTrace& trace, const std::vector<double>& targets,
                         const LossReport& report, const NetworkParams& params) const;

  // Total loss of a batch under fixed noise; used for finite differences.
  double batch_loss(const NetworkParams& params, const std::vector<SampleInput>& inputs,
                    const std::vector<SampleNoise>& noise, const std::vector<double>& targets,
                    const LossConfig& cfg, int step) const;

 private:
  NetworkConfig cfg_;
  GroupPartition partition_;
  EdgeBlockIndex blocks_;
  BlockPrior prior_;
};

}  // namespace hibcg
