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

#include "hibcg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "hibcg/errors.hpp"

namespace hibcg {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sign(double x) { return (x > 0.0) - (x < 0.0); }

Mat add_bias(const Mat& m, const Mat& b) { return m.rowwise() + b.row(0); }

Mat tanh_of(const Mat& m) { return m.array().tanh().matrix(); }

// d tanh given its output.
Mat tanh_grad(const Mat& y, const Mat& dy) {
  return (dy.array() * (1.0 - y.array().square())).matrix();
}

Mat gaussian_init(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

void check_finite(const Mat& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

std::mt19937_64 seeded(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

Vec standard_normals(Eigen::Index k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = normal(rng);
  return v;
}

Mat reshape_square(const Vec& v, int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = v(i * n + j);
  return m;
}

Vec pair_score_vector(const Mat& agent_inputs) {
  std::vector<std::vector<double>> embeds;
  for (Eigen::Index i = 0; i < agent_inputs.rows(); ++i) {
    const Vec row = agent_inputs.row(i).transpose();
    embeds.emplace_back(row.data(), row.data() + row.size());
  }
  const auto mu = pair_scores(embeds);
  return Eigen::Map<const Vec>(mu.data(), static_cast<Eigen::Index>(mu.size()));
}

// Edge features [A0_ij, Z_i, Z_j, Z_i * Z_j] for every ordered pair.
Mat edge_features(const Mat& a0, const Mat& z) {
  const auto n = z.rows();
  const auto d = z.cols();
  Mat f(n * n, 1 + 3 * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto e = i * n + j;
      f(e, 0) = a0(i, j);
      f.block(e, 1, 1, d) = z.row(i);
      f.block(e, 1 + d, 1, d) = z.row(j);
      f.block(e, 1 + 2 * d, 1, d) = z.row(i).cwiseProduct(z.row(j));
    }
  }
  return f;
}

Mat normalize_backward(const NormalizedAdjacency& a, const Mat& dnorm, Normalization mode) {
  const auto n = a.sym.rows();
  Mat dahat(n, n);
  Vec ddeg = Vec::Zero(n);
  if (mode == Normalization::kSymmetric) {
    const Vec r = a.deg.array().rsqrt();
    Vec dr = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        dahat(i, j) = dnorm(i, j) * r(i) * r(j);
        dr(i) += (dnorm(i, j) + dnorm(j, i)) * a.ahat(i, j) * r(j);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) ddeg(i) = -0.5 * dr(i) * std::pow(a.deg(i), -1.5);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        dahat(i, j) = dnorm(i, j) / a.deg(i);
        ddeg(i) -= dnorm(i, j) * a.ahat(i, j) / (a.deg(i) * a.deg(i));
      }
    }
  }
  Mat dsym = dahat;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dsym(i, j) += ddeg(i) * sign(a.sym(i, j));
  return 0.5 * (dsym + dsym.transpose());
}

// dKL/dmu and dKL/dlog_var of one diagonal term against N(0, s).
void kl_term_grad(double mu, double lv, double s, double& dmu, double& dlv) {
  dmu = mu / s;
  const double var = std::exp(lv);
  dlv = var < kVarianceFloor ? 0.0 : 0.5 * (var / s - 1.0);
}

}  // namespace

// ---------------------------------------------------------------- parameters

NetworkParams NetworkParams::init(const NetworkConfig& cfg, const BlockPrior& prior,
                                  std::mt19937_64& rng) {
  require(cfg.num_agents >= 1 && cfg.input_dim >= 1 && cfg.state_dim >= 1,
          "NetworkParams::init: agent/input/state dims must be positive");
  require(cfg.layers >= 1 && cfg.message_dim >= 1 && cfg.code_dim >= 1 && cfg.q_hidden >= 1,
          "NetworkParams::init: layer count and widths must be positive");
  const int d = cfg.message_dim, n = cfg.num_agents;
  NetworkParams p;
  p.in_w = gaussian_init(cfg.input_dim, d, cfg.input_dim, rng);
  p.in_b = Mat::Zero(1, d);

  // Edge log-variances start at the mean log block scale.
  double mean_log_scale = 0.0;
  for (double s : prior.per_block_scale) mean_log_scale += std::log(s);
  mean_log_scale /= static_cast<double>(std::max<std::size_t>(1, prior.num_blocks()));

  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams L;
    L.enc_w1 = gaussian_init(1 + 3 * d, d, 1 + 3 * d, rng);
    L.enc_b1 = Mat::Zero(1, d);
    L.enc_wmu = gaussian_init(d, 1, d, rng) * 0.1;
    L.enc_bmu = Mat::Zero(1, 1);
    L.enc_wlv = gaussian_init(d, 1, d, rng) * 0.1;
    L.enc_blv = Mat::Constant(1, 1, mean_log_scale);
    L.msg_w = gaussian_init(d, d, d, rng);
    p.layers.push_back(std::move(L));
  }
  p.xib_wmu = gaussian_init(d, cfg.code_dim, d, rng);
  p.xib_bmu = Mat::Zero(1, cfg.code_dim);
  p.xib_wlv = gaussian_init(d, cfg.code_dim, d, rng) * 0.1;
  p.xib_blv = Mat::Constant(1, cfg.code_dim, std::log(prior.feature_scale));
  p.q_w1 = gaussian_init(cfg.input_dim + cfg.code_dim, cfg.q_hidden, cfg.input_dim + cfg.code_dim,
                         rng);
  p.q_b1 = Mat::Zero(1, cfg.q_hidden);
  p.q_w2 = gaussian_init(cfg.q_hidden, cfg.num_actions, cfg.q_hidden, rng);
  p.q_b2 = Mat::Zero(1, cfg.num_actions);
  p.mix_ww = gaussian_init(cfg.state_dim, n, cfg.state_dim, rng) * 0.1;
  p.mix_bw = Mat::Constant(1, n, 0.5413248546129181);  // softplus^-1(1)
  p.mix_wb = gaussian_init(cfg.state_dim, 1, cfg.state_dim, rng) * 0.1;
  p.mix_bb = Mat::Zero(1, 1);
  return p;
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams z = *this;
  z.for_each([](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

std::size_t NetworkParams::size() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

double NetworkParams::squared_norm() const {
  double s = 0.0;
  for_each([&s](const std::string&, const Mat& m) { s += m.squaredNorm(); });
  return s;
}

void NetworkParams::axpy(double a, const NetworkParams& x) {
  std::vector<const Mat*> src;
  x.for_each([&src](const std::string&, const Mat& m) { src.push_back(&m); });
  std::size_t k = 0;
  for_each([&](const std::string&, Mat& m) { m += a * *src[k++]; });
}

void NetworkParams::scale(double a) {
  for_each([a](const std::string&, Mat& m) { m *= a; });
}

bool NetworkParams::operator==(const NetworkParams& o) const {
  std::vector<const Mat*> other;
  o.for_each([&other](const std::string&, const Mat& m) { other.push_back(&m); });
  bool eq = true;
  std::size_t k = 0;
  for_each([&](const std::string&, const Mat& m) {
    if (k >= other.size() || m.rows() != other[k]->rows() || m.cols() != other[k]->cols() ||
        m != *other[k])
      eq = false;
    ++k;
  });
  return eq && k == other.size();
}

void save_checkpoint(std::ostream& out, const NetworkParams& params) {
  out << "hibcg-checkpoint 1\n";
  out << "layers " << params.layers.size() << "\n";
  out << "tensors " << [&params] {
    std::size_t c = 0;
    params.for_each([&c](const std::string&, const Mat&) { ++c; });
    return c;
  }() << "\n";
  char buf[64];
  params.for_each([&](const std::string& name, const Mat& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%a", m(i, j));
        out << (j ? " " : "") << buf;
      }
      out << '\n';
    }
  });
}

NetworkParams load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "hibcg-checkpoint")
    throw ConfigError("checkpoint: bad header");
  if (version != 1) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  std::string key;
  std::size_t layers = 0, tensors = 0;
  if (!(in >> key >> layers) || key != "layers") throw ConfigError("checkpoint: missing layer count");
  if (!(in >> key >> tensors) || key != "tensors")
    throw ConfigError("checkpoint: missing tensor count");

  NetworkParams p;
  p.layers.resize(layers);
  std::size_t seen = 0;
  p.for_each([&](const std::string& name, Mat& m) {
    std::string got;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> got >> rows >> cols)) throw ConfigError("checkpoint: truncated before " + name);
    if (got != name) throw ConfigError("checkpoint: expected tensor " + name + ", found " + got);
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::string tok;
        if (!(in >> tok)) throw ConfigError("checkpoint: truncated in " + name);
        char* end = nullptr;
        m(i, j) = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
          throw ConfigError("checkpoint: bad number '" + tok + "' in " + name);
      }
    }
    ++seen;
  });
  if (seen != tensors) throw ConfigError("checkpoint: tensor count mismatch");
  return p;
}

// ---------------------------------------------------------------- stages

NormalizedAdjacency normalize_adjacency(const Mat& raw, Normalization mode) {
  require(raw.rows() == raw.cols(), "normalize_adjacency: matrix must be square");
  const auto n = raw.rows();
  NormalizedAdjacency a;
  a.sym = 0.5 * (raw + raw.transpose());
  a.ahat = a.sym + Mat::Identity(n, n);
  a.deg = Vec::Ones(n) + a.sym.cwiseAbs().rowwise().sum();
  a.norm.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      a.norm(i, j) = mode == Normalization::kSymmetric
                         ? a.ahat(i, j) / std::sqrt(a.deg(i) * a.deg(j))
                         : a.ahat(i, j) / a.deg(i);
    }
  }
  return a;
}

Mat stage1_init_graph(const Mat& agent_inputs, const GroupPartition& partition,
                      const InitGraphOptions& opts, std::mt19937_64& rng) {
  const int n = partition.num_agents();
  require(agent_inputs.rows() == n, "stage1_init_graph: input rows must equal agent count");
  const Vec mu = pair_score_vector(agent_inputs);
  Vec z(n * n);
  switch (opts.mode) {
    case InitGraphMode::kGaussian: {
      const auto cov = gacg_edge_covariance(group_mask(partition), opts.alpha, opts.eps);
      const auto draw = cov.sample(std::vector<double>(mu.data(), mu.data() + mu.size()), rng);
      z = Eigen::Map<const Vec>(draw.data(), static_cast<Eigen::Index>(draw.size()));
      break;
    }
    case InitGraphMode::kRelaxed: {
      require(opts.temperature > 0.0, "stage1_init_graph: temperature must be positive");
      std::uniform_real_distribution<double> unif(1e-12, 1.0 - 1e-12);
      for (Eigen::Index e = 0; e < z.size(); ++e) {
        const double u = unif(rng);
        z(e) = sigmoid((mu(e) + std::log(u) - std::log1p(-u)) / opts.temperature);
      }
      break;
    }
    default:
      throw ConfigError("stage1_init_graph: unknown mode");
  }
  Mat a0 = normalize_adjacency(reshape_square(z, n), opts.normalization).norm;
  check_finite(a0, "stage 1");
  return a0;
}

Mat stage1_init_graph(const Mat& agent_inputs, const GroupPartition& partition,
                      const InitGraphOptions& opts, std::uint64_t seed) {
  auto rng = seeded(seed);
  return stage1_init_graph(agent_inputs, partition, opts, rng);
}

Mat stage1_mean_graph(const Mat& agent_inputs, Normalization normalization) {
  const auto n = static_cast<int>(agent_inputs.rows());
  return normalize_adjacency(reshape_square(pair_score_vector(agent_inputs), n), normalization)
      .norm;
}

namespace {

LayerTrace layer_forward(const Mat& a0, const Mat& z_prev, const LayerParams& lp,
                         const Vec& eps, double noise_scale, Normalization normalization,
                         Gating gating, double threshold, int layer) {
  const int n = static_cast<int>(z_prev.rows());
  LayerTrace t;
  t.feat = edge_features(a0, z_prev);
  t.hid = tanh_of(add_bias(t.feat * lp.enc_w1, lp.enc_b1));
  t.mu = (t.hid * lp.enc_wmu).col(0).array() + lp.enc_bmu(0, 0);
  t.log_var = (t.hid * lp.enc_wlv).col(0).array() + lp.enc_blv(0, 0);
  t.eps = eps;
  const Vec draw =
      t.mu + (noise_scale * (0.5 * t.log_var.array()).exp() * eps.array()).matrix();
  t.sampled = reshape_square(draw, n);
  t.adj = normalize_adjacency(t.sampled, normalization);
  if (gating == Gating::kSigmoid) {
    t.gated = t.adj.norm.unaryExpr([](double x) { return sigmoid(x); });
  } else {
    t.gated = t.adj.norm.unaryExpr(
        [threshold](double x) { return sigmoid(x) >= threshold ? 1.0 : 0.0; });
  }
  t.zw = z_prev * lp.msg_w;
  t.z = tanh_of(t.gated * t.zw);
  check_finite(t.z, "layer " + std::to_string(layer));
  return t;
}

}  // namespace

Stage2Result stage2_layer(const Mat& a0, const Mat& z_prev, const LayerParams& params,
                          const BlockPrior& prior, const EdgeBlockIndex& blocks,
                          double noise_scale, Normalization normalization, std::uint64_t seed) {
  const int n = blocks.num_agents();
  require(a0.rows() == n && a0.cols() == n && z_prev.rows() == n,
          "stage2_layer: shape mismatch with block index");
  require(z_prev.cols() == params.msg_w.rows(), "stage2_layer: feature width mismatch");
  require(noise_scale >= 0.0 && noise_scale <= 1.0, "stage2_layer: noise scale outside [0, 1]");
  auto rng = seeded(seed);
  const Vec eps = standard_normals(n * n, rng);
  const LayerTrace t =
      layer_forward(a0, z_prev, params, eps, noise_scale, normalization, Gating::kSigmoid, 0.6, 0);

  std::map<BlockId, DiagGaussian> post;
  for (const auto& b : blocks.blocks()) {
    std::vector<double> mu, lv;
    for (const auto& [i, j] : b.edges) {
      mu.push_back(t.mu(i * n + j));
      lv.push_back(t.log_var(i * n + j));
    }
    post.emplace(b.id, DiagGaussian(std::move(mu), std::move(lv)));
  }
  return {t.z, t.gated, blockwise_kl(post, prior)};
}

Stage3Result stage3_xib(const Mat& z_last, const NetworkParams& params, double sigma_x0_sq,
                        std::uint64_t seed) {
  require(z_last.cols() == params.xib_wmu.rows(), "stage3_xib: feature width mismatch");
  require(sigma_x0_sq > 0.0, "stage3_xib: prior scale must be positive");
  auto rng = seeded(seed);
  const Mat mu = add_bias(z_last * params.xib_wmu, params.xib_bmu);
  const Mat lv = add_bias(z_last * params.xib_wlv, params.xib_blv);
  Mat eps(mu.rows(), mu.cols());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < eps.rows(); ++i)
    for (Eigen::Index k = 0; k < eps.cols(); ++k) eps(i, k) = normal(rng);
  Stage3Result r;
  r.z_out = mu + ((0.5 * lv.array()).exp() * eps.array()).matrix();
  check_finite(r.z_out, "message code");
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    const Vec mrow = mu.row(i).transpose(), lrow = lv.row(i).transpose();
    DiagGaussian p(std::vector<double>(mrow.data(), mrow.data() + mrow.size()),
                   std::vector<double>(lrow.data(), lrow.data() + lrow.size()));
    r.xib_per_agent.push_back(diag_gauss_kl(p, IsotropicPrior(sigma_x0_sq, p.dim())));
  }
  return r;
}

MixResult q_heads_and_mix(const Mat& agent_inputs, const Mat& z_out, const NetworkParams& params,
                          const Vec& state, const std::vector<int>& actions) {
  const auto n = agent_inputs.rows();
  require(z_out.rows() == n, "q_heads_and_mix: agent count mismatch");
  require(agent_inputs.cols() + z_out.cols() == params.q_w1.rows(),
          "q_heads_and_mix: input width mismatch");
  require(state.size() == params.mix_ww.rows(), "q_heads_and_mix: state width mismatch");
  require(static_cast<Eigen::Index>(actions.size()) == n, "q_heads_and_mix: one action per agent");
  Mat q_in(n, agent_inputs.cols() + z_out.cols());
  q_in << agent_inputs, tanh_of(z_out);
  const Mat hid = tanh_of(add_bias(q_in * params.q_w1, params.q_b1));
  MixResult r;
  r.q = add_bias(hid * params.q_w2, params.q_b2);
  const Vec pre = (state.transpose() * params.mix_ww + params.mix_bw).transpose();
  r.w = pre.unaryExpr([](double x) { return softplus(x); });
  r.b = (state.transpose() * params.mix_wb)(0, 0) + params.mix_bb(0, 0);
  r.q_tot = r.b;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int u = actions[static_cast<std::size_t>(i)];
    require(u >= 0 && u < r.q.cols(), "q_heads_and_mix: action out of range");
    r.q_tot += r.w(i) * r.q(i, u);
  }
  return r;
}

std::vector<int> greedy_actions(const Mat& q) {
  std::vector<int> a(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Eigen::Index best;
    q.row(i).maxCoeff(&best);
    a[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return a;
}

// ---------------------------------------------------------------- loss

double warmup_factor(int step, int warmup_steps) {
  if (warmup_steps <= 0) return 1.0;
  return std::clamp(static_cast<double>(step) / warmup_steps, 0.0, 1.0);
}

std::vector<std::vector<double>> block_weights(const LossConfig& cfg, const EdgeBlockIndex& blocks,
                                               int layers, int step) {
  const double ramp = warmup_factor(step, cfg.warmup_steps);
  std::vector<double> per_block;
  for (const auto& b : blocks.blocks()) {
    double w = cfg.lambda_a_dim * ramp * (b.intra() ? cfg.intra_weight : cfg.cross_weight);
    if (cfg.block_size_scaling) w *= b.size();
    per_block.push_back(w);
  }
  return std::vector<std::vector<double>>(static_cast<std::size_t>(layers), per_block);
}

double LossReport::aib_total() const {
  double s = 0.0;
  for (const auto& layer : aib)
    for (double v : layer) s += v;
  return s;
}

double LossReport::xib_total() const {
  double s = 0.0;
  for (double v : xib) s += v;
  return s;
}

double LossReport::aib_kind_total(const EdgeBlockIndex& blocks, bool intra) const {
  double s = 0.0;
  for (const auto& layer : aib)
    for (std::size_t b = 0; b < layer.size(); ++b)
      if (blocks.block(static_cast<BlockId>(b)).intra() == intra) s += layer[b];
  return s;
}

double LossReport::aib_penalty() const {
  double s = 0.0;
  for (std::size_t l = 0; l < aib.size(); ++l)
    for (std::size_t b = 0; b < aib[l].size(); ++b) s += lambda_a[l][b] * aib[l][b];
  return s;
}

double LossReport::recompute_total() const {
  return td + lambda_g * group_loss + aib_penalty() + lambda_x * xib_total();
}

LossReport assemble_loss_from_parts(double td, std::vector<std::vector<double>> aib,
                                    std::vector<double> xib, const LossConfig& cfg,
                                    const EdgeBlockIndex& blocks, int step) {
  LossReport r;
  r.td = td;
  r.group_loss = 0.0;
  r.lambda_g = cfg.lambda_g;
  r.lambda_a = block_weights(cfg, blocks, static_cast<int>(aib.size()), step);
  for (const auto& layer : aib)
    require(static_cast<int>(layer.size()) == blocks.num_blocks(),
            "assemble_loss: AIB entries must cover every block");
  r.aib = std::move(aib);
  r.xib = std::move(xib);
  r.lambda_x = cfg.lambda_x_dim * warmup_factor(step, cfg.warmup_steps);
  r.total = r.recompute_total();
  return r;
}

// ---------------------------------------------------------------- network

HibcgNetwork::HibcgNetwork(NetworkConfig cfg, GroupPartition partition, BlockPrior prior)
    : cfg_(cfg), partition_(std::move(partition)), blocks_(partition_), prior_(std::move(prior)) {
  require(cfg_.num_agents == partition_.num_agents(), "HibcgNetwork: agent count mismatch");
  require(static_cast<int>(prior_.num_blocks()) == blocks_.num_blocks(),
          "HibcgNetwork: prior must have one scale per edge block");
  require(cfg_.noise_scale >= 0.0 && cfg_.noise_scale <= 1.0,
          "HibcgNetwork: noise scale outside [0, 1]");
}

NetworkParams HibcgNetwork::init_params(std::mt19937_64& rng) const {
  return NetworkParams::init(cfg_, prior_, rng);
}

SampleNoise HibcgNetwork::draw_noise(const SampleInput& in, std::mt19937_64& rng) const {
  const int n = cfg_.num_agents;
  SampleNoise z;
  z.init_graph = stage1_init_graph(in.agent_inputs, partition_, cfg_.init_graph, rng);
  for (int l = 0; l < cfg_.layers; ++l) z.edge.push_back(standard_normals(n * n, rng));
  const Vec code = standard_normals(n * cfg_.code_dim, rng);
  z.code = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      code.data(), n, cfg_.code_dim);
  return z;
}

SampleNoise HibcgNetwork::zero_noise(const SampleInput& in) const {
  const int n = cfg_.num_agents;
  SampleNoise z;
  z.init_graph = stage1_mean_graph(in.agent_inputs, cfg_.init_graph.normalization);
  for (int l = 0; l < cfg_.layers; ++l) z.edge.push_back(Vec::Zero(n * n));
  z.code = Mat::Zero(n, cfg_.code_dim);
  return z;
}

SampleTrace HibcgNetwork::forward(const NetworkParams& params, const SampleInput& in,
                                  const SampleNoise& noise) const {
  const int n = cfg_.num_agents;
  require(in.agent_inputs.rows() == n && in.agent_inputs.cols() == cfg_.input_dim,
          "forward: agent input shape mismatch");
  require(in.state.size() == cfg_.state_dim, "forward: state width mismatch");
  require(static_cast<int>(noise.edge.size()) == cfg_.layers &&
              static_cast<int>(params.layers.size()) == cfg_.layers,
          "forward: layer count mismatch");
  SampleTrace t;
  t.input = in;
  t.noise = noise;
  t.z0 = tanh_of(add_bias(in.agent_inputs * params.in_w, params.in_b));
  const Mat* z = &t.z0;
  for (int l = 0; l < cfg_.layers; ++l) {
    t.layers.push_back(layer_forward(noise.init_graph, *z, params.layers[static_cast<std::size_t>(l)],
                                     noise.edge[static_cast<std::size_t>(l)], cfg_.noise_scale,
                                     cfg_.normalization, cfg_.gating, cfg_.hard_threshold, l));
    z = &t.layers.back().z;
  }
  t.mu_x = add_bias(*z * params.xib_wmu, params.xib_bmu);
  t.log_var_x = add_bias(*z * params.xib_wlv, params.xib_blv);
  t.z_out = t.mu_x + ((0.5 * t.log_var_x.array()).exp() * noise.code.array()).matrix();
  check_finite(t.z_out, "message code");
  t.tz = tanh_of(t.z_out);
  t.q_in.resize(n, cfg_.input_dim + cfg_.code_dim);
  t.q_in << in.agent_inputs, t.tz;
  t.q_hid = tanh_of(add_bias(t.q_in * params.q_w1, params.q_b1));
  t.q = add_bias(t.q_hid * params.q_w2, params.q_b2);
  t.w_pre = (in.state.transpose() * params.mix_ww + params.mix_bw).transpose();
  t.w = t.w_pre.unaryExpr([](double x) { return softplus(x); });
  t.b = (in.state.transpose() * params.mix_wb)(0, 0) + params.mix_bb(0, 0);
  t.q_tot = t.b;
  if (!in.actions.empty()) {
    require(static_cast<int>(in.actions.size()) == n, "forward: one action per agent");
    for (int i = 0; i < n; ++i) t.q_tot += t.w(i) * t.q(i, in.actions[static_cast<std::size_t>(i)]);
  }
  return t;
}

KlBreakdown HibcgNetwork::layer_aib(const SampleTrace& t, int layer) const {
  const auto& L = t.layers.at(static_cast<std::size_t>(layer));
  KlBreakdown out;
  for (const auto& b : blocks_.blocks()) {
    double kl = 0.0;
    const double s = prior_.scale(b.id);
    for (const auto& [i, j] : b.edges) {
      const auto e = i * cfg_.num_agents + j;
      kl += gauss_kl_term(L.mu(e), L.log_var(e), s);
    }
    out.per_block.emplace_back(b.id, kl);
    out.total += kl;
  }
  return out;
}

std::vector<double> HibcgNetwork::sample_xib(const SampleTrace& t) const {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < t.mu_x.rows(); ++i) {
    double kl = 0.0;
    for (Eigen::Index k = 0; k < t.mu_x.cols(); ++k)
      kl += gauss_kl_term(t.mu_x(i, k), t.log_var_x(i, k), prior_.feature_scale);
    out.push_back(kl);
  }
  return out;
}

LossReport HibcgNetwork::assemble_loss(const BatchTrace& trace, const std::vector<double>& targets,
                                       const LossConfig& cfg, int step) const {
  require(!trace.samples.empty(), "assemble_loss: empty batch");
  require(targets.size() == trace.samples.size(), "assemble_loss: one target per sample required");
  const double inv_b = 1.0 / static_cast<double>(trace.samples.size());
  double td = 0.0;
  std::vector<std::vector<double>> aib(static_cast<std::size_t>(cfg_.layers),
                                       std::vector<double>(static_cast<std::size_t>(blocks_.num_blocks()), 0.0));
  std::vector<double> xib(static_cast<std::size_t>(cfg_.num_agents), 0.0);
  for (std::size_t s = 0; s < trace.samples.size(); ++s) {
    const auto& t = trace.samples[s];
    const double err = t.q_tot - targets[s];
    td += err * err * inv_b;
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto kb = layer_aib(t, l);
      for (const auto& [id, kl] : kb.per_block)
        aib[static_cast<std::size_t>(l)][static_cast<std::size_t>(id)] += kl * inv_b;
    }
    const auto x = sample_xib(t);
    for (std::size_t i = 0; i < x.size(); ++i) xib[i] += x[i] * inv_b;
  }
  return assemble_loss_from_parts(td, std::move(aib), std::move(xib), cfg, blocks_, step);
}

NetworkParams HibcgNetwork::backward(const BatchTrace& trace, const std::vector<double>& targets,
                                     const LossReport& report, const NetworkParams& params) const {
  require(!trace.samples.empty() && targets.size() == trace.samples.size(),
          "backward: trace and targets must be nonempty and aligned");
  require(static_cast<int>(report.lambda_a.size()) == cfg_.layers, "backward: incomplete loss report");
  if (cfg_.gating != Gating::kSigmoid)
    throw ContractViolation("backward: hard-threshold gating has no gradient");
  const int n = cfg_.num_agents;
  const int d = cfg_.message_dim;
  const double inv_b = 1.0 / static_cast<double>(trace.samples.size());
  NetworkParams g = params.zeros_like();

  for (std::size_t s = 0; s < trace.samples.size(); ++s) {
    const auto& t = trace.samples[s];
    require(static_cast<int>(t.layers.size()) == cfg_.layers && !t.input.actions.empty(),
            "backward: incomplete trace");
    const double dq_tot = 2.0 * (t.q_tot - targets[s]) * inv_b;

    // Mixer.
    Vec dw(n);
    Mat dq = Mat::Zero(n, cfg_.num_actions);
    for (int i = 0; i < n; ++i) {
      const int u = t.input.actions[static_cast<std::size_t>(i)];
      dw(i) = dq_tot * t.q(i, u);
      dq(i, u) = dq_tot * t.w(i);
    }
    const Vec dw_pre = dw.cwiseProduct(t.w_pre.unaryExpr([](double x) { return sigmoid(x); }));
    g.mix_ww += t.input.state * dw_pre.transpose();
    g.mix_bw += dw_pre.transpose();
    g.mix_wb += t.input.state * dq_tot;
    g.mix_bb(0, 0) += dq_tot;

    // Q-heads.
    g.q_w2 += t.q_hid.transpose() * dq;
    g.q_b2 += dq.colwise().sum();
    const Mat dq_pre = tanh_grad(t.q_hid, dq * params.q_w2.transpose());
    g.q_w1 += t.q_in.transpose() * dq_pre;
    g.q_b1 += dq_pre.colwise().sum();
    const Mat dq_in = dq_pre * params.q_w1.transpose();
    const Mat dz_out = tanh_grad(t.tz, dq_in.rightCols(cfg_.code_dim));

    // Message code and its KL.
    Mat dmu_x = dz_out;
    Mat dlv_x = (dz_out.array() * t.noise.code.array() * (0.5 * t.log_var_x.array()).exp() * 0.5)
                    .matrix();
    const double cx = report.lambda_x * inv_b;
    if (cx != 0.0) {
      for (Eigen::Index i = 0; i < dmu_x.rows(); ++i) {
        for (Eigen::Index k = 0; k < dmu_x.cols(); ++k) {
          double gm, gl;
          kl_term_grad(t.mu_x(i, k), t.log_var_x(i, k), prior_.feature_scale, gm, gl);
          dmu_x(i, k) += cx * gm;
          dlv_x(i, k) += cx * gl;
        }
      }
    }
    const Mat& z_last = t.layers.back().z;
    g.xib_wmu += z_last.transpose() * dmu_x;
    g.xib_bmu += dmu_x.colwise().sum();
    g.xib_wlv += z_last.transpose() * dlv_x;
    g.xib_blv += dlv_x.colwise().sum();
    Mat dz = dmu_x * params.xib_wmu.transpose() + dlv_x * params.xib_wlv.transpose();

    // Structural layers, last to first.
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      const auto& L = t.layers[static_cast<std::size_t>(l)];
      const auto& P = params.layers[static_cast<std::size_t>(l)];
      auto& G = g.layers[static_cast<std::size_t>(l)];
      const Mat& z_prev = l == 0 ? t.z0 : t.layers[static_cast<std::size_t>(l - 1)].z;

      const Mat dpre = tanh_grad(L.z, dz);
      const Mat dgated = dpre * L.zw.transpose();
      const Mat dzw = L.gated.transpose() * dpre;
      G.msg_w += z_prev.transpose() * dzw;
      Mat dz_prev = dzw * P.msg_w.transpose();

      const Mat dnorm = (dgated.array() * L.gated.array() * (1.0 - L.gated.array())).matrix();
      const Mat dsampled = normalize_backward(L.adj, dnorm, cfg_.normalization);

      Vec dmu(n * n), dlv(n * n);
      const auto& lambdas = report.lambda_a[static_cast<std::size_t>(l)];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const int e = i * n + j;
          const double ds = dsampled(i, j);
          dmu(e) = ds;
          dlv(e) = ds * cfg_.noise_scale * L.eps(e) * 0.5 * std::exp(0.5 * L.log_var(e));
          const BlockId b = blocks_.block_of(i, j);
          const double c = lambdas[static_cast<std::size_t>(b)] * inv_b;
          if (c != 0.0) {
            double gm, gl;
            kl_term_grad(L.mu(e), L.log_var(e), prior_.scale(b), gm, gl);
            dmu(e) += c * gm;
            dlv(e) += c * gl;
          }
        }
      }
      G.enc_wmu += L.hid.transpose() * dmu;
      G.enc_bmu(0, 0) += dmu.sum();
      G.enc_wlv += L.hid.transpose() * dlv;
      G.enc_blv(0, 0) += dlv.sum();
      const Mat dhid = dmu * P.enc_wmu.transpose() + dlv * P.enc_wlv.transpose();
      const Mat dh_pre = tanh_grad(L.hid, dhid);
      G.enc_w1 += L.feat.transpose() * dh_pre;
      G.enc_b1 += dh_pre.colwise().sum();
      const Mat dfeat = dh_pre * P.enc_w1.transpose();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const int e = i * n + j;
          const auto f_i = dfeat.block(e, 1, 1, d);
          const auto f_j = dfeat.block(e, 1 + d, 1, d);
          const auto f_ij = dfeat.block(e, 1 + 2 * d, 1, d);
          dz_prev.row(i) += f_i + f_ij.cwiseProduct(z_prev.row(j));
          dz_prev.row(j) += f_j + f_ij.cwiseProduct(z_prev.row(i));
        }
      }
      dz = std::move(dz_prev);
    }

    // Input embedding.
    const Mat dpre0 = tanh_grad(t.z0, dz);
    g.in_w += t.input.agent_inputs.transpose() * dpre0;
    g.in_b += dpre0.colwise().sum();
  }
  return g;
}

double HibcgNetwork::batch_loss(const NetworkParams& params, const std::vector<SampleInput>& inputs,
                                const std::vector<SampleNoise>& noise,
                                const std::vector<double>& targets, const LossConfig& cfg,
                                int step) const {
  require(inputs.size() == noise.size(), "batch_loss: one noise record per input");
  BatchTrace bt;
  for (std::size_t s = 0; s < inputs.size(); ++s) bt.samples.push_back(forward(params, inputs[s], noise[s]));
  return assemble_loss(bt, targets, cfg, step).total;
}

}  // namespace hibcg
