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


#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "hibcg/errors.hpp"
#include "hibcg/network.hpp"
#include "hibcg/priors.hpp"
#include "oracles.hpp"

using namespace hibcg;

namespace {

Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = g(rng);
  return m;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k] / n;
    my += y[k] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Layer parameters whose encoder emits a constant (mu, log_var) on every edge.
LayerParams constant_encoder(int d, double mu, double log_var, std::mt19937_64& rng) {
  LayerParams L;
  L.enc_w1 = random_matrix(1 + 3 * d, d, rng);
  L.enc_b1 = Mat::Zero(1, d);
  L.enc_wmu = Mat::Zero(d, 1);
  L.enc_bmu = Mat::Constant(1, 1, mu);
  L.enc_wlv = Mat::Zero(d, 1);
  L.enc_blv = Mat::Constant(1, 1, log_var);
  L.msg_w = random_matrix(d, d, rng, 0.5);
  return L;
}

NetworkParams small_params(int n, int in, int state, int d, int code, std::mt19937_64& rng) {
  NetworkConfig cfg;
  cfg.num_agents = n;
  cfg.input_dim = in;
  cfg.state_dim = state;
  cfg.message_dim = d;
  cfg.code_dim = code;
  cfg.q_hidden = 6;
  const EdgeBlockIndex blocks(GroupPartition::from_sizes({n}));
  return NetworkParams::init(cfg, flat_prior(1.0, blocks), rng);
}

}  // namespace

TEST_SUITE("hibcg-network") {

TEST_CASE("adjacency normalization") {
  Mat raw(3, 3);
  raw << 0.0, 1.0, -2.0, 3.0, 0.5, 0.0, 0.0, 1.0, 0.0;
  const auto a = normalize_adjacency(raw, Normalization::kSymmetric);
  CHECK(a.sym.isApprox(a.sym.transpose()));
  for (int i = 0; i < 3; ++i) {
    double deg = 1.0;
    for (int j = 0; j < 3; ++j) deg += std::abs(0.5 * (raw(i, j) + raw(j, i)));
    CHECK(a.deg(i) == doctest::Approx(deg));
    for (int j = 0; j < 3; ++j) {
      const double ahat = 0.5 * (raw(i, j) + raw(j, i)) + (i == j ? 1.0 : 0.0);
      double dj = 1.0;
      for (int k = 0; k < 3; ++k) dj += std::abs(0.5 * (raw(j, k) + raw(k, j)));
      CHECK(a.norm(i, j) == doctest::Approx(ahat / std::sqrt(deg * dj)));
    }
  }
  const auto row = normalize_adjacency(raw, Normalization::kRow);
  CHECK(row.norm(0, 1) == doctest::Approx(row.ahat(0, 1) / row.deg(0)));
}

TEST_CASE("stage 1 initial graph") {
  std::mt19937_64 rng(4);
  const auto part = GroupPartition::from_sizes({2, 2});
  const Mat x = random_matrix(4, 3, rng);
  SUBCASE("noise-free limit") {
    InitGraphOptions o;
    o.alpha = 1e-30;
    o.eps = 1e-30;
    const Mat a0 = stage1_init_graph(x, part, o, std::uint64_t{9});
    CHECK(a0.isApprox(stage1_mean_graph(x, o.normalization), 1e-10));
  }
  SUBCASE("fixed seed repeats") {
    InitGraphOptions o;
    CHECK(stage1_init_graph(x, part, o, std::uint64_t{3}) == stage1_init_graph(x, part, o, std::uint64_t{3}));
    o.mode = InitGraphMode::kRelaxed;
    CHECK(stage1_init_graph(x, part, o, std::uint64_t{3}) == stage1_init_graph(x, part, o, std::uint64_t{3}));
    const Mat r = stage1_init_graph(x, part, o, std::uint64_t{5});
    CHECK(r.isApprox(r.transpose()));
  }
  SUBCASE("singleton groups give uncorrelated off-diagonal entries") {
    const auto single = GroupPartition::from_sizes({1, 1, 1, 1});
    const Mat zero = Mat::Zero(4, 2);
    InitGraphOptions o;
    o.alpha = 0.5;
    o.eps = 0.3;
    const int N = 10'000;
    std::vector<double> e01, e02, e23, e12;
    std::mt19937_64 r(77);
    for (int t = 0; t < N; ++t) {
      const Mat a = stage1_init_graph(zero, single, o, r);
      e01.push_back(a(0, 1));
      e02.push_back(a(0, 2));
      e23.push_back(a(2, 3));
      e12.push_back(a(1, 2));
    }
    const double lim = 4.0 / std::sqrt(static_cast<double>(N));
    CHECK(std::abs(correlation(e01, e02)) < lim);
    CHECK(std::abs(correlation(e01, e23)) < lim);
    CHECK(std::abs(correlation(e02, e12)) < lim);
  }
}

TEST_CASE("stage 2 layer") {
  std::mt19937_64 rng(12);
  const auto part = GroupPartition::from_sizes({2, 3});
  const EdgeBlockIndex blocks(part);
  const int d = 4;
  const Mat a0 = stage1_mean_graph(random_matrix(5, 3, rng), Normalization::kSymmetric);
  const Mat z = random_matrix(5, d, rng);

  SUBCASE("no noise means no randomness") {
    const auto L = constant_encoder(d, 0.2, -1.0, rng);
    const auto prior = group_prior(blocks, 0.5, 0.1);
    const auto r1 = stage2_layer(a0, z, L, prior, blocks, 0.0, Normalization::kSymmetric, 1);
    const auto r2 = stage2_layer(a0, z, L, prior, blocks, 0.0, Normalization::kSymmetric, 2);
    CHECK(r1.z == r2.z);
    CHECK(r1.gated == r2.gated);
  }
  SUBCASE("encoder at the prior") {
    const auto L = constant_encoder(d, 0.0, std::log(0.3), rng);
    const auto prior = flat_prior(0.3, blocks);
    const auto r = stage2_layer(a0, z, L, prior, blocks, 1.0, Normalization::kSymmetric, 5);
    for (const auto& [b, kl] : r.aib.per_block) CHECK(std::abs(kl) < 1e-14);
  }
  SUBCASE("block divergence from a constant encoder") {
    const double mu = 0.05, lv = std::log(0.02);
    const auto L = constant_encoder(d, mu, lv, rng);
    const auto prior = group_prior(blocks, 0.01, 0.0001);
    const auto r = stage2_layer(a0, z, L, prior, blocks, 1.0, Normalization::kSymmetric, 5);
    for (const auto& b : blocks.blocks())
      CHECK(r.aib.at(b.id) == doctest::Approx(static_cast<double>(
                                  b.size() * oracle::kl_1d(mu, std::exp(lv), prior.scale(b.id)))));
  }
  CHECK_THROWS_AS(stage2_layer(a0, z, constant_encoder(d, 0, 0, rng), flat_prior(1.0, blocks), blocks,
                               1.5, Normalization::kSymmetric, 1),
                  ContractViolation);
}

TEST_CASE("asymmetric pressure of the block prior") {
  const double si = 0.01, sc = 0.0001;
  // Below the logarithmic mean of the two scales the tighter prior is the
  // cheaper one; above it the tighter prior costs more.
  const double lmean = si * sc * std::log(si / sc) / (si - sc);
  for (double second_moment : {2.0 * lmean, si, 0.05, 1.0}) {
    const double mu = std::sqrt(0.5 * second_moment), v = 0.5 * second_moment;
    CHECK(gauss_kl_term(mu, std::log(v), sc) > gauss_kl_term(mu, std::log(v), si));
  }
  for (double second_moment : {sc, 0.5 * lmean}) {
    const double mu = std::sqrt(0.5 * second_moment), v = 0.5 * second_moment;
    CHECK(gauss_kl_term(mu, std::log(v), sc) < gauss_kl_term(mu, std::log(v), si));
  }
  // Mean gradient ratio is the prior ratio regardless of the operating point.
  for (double mu : {0.01, 0.3, -2.0}) {
    const double h = 1e-6, lv = std::log(0.004);
    const double gi = (gauss_kl_term(mu + h, lv, si) - gauss_kl_term(mu - h, lv, si)) / (2 * h);
    const double gc = (gauss_kl_term(mu + h, lv, sc) - gauss_kl_term(mu - h, lv, sc)) / (2 * h);
    CHECK(gc / gi == doctest::Approx(si / sc).epsilon(1e-6));
    CHECK(gc == doctest::Approx(mu / sc).epsilon(1e-6));
  }
}

TEST_CASE("intra divergence versus prior scale on frozen posteriors") {
  const double mu = 0.04, v = 0.002, m2 = v + mu * mu;
  double prev = INFINITY;
  for (double s = 0.1 * m2; s <= m2; s += 0.01 * m2) {
    const double kl = gauss_kl_term(mu, std::log(v), s);
    CHECK(kl < prev);
    prev = kl;
  }
  prev = gauss_kl_term(mu, std::log(v), m2);
  for (double s = m2 * 1.01; s <= 10 * m2; s += 0.1 * m2) {
    const double kl = gauss_kl_term(mu, std::log(v), s);
    CHECK(kl > prev);
    prev = kl;
  }
}

TEST_CASE("stage 3 message code") {
  std::mt19937_64 rng(2);
  auto p = small_params(3, 4, 2, 5, 3, rng);
  const Mat z = random_matrix(3, 5, rng);
  p.xib_wmu.setZero();
  p.xib_wlv.setZero();
  p.xib_blv.setConstant(std::log(0.7));
  p.xib_bmu.setZero();
  for (double x : stage3_xib(z, p, 0.7, 1).xib_per_agent) CHECK(std::abs(x) < 1e-14);
  p.xib_bmu.setConstant(0.3);
  const auto once = stage3_xib(z, p, 0.7, 1).xib_per_agent;
  p.xib_bmu.setConstant(0.6);
  const auto twice = stage3_xib(z, p, 0.7, 1).xib_per_agent;
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once[i] == doctest::Approx(3 * 0.09 / (2 * 0.7)));
    CHECK(twice[i] == doctest::Approx(4.0 * once[i]));
  }
}

TEST_CASE("mixer") {
  std::mt19937_64 rng(6);
  auto p = small_params(4, 3, 2, 4, 2, rng);
  const Mat x = random_matrix(4, 3, rng), z = random_matrix(4, 2, rng);
  const Vec s = random_matrix(2, 1, rng).col(0);
  SUBCASE("equal weights and zero bias") {
    p.mix_ww.setZero();
    p.mix_wb.setZero();
    p.mix_bb.setZero();
    p.mix_bw.setConstant(std::log(std::expm1(0.25)));
    const auto r = q_heads_and_mix(x, z, p, s, {0, 1, 1, 0});
    const double sum = r.q(0, 0) + r.q(1, 1) + r.q(2, 1) + r.q(3, 0);
    CHECK(r.q_tot == doctest::Approx(0.25 * sum));
  }
  SUBCASE("raising a utility never lowers the joint value") {
    const std::vector<int> acts{1, 0, 1, 1};
    for (int a = 0; a < 2; ++a) {
      auto q = p;
      const double base = q_heads_and_mix(x, z, q, s, acts).q_tot;
      q.q_b2(0, a) += 0.1;
      CHECK(q_heads_and_mix(x, z, q, s, acts).q_tot >= base);
    }
  }
  SUBCASE("greedy equals exhaustive joint argmax") {
    for (int t = 0; t < 20; ++t) {
      auto q = small_params(4, 3, 2, 4, 2, rng);
      q.mix_ww = random_matrix(2, 4, rng, 2.0);
      const Vec st = random_matrix(2, 1, rng).col(0);
      const auto r = q_heads_and_mix(x, random_matrix(4, 2, rng), q, st, {0, 0, 0, 0});
      CHECK((r.w.array() >= 0.0).all());
      CHECK(greedy_actions(r.q) == oracle::brute_joint_argmax(r.q, r.w));
    }
  }
}

TEST_CASE("loss assembly") {
  const EdgeBlockIndex ten(GroupPartition::from_sizes({4, 6}));
  SUBCASE("no regularization leaves the TD loss") {
    LossConfig c;
    const auto r = assemble_loss_from_parts(0.7, {{1.0, 2.0, 3.0, 4.0}}, {1.0, 1.0}, c, ten, 100);
    CHECK(r.total == 0.7);
  }
  SUBCASE("heterogeneous weights on the worked block values") {
    LossConfig c;
    c.lambda_a_dim = 0.001;
    c.block_size_scaling = false;
    c.cross_weight = 10.0;
    const auto r = assemble_loss_from_parts(0.0, {{0.91, 2.05, 1.58, 1.58}}, {}, c, ten, 0);
    CHECK(r.aib_penalty() == doctest::Approx(0.001 * 2.96 + 0.01 * 3.16));
    CHECK(std::abs(r.aib_penalty() - 0.035) < 0.0005);
    CHECK(0.01 * 3.16 / r.aib_penalty() > 0.9);
  }
  SUBCASE("warmup ramp") {
    CHECK(warmup_factor(0, 100) == 0.0);
    CHECK(warmup_factor(25, 100) == 0.25);
    CHECK(warmup_factor(500, 100) == 1.0);
    CHECK(warmup_factor(3, 0) == 1.0);
    LossConfig c;
    c.lambda_a_dim = 0.01;
    c.warmup_steps = 10;
    const auto w = block_weights(c, ten, 2, 5);
    REQUIRE(w.size() == 2);
    CHECK(w[1][0] == doctest::Approx(0.01 * 16 * 0.5));
    CHECK(w[0][2] == doctest::Approx(0.01 * 24 * 0.5));
  }
  SUBCASE("recomposition") {
    LossConfig c;
    c.lambda_a_dim = 0.003;
    c.lambda_x_dim = 0.02;
    c.lambda_g = 0.5;
    const auto r = assemble_loss_from_parts(0.4, {{0.1, 0.2, 0.3, 0.4}}, {0.5, 0.25}, c, ten, 1000);
    CHECK(r.total == doctest::Approx(r.recompute_total()));
    CHECK(r.xib_total() == doctest::Approx(0.75));
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = fixture::tiny_problem(seed);
    const auto g = fixture::analytic_gradient(p, 5);
    const auto r = oracle::finite_difference_check(
        p.params, g,
        [&p](const NetworkParams& q) { return p.net.batch_loss(q, p.inputs, p.noise, p.targets, p.loss, 5); },
        1e-5, 1e-6);
    INFO("seed " << seed << " worst " << r.worst_param);
    CHECK(r.max_rel_error <= 1e-4);
    CHECK(r.checked == static_cast<int>(p.params.size()));
  }
}

TEST_CASE("zero loss has zero gradient") {
  auto p = fixture::tiny_problem(3, 1);
  NetworkConfig cfg = p.net.config();
  const auto part = p.net.partition();
  HibcgNetwork net(cfg, part, flat_prior(0.2, p.net.blocks(), 0.5));
  for (auto& L : p.params.layers) {
    L.enc_wmu.setZero();
    L.enc_bmu.setZero();
    L.enc_wlv.setZero();
    L.enc_blv.setConstant(std::log(0.2));
  }
  p.params.xib_wmu.setZero();
  p.params.xib_bmu.setZero();
  p.params.xib_wlv.setZero();
  p.params.xib_blv.setConstant(std::log(0.5));
  BatchTrace bt;
  bt.samples.push_back(net.forward(p.params, p.inputs[0], p.noise[0]));
  const std::vector<double> target{bt.samples[0].q_tot};
  const auto rep = net.assemble_loss(bt, target, p.loss, 50);
  CHECK(std::abs(rep.total) < 1e-15);
  CHECK(net.backward(bt, target, rep, p.params).squared_norm() < 1e-28);
}

TEST_CASE("hard gating has no backward pass") {
  auto p = fixture::tiny_problem(4, 1);
  NetworkConfig cfg = p.net.config();
  cfg.gating = Gating::kHardThreshold;
  HibcgNetwork net(cfg, p.net.partition(), p.net.prior());
  BatchTrace bt;
  bt.samples.push_back(net.forward(p.params, p.inputs[0], p.noise[0]));
  const auto rep = net.assemble_loss(bt, p.targets, p.loss, 1);
  CHECK(std::isfinite(rep.total));
  CHECK_THROWS_AS(net.backward(bt, p.targets, rep, p.params), ContractViolation);
}

TEST_CASE("noise replay and checkpoints") {
  const auto p = fixture::tiny_problem(8, 1);
  const auto t1 = p.net.forward(p.params, p.inputs[0], p.noise[0]);
  const auto t2 = p.net.forward(p.params, p.inputs[0], p.noise[0]);
  CHECK(t1.q_tot == t2.q_tot);
  CHECK(t1.z_out == t2.z_out);

  std::stringstream ss;
  save_checkpoint(ss, p.params);
  const auto back = load_checkpoint(ss);
  CHECK(back == p.params);
  std::stringstream again;
  save_checkpoint(again, back);
  std::stringstream first;
  save_checkpoint(first, p.params);
  CHECK(again.str() == first.str());

  std::istringstream bad_header("not-a-checkpoint 1\n");
  CHECK_THROWS_AS(load_checkpoint(bad_header), ConfigError);
  std::string text = first.str();
  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(truncated), ConfigError);
  const auto pos = text.find("0x");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 2, "zz");
  std::istringstream garbled(text);
  CHECK_THROWS_AS(load_checkpoint(garbled), ConfigError);
}

TEST_CASE("parameter algebra") {
  const auto p = fixture::tiny_problem(2, 1).params;
  auto q = p;
  q.axpy(2.0, p);
  auto r = p;
  r.scale(3.0);
  CHECK(q == r);
  CHECK(p.zeros_like().squared_norm() == 0.0);
  double sq = 0.0;
  std::size_t count = 0;
  p.for_each([&](const std::string&, const Mat& m) {
    sq += m.squaredNorm();
    count += static_cast<std::size_t>(m.size());
  });
  CHECK(p.squared_norm() == doctest::Approx(sq));
  CHECK(p.size() == count);
}

}  // TEST_SUITE
