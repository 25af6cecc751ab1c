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

#include "hibcg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "hibcg/errors.hpp"
#include "hibcg/groups.hpp"
#include "hibcg/kl.hpp"
#include "hibcg/network.hpp"
#include "hibcg/priors.hpp"
#include "hibcg/relevance.hpp"

namespace hibcg {

using nlohmann::json;
namespace fs = std::filesystem;

// ============================================================ verification

namespace {

// Independent long-double evaluation of k/2 (v/s - 1 + ln(s/v)).
double zero_mean_block_kl_hp(long double v, int k, long double s) {
  return static_cast<double>(0.5L * k * (v / s - 1.0L + std::log(s / v)));
}

class RowBuilder {
 public:
  explicit RowBuilder(const VerifyOptions& opts) : opts_(opts) {}

  void round2(const std::string& id, const std::string& label, double computed, double expected,
              double high_precision) {
    CheckRow r = base(id, label, computed, expected, 0.005, "round2");
    r.pass = std::llround(computed * 100.0) == std::llround(r.expected * 100.0) &&
             std::abs(computed - high_precision) <= 0.005;
    rows_.push_back(r);
  }
  void abs(const std::string& id, const std::string& label, double computed, double expected,
           double tol) {
    CheckRow r = base(id, label, computed, expected, tol, "abs");
    r.pass = std::abs(computed - r.expected) <= tol;
    rows_.push_back(r);
  }
  void exact(const std::string& id, const std::string& label, double computed, double expected) {
    CheckRow r = base(id, label, computed, expected, 0.0, "exact");
    r.pass = computed == r.expected;
    rows_.push_back(r);
  }
  void greater(const std::string& id, const std::string& label, double computed, double bound) {
    CheckRow r = base(id, label, computed, bound, 0.0, "greater");
    r.pass = computed > r.expected;
    rows_.push_back(r);
  }
  std::vector<CheckRow> take() { return std::move(rows_); }

 private:
  CheckRow base(const std::string& id, const std::string& label, double computed, double expected,
                double tol, const char* rule) const {
    CheckRow r;
    r.id = id;
    r.quantity = label;
    r.computed = computed;
    r.expected = expected;
    if (id == opts_.corrupt_row) r.expected += (std::string(rule) == "exact") ? 1.0 : 0.5;
    r.tolerance = tol;
    r.rule = rule;
    return r;
  }

  const VerifyOptions& opts_;
  std::vector<CheckRow> rows_;
};

const char* kBlockNames[] = {"intra1", "intra2", "cross12", "cross21"};

}  // namespace

std::vector<CheckRow> verify_worked_example(const VerifyOptions& opts) {
  RowBuilder rows(opts);

  // Ten agents in groups of four and six.
  const EdgeBlockIndex ten(GroupPartition::from_sizes({4, 6}));
  const int sizes_e[] = {16, 36, 24, 24};
  int covered = 0;
  for (int b = 0; b < 4; ++b) {
    rows.exact(std::string("layout10.") + kBlockNames[b], "10-agent block size",
               ten.block(b).size(), sizes_e[b]);
    covered += ten.block(b).size();
  }
  rows.exact("layout10.total", "10-agent edges covered", covered, 100);

  const EdgeBlockIndex five(GroupPartition::from_sizes({2, 3}));
  const int sizes_f[] = {4, 9, 6, 6};
  covered = 0;
  for (int b = 0; b < 4; ++b) {
    rows.exact(std::string("layout5.") + kBlockNames[b], "5-agent block size", five.block(b).size(),
               sizes_f[b]);
    covered += five.block(b).size();
  }
  rows.exact("layout5.total", "5-agent edges covered", covered, 25);

  // Part I: zero-mean block-isotropic aggregate against three priors.
  const double agg_var[] = {0.9, 0.8, 0.3, 0.3};
  std::map<BlockId, BlockAggregate> aggregate;
  std::map<BlockId, std::vector<double>> block_vars;
  for (int b = 0; b < 4; ++b) {
    aggregate[b] = {agg_var[b], ten.block(b).size()};
    block_vars[b] = std::vector<double>(static_cast<std::size_t>(ten.block(b).size()), agg_var[b]);
  }
  const BlockPrior flat = flat_prior(0.6, ten);
  const BlockPrior matched = matched_group_prior(block_vars);
  const BlockPrior sub = group_prior(ten, 0.7, 0.4);
  const auto flat_gap = bound_gap(aggregate, flat, matched);
  const auto sub_gap = bound_gap(aggregate, flat, sub);

  const double flat_published[] = {0.76, 0.82, 2.32, 2.32};
  const double sub_published[] = {0.28, 0.16, 0.46, 0.46};
  const double sub_scale[] = {0.7, 0.7, 0.4, 0.4};
  double flat_hp = 0.0, sub_hp = 0.0, matched_hp = 0.0;
  for (int b = 0; b < 4; ++b) {
    const int k = ten.block(b).size();
    const double hf = zero_mean_block_kl_hp(agg_var[b], k, 0.6L);
    const double hs = zero_mean_block_kl_hp(agg_var[b], k, sub_scale[b]);
    flat_hp += hf;
    sub_hp += hs;
    matched_hp += zero_mean_block_kl_hp(agg_var[b], k, agg_var[b]);
    rows.round2(std::string("flat.") + kBlockNames[b], "flat prior block KL",
                flat_gap.per_block_flat[static_cast<std::size_t>(b)], flat_published[b], hf);
  }
  rows.round2("flat.total", "flat prior total KL", flat_gap.flat_expected_kl, 6.22, flat_hp);
  rows.round2("matched.total", "matched group prior total KL", flat_gap.group_expected_kl, 0.0,
              matched_hp);
  rows.round2("matched.gap", "flat minus matched gap", flat_gap.gap, 6.22, flat_hp - matched_hp);
  for (int b = 0; b < 4; ++b) {
    const double hs = zero_mean_block_kl_hp(agg_var[b], ten.block(b).size(), sub_scale[b]);
    rows.round2(std::string("sub.") + kBlockNames[b], "suboptimal group prior block KL",
                sub_gap.per_block_group[static_cast<std::size_t>(b)], sub_published[b], hs);
  }
  rows.round2("sub.total", "suboptimal group prior total KL", sub_gap.group_expected_kl, 1.36, sub_hp);
  rows.round2("sub.reduction", "suboptimal reduction vs flat", sub_gap.gap / sub_gap.flat_expected_kl,
              0.78, (flat_hp - sub_hp) / flat_hp);

  // Part II: per-edge encoder outputs against the heterogeneous prior.
  const double pd_intra = gauss_kl_term(0.3, std::log(0.8), 1.0);
  const double pd_cross = gauss_kl_term(0.1, std::log(0.3), 0.5);
  rows.abs("aib.per_dim_intra", "per-dimension intra KL", pd_intra, 0.057, 0.01);
  rows.abs("aib.per_dim_cross", "per-dimension cross KL", pd_cross, 0.066, 0.01);

  BlockPrior het;
  het.per_block_scale = {1.0, 1.0, 0.5, 0.5};
  std::map<BlockId, DiagGaussian> post;
  for (const auto& blk : ten.blocks()) {
    const auto k = static_cast<std::size_t>(blk.size());
    post.emplace(blk.id, blk.intra() ? DiagGaussian::from_variance(std::vector<double>(k, 0.3),
                                                                   std::vector<double>(k, 0.8))
                                     : DiagGaussian::from_variance(std::vector<double>(k, 0.1),
                                                                   std::vector<double>(k, 0.3)));
  }
  const KlBreakdown aib = blockwise_kl(post, het);
  const double aib_published[] = {0.91, 2.05, 1.58, 1.58};
  for (int b = 0; b < 4; ++b)
    rows.abs(std::string("aib.") + kBlockNames[b], "per-block AIB", aib.at(b), aib_published[b], 0.01);
  rows.abs("aib.total", "total AIB", aib.total, 6.12, 0.01);

  LossConfig weights;
  weights.lambda_a_dim = 0.001;
  weights.block_size_scaling = false;
  weights.intra_weight = 1.0;
  weights.cross_weight = 10.0;
  std::vector<double> per_block;
  for (int b = 0; b < 4; ++b) per_block.push_back(aib.at(b));
  const LossReport rep = assemble_loss_from_parts(0.0, {per_block}, {}, weights, ten, 0);
  double pen_intra = 0.0, pen_cross = 0.0;
  for (int b = 0; b < 4; ++b) {
    const double part = rep.lambda_a[0][static_cast<std::size_t>(b)] * per_block[static_cast<std::size_t>(b)];
    (ten.block(b).intra() ? pen_intra : pen_cross) += part;
  }
  rows.abs("penalty.intra", "intra penalty contribution", pen_intra, 0.003, 0.01);
  rows.abs("penalty.cross", "cross penalty contribution", pen_cross, 0.032, 0.01);
  rows.abs("penalty.total", "heterogeneous penalty", rep.aib_penalty(), 0.035, 0.01);
  rows.greater("penalty.cross_share", "cross share of penalty", pen_cross / rep.aib_penalty(), 0.9);
  auto out = rows.take();
  if (!opts.corrupt_row.empty() &&
      std::none_of(out.begin(), out.end(), [&](const CheckRow& r) { return r.id == opts.corrupt_row; }))
    throw ContractViolation("verify: no row named '" + opts.corrupt_row + "'");
  return out;
}

bool all_pass(const std::vector<CheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

void print_check_table(std::ostream& out, const std::vector<CheckRow>& rows) {
  out << std::left << std::setw(22) << "row" << std::setw(34) << "quantity" << std::right
      << std::setw(14) << "computed" << std::setw(12) << "published" << std::setw(10) << "rule"
      << "  status\n";
  for (const auto& r : rows) {
    std::ostringstream rule;
    rule << r.rule;
    if (r.rule == "abs") rule << "<=" << r.tolerance;
    out << std::left << std::setw(22) << r.id << std::setw(34) << r.quantity << std::right
        << std::setw(14) << std::fixed << std::setprecision(6) << r.computed << std::setw(12)
        << std::setprecision(3) << r.expected << std::setw(10) << rule.str() << "  "
        << (r.pass ? "ok" : "MISMATCH") << '\n';
    out.unsetf(std::ios::fixed);
  }
}

// ============================================================ properties

GridOptimum grid_allocation(const std::vector<Channel>& channels, double budget, double h) {
  require(h > 0.0 && budget >= 0.0, "grid_allocation: need h > 0 and budget >= 0");
  const auto units = static_cast<std::size_t>(std::floor(budget / h + 1e-9));
  const std::size_t C = channels.size();
  std::vector<std::vector<double>> best(C + 1, std::vector<double>(units + 1, 0.0));
  std::vector<std::vector<std::size_t>> choice(C, std::vector<std::size_t>(units + 1, 0));
  for (std::size_t c = 0; c < C; ++c) {
    const auto& ch = channels[c];
    const std::size_t cap =
        std::isfinite(ch.max_rate)
            ? std::min(units, static_cast<std::size_t>(std::floor(ch.max_rate / h + 1e-9)))
            : units;
    std::vector<double> value(cap + 1);
    for (std::size_t k = 0; k <= cap; ++k) value[k] = ch.curve.cumulative(static_cast<double>(k) * h);
    for (std::size_t b = 0; b <= units; ++b) {
      double top = -1.0;
      std::size_t arg = 0;
      for (std::size_t k = 0; k <= std::min(cap, b); ++k) {
        const double v = value[k] + best[c][b - k];
        if (v > top) {
          top = v;
          arg = k;
        }
      }
      best[c + 1][b] = top;
      choice[c][b] = arg;
    }
  }
  GridOptimum g;
  g.objective = best[C][units];
  g.rates.assign(C, 0.0);
  std::size_t b = units;
  for (std::size_t c = C; c-- > 0;) {
    const std::size_t k = choice[c][b];
    g.rates[c] = static_cast<double>(k) * h;
    b -= k;
  }
  return g;
}

namespace {

// Accumulates one property check: trial count, worst margin, first failure.
struct Check {
  explicit Check(std::string n) : name(std::move(n)) {}

  std::string name;
  int trials = 0;
  bool ok = true;
  double worst = 0.0;
  json counterexample;

  void fail(json cx) {
    if (ok) counterexample = std::move(cx);
    ok = false;
  }
  json to_json() const {
    json j{{"name", name}, {"trials", trials}, {"ok", ok}, {"worst", worst}};
    if (!ok) j["counterexample"] = counterexample;
    return j;
  }
};

std::vector<double> draw(std::mt19937_64& rng, std::size_t k, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(k);
  for (auto& x : v) x = u(rng);
  return v;
}

int draw_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<json> suite_prop1(std::mt19937_64& rng, int trials) {
  Check nonneg{"prop1.kl_nonnegative"}, decomp{"prop1.mi_kl_identity"};
  for (int t = 0; t < trials; ++t) {
    const auto dim = static_cast<std::size_t>(draw_int(rng, 1, 8));
    const int comps = draw_int(rng, 1, 6);
    const double scale = draw(rng, 1, 0.2, 3.0)[0];
    std::vector<WeightedGaussian> ens;
    auto w = draw(rng, static_cast<std::size_t>(comps), 0.05, 1.0);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (int c = 0; c < comps; ++c)
      ens.push_back({w[static_cast<std::size_t>(c)] / wsum,
                     DiagGaussian::from_variance(draw(rng, dim, -1.5, 1.5), draw(rng, dim, 0.05, 3.0))});
    const IsotropicPrior prior(scale, dim);
    for (const auto& e : ens) {
      const double kl = diag_gauss_kl(e.dist, prior);
      ++nonneg.trials;
      nonneg.worst = std::min(nonneg.worst, kl);
      if (kl < -1e-12) nonneg.fail({{"kl", kl}, {"mean", e.dist.mean}, {"log_var", e.dist.log_var}, {"prior", scale}});
    }
    const auto d = mi_kl_decomposition(ens, prior);
    ++decomp.trials;
    const double err = std::abs(d.expected_kl - (d.mi_estimate + d.prior_gap)) /
                       std::max(1.0, std::abs(d.expected_kl));
    decomp.worst = std::max(decomp.worst, err);
    if (err > 1e-12 || d.mi_estimate < -1e-12)
      decomp.fail({{"expected_kl", d.expected_kl}, {"prior_gap", d.prior_gap}, {"mi", d.mi_estimate}});
  }
  return {nonneg.to_json(), decomp.to_json()};
}

std::vector<json> suite_prop2(std::mt19937_64& rng, int trials) {
  Check regret{"prop2.no_regret"}, strict{"prop2.strict_gap"};
  regret.worst = INFINITY;
  strict.worst = INFINITY;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> sizes(static_cast<std::size_t>(draw_int(rng, 1, 4)));
    for (auto& s : sizes) s = draw_int(rng, 1, 5);
    const EdgeBlockIndex blocks(GroupPartition::from_sizes(sizes));
    std::map<BlockId, BlockAggregate> agg;
    std::map<BlockId, std::vector<double>> vars;
    double lo = INFINITY, hi = 0.0;
    std::vector<double> all_vars;
    for (const auto& b : blocks.blocks()) {
      const double v = draw(rng, 1, 0.05, 2.0)[0];
      agg[b.id] = {v, b.size()};
      vars[b.id] = std::vector<double>(static_cast<std::size_t>(b.size()), v);
      all_vars.insert(all_vars.end(), static_cast<std::size_t>(b.size()), v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    // Alternate between the best flat prior and an arbitrary one.
    const double flat_scale = t % 2 == 0 ? matched_isotropic_scale(all_vars) : draw(rng, 1, 0.05, 2.0)[0];
    const auto r = bound_gap(agg, flat_prior(flat_scale, blocks), matched_group_prior(vars));
    ++regret.trials;
    regret.worst = std::min(regret.worst, r.gap);
    if (r.gap < -1e-9) regret.fail({{"sizes", sizes}, {"flat_scale", flat_scale}, {"gap", r.gap}});
    if (hi - lo > 1e-6) {
      ++strict.trials;
      strict.worst = std::min(strict.worst, r.gap);
      if (!(r.gap > 0.0)) strict.fail({{"sizes", sizes}, {"flat_scale", flat_scale}, {"gap", r.gap}});
    }
  }
  return {regret.to_json(), strict.to_json()};
}

std::vector<json> suite_prop3(std::mt19937_64& rng, int trials) {
  Check equal{"prop3.additivity_equal_scales"}, mixed{"prop3.additivity_block_scales"};
  for (int t = 0; t < trials; ++t) {
    std::vector<int> sizes(static_cast<std::size_t>(draw_int(rng, 1, 4)));
    for (auto& s : sizes) s = draw_int(rng, 1, 4);
    const EdgeBlockIndex blocks(GroupPartition::from_sizes(sizes));
    const double s0 = draw(rng, 1, 0.1, 2.0)[0];
    BlockPrior same = flat_prior(s0, blocks);
    BlockPrior diff;
    std::map<BlockId, DiagGaussian> post;
    std::vector<double> mu, lv, prior_var;
    for (const auto& b : blocks.blocks()) {
      const auto k = static_cast<std::size_t>(b.size());
      auto m = draw(rng, k, -1.0, 1.0);
      auto l = draw(rng, k, -3.0, 1.0);
      const double sb = draw(rng, 1, 0.1, 2.0)[0];
      diff.per_block_scale.push_back(sb);
      mu.insert(mu.end(), m.begin(), m.end());
      lv.insert(lv.end(), l.begin(), l.end());
      prior_var.insert(prior_var.end(), k, sb);
      post.emplace(b.id, DiagGaussian(m, l));
    }
    const DiagGaussian whole(mu, lv);
    const double mono_same = diag_gauss_kl(whole, IsotropicPrior(s0, whole.dim()));
    const double block_same = blockwise_kl(post, same).total;
    const double mono_diff = diag_gauss_kl(whole, prior_var);
    const double block_diff = blockwise_kl(post, diff).total;
    const double e1 = std::abs(block_same - mono_same) / std::max(std::abs(mono_same), 1e-300);
    const double e2 = std::abs(block_diff - mono_diff) / std::max(std::abs(mono_diff), 1e-300);
    ++equal.trials;
    ++mixed.trials;
    equal.worst = std::max(equal.worst, e1);
    mixed.worst = std::max(mixed.worst, e2);
    if (e1 > 1e-12) equal.fail({{"sizes", sizes}, {"blockwise", block_same}, {"monolithic", mono_same}});
    if (e2 > 1e-12) mixed.fail({{"sizes", sizes}, {"blockwise", block_diff}, {"monolithic", mono_diff}});
  }
  return {equal.to_json(), mixed.to_json()};
}

std::vector<json> suite_prop4(std::mt19937_64& rng, int trials) {
  Check limit{"prop4.zero_loss_limit"}, mono{"prop4.monotone"}, contain{"prop4.containment"},
      recover{"prop4.exact_recovery"};
  for (long K : {2L, 4L, 16L, 64L}) {
    for (double delta : {0.5, 1.0, 2.0}) {
      const double H = std::log(static_cast<double>(K));
      RelevanceInputs in{1e-12, delta, K, H};
      const auto b = fano_relevance_lower_bound(in);
      ++limit.trials;
      limit.worst = std::max(limit.worst, std::abs(b.bound - H));
      if (std::abs(b.bound - H) > 1e-6 || !b.valid)
        limit.fail({{"K", K}, {"delta", delta}, {"bound", b.bound}, {"H", H}});
      const double c = delta * delta / (4.0 * K);
      const double l_max = c * (K - 1.0) / K;
      double prev = INFINITY;
      for (int i = 0; i < 1000; ++i) {
        in.td_loss = l_max * i / 999.0;
        const double v = fano_relevance_lower_bound(in).bound;
        ++mono.trials;
        if (v > prev + 1e-12) {
          mono.worst = std::max(mono.worst, v - prev);
          mono.fail({{"K", K}, {"delta", delta}, {"td_loss", in.td_loss}, {"prev", prev}, {"value", v}});
        }
        prev = v;
      }
    }
  }
  for (int t = 0; t < trials; ++t) {
    const int S = draw_int(rng, 1, 4);
    const long K = 1L << draw_int(rng, 1, 3);
    std::vector<std::vector<double>> qs(static_cast<std::size_t>(S)), q(static_cast<std::size_t>(S));
    std::vector<double> dist = draw(rng, static_cast<std::size_t>(S), 0.1, 1.0);
    const double dsum = std::accumulate(dist.begin(), dist.end(), 0.0);
    for (auto& d : dist) d /= dsum;
    double delta = INFINITY;
    for (int s = 0; s < S; ++s) {
      auto& row = qs[static_cast<std::size_t>(s)];
      row = draw(rng, static_cast<std::size_t>(K), 0.0, 1.0);
      const auto best = static_cast<std::size_t>(draw_int(rng, 0, static_cast<int>(K) - 1));
      const double top = *std::max_element(row.begin(), row.end());
      row[best] = top + draw(rng, 1, 0.05, 0.5)[0];
      for (std::size_t a = 0; a < row.size(); ++a)
        if (a != best) delta = std::min(delta, row[best] - row[a]);
    }
    const bool recovery = t % 4 == 0;
    const double amp = recovery ? 0.49 * delta : draw(rng, 1, 0.0, 1.0)[0];
    for (int s = 0; s < S; ++s) {
      const auto& row = qs[static_cast<std::size_t>(s)];
      auto noise = draw(rng, row.size(), -amp, amp);
      auto& out = q[static_cast<std::size_t>(s)];
      out.resize(row.size());
      for (std::size_t a = 0; a < row.size(); ++a) out[a] = row[a] + noise[a];
    }
    const auto chk = empirical_relevance_check(q, qs, dist);
    ++contain.trials;
    contain.worst = std::max(contain.worst, chk.measured_pe - chk.pe_bound);
    if (!chk.contained)
      contain.fail({{"measured_pe", chk.measured_pe}, {"pe_bound", chk.pe_bound}, {"q", q}, {"q_star", qs}});
    if (recovery) {
      ++recover.trials;
      recover.worst = std::max(recover.worst, chk.measured_pe);
      if (chk.measured_pe != 0.0)
        recover.fail({{"measured_pe", chk.measured_pe}, {"q", q}, {"q_star", qs}});
    }
  }
  return {limit.to_json(), mono.to_json(), contain.to_json(), recover.to_json()};
}

std::vector<Channel> random_channels(std::mt19937_64& rng) {
  std::vector<Channel> ch;
  const int C = draw_int(rng, 1, 5);
  for (int c = 0; c < C; ++c) {
    const int family = draw_int(rng, 0, 2);
    const double a = draw(rng, 1, 0.2, 4.0)[0];
    UtilityCurve curve = UtilityCurve::reciprocal(a);
    if (family == 1) curve = UtilityCurve::exponential(a, draw(rng, 1, 0.3, 3.0)[0]);
    if (family == 2) {
      const int knots = draw_int(rng, 2, 5);
      std::vector<double> r{0.0}, u{a};
      for (int j = 1; j < knots; ++j) {
        r.push_back(r.back() + draw(rng, 1, 0.1, 1.0)[0]);
        u.push_back(j + 1 == knots ? 0.0 : u.back() * draw(rng, 1, 0.2, 0.9)[0]);
      }
      curve = UtilityCurve::tabulated(std::move(r), std::move(u));
    }
    Channel k{"c" + std::to_string(c), c % 2 ? ChannelKind::kXib : ChannelKind::kAib,
              std::move(curve)};
    if (draw_int(rng, 0, 3) == 0) k.max_rate = draw(rng, 1, 0.1, 1.0)[0];
    ch.push_back(std::move(k));
  }
  return ch;
}

std::vector<json> suite_prop5(std::mt19937_64& rng, int trials) {
  Check grid{"prop5.grid_oracle"}, marginal{"prop5.equal_marginals"}, kkt{"prop5.kkt"},
      dual{"prop5.dual_ascent"};
  const double h = 1e-3;
  const int problems = std::min(trials, 50);
  for (int t = 0; t < problems; ++t) {
    const auto ch = random_channels(rng);
    const double budget = draw(rng, 1, 0.2, 2.0)[0];
    const auto res = water_fill(ch, budget);
    const auto oracle = grid_allocation(ch, budget, h);
    double umax = 0.0;
    for (const auto& c : ch) umax += c.curve.utility(0.0);
    const double obj = total_utility(ch, res.rates);
    const double diff = obj - oracle.objective;
    ++grid.trials;
    grid.worst = std::max(grid.worst, std::abs(diff) / (h * umax));
    if (diff < -1e-9 || diff > h * umax)
      grid.fail({{"budget", budget}, {"water_fill", res.rates}, {"grid", oracle.rates},
                 {"objective", obj}, {"grid_objective", oracle.objective}});
    for (std::size_t c = 0; c < ch.size(); ++c) {
      const double r = res.rates[c];
      if (r > 1e-9 && r < ch[c].max_rate - 1e-9) {
        const double gap = std::abs(ch[c].curve.utility(r) - res.water_level);
        ++marginal.trials;
        marginal.worst = std::max(marginal.worst, gap);
        if (gap > 1e-6) marginal.fail({{"channel", c}, {"rate", r}, {"nu", res.water_level}});
      }
    }
    const auto report = verify_kkt(ch, res, 1e-6);
    ++kkt.trials;
    if (!report.ok) kkt.fail({{"violations", report.violations}});
  }
  // Closed loop against a quadratic inner problem: R_b = max(0, R0_b - lambda_b / a_b).
  for (int t = 0; t < std::min(trials, 20); ++t) {
    const int B = draw_int(rng, 1, 4);
    std::vector<double> a = draw(rng, static_cast<std::size_t>(B), 1.0, 5.0);
    std::vector<double> r0 = draw(rng, static_cast<std::size_t>(B), 1.0, 3.0);
    DualState st;
    st.step = 0.5 * *std::min_element(a.begin(), a.end());
    for (int b = 0; b < B; ++b) {
      st.multipliers[b] = 0.0;
      st.targets[b] = draw(rng, 1, 0.2, r0[static_cast<std::size_t>(b)] - 0.1)[0];
    }
    std::map<int, double> measured;
    double err = INFINITY;
    for (int it = 0; it < 500; ++it) {
      for (int b = 0; b < B; ++b)
        measured[b] = std::max(0.0, r0[static_cast<std::size_t>(b)] -
                                        st.multipliers[b] / a[static_cast<std::size_t>(b)]);
      st = dual_ascent_step(st, measured);
    }
    err = 0.0;
    for (int b = 0; b < B; ++b) {
      const double r = std::max(0.0, r0[static_cast<std::size_t>(b)] -
                                         st.multipliers[b] / a[static_cast<std::size_t>(b)]);
      err = std::max(err, std::abs(r - st.targets[b]) / st.targets[b]);
    }
    ++dual.trials;
    dual.worst = std::max(dual.worst, err);
    if (err > 0.05) dual.fail({{"a", a}, {"r0", r0}, {"relative_error", err}});
  }
  return {grid.to_json(), marginal.to_json(), kkt.to_json(), dual.to_json()};
}

std::vector<json> suite_network(std::mt19937_64& rng, int trials) {
  Check recompose{"network.loss_recomposition"}, monotone{"network.monotone_mixer"},
      replay{"network.noise_replay"}, prior_zero{"network.kl_zero_at_prior"};
  const auto partition = GroupPartition::from_sizes({2, 1});
  const EdgeBlockIndex blocks(partition);
  NetworkConfig cfg;
  cfg.num_agents = 3;
  cfg.input_dim = 5;
  cfg.state_dim = 3;
  cfg.message_dim = 4;
  cfg.code_dim = 2;
  cfg.q_hidden = 5;
  const BlockPrior prior = group_prior(blocks, 0.5, 0.1, 0.7);
  const HibcgNetwork net(cfg, partition, prior);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int cases = std::min(trials, 100);
  for (int t = 0; t < cases; ++t) {
    NetworkParams p = net.init_params(rng);
    SampleInput in;
    in.agent_inputs = Mat::NullaryExpr(3, 5, [&] { return normal(rng); });
    in.state = Vec::NullaryExpr(3, [&] { return normal(rng); });
    in.actions = {draw_int(rng, 0, 1), draw_int(rng, 0, 1), draw_int(rng, 0, 1)};
    const auto noise = net.draw_noise(in, rng);
    const auto t1 = net.forward(p, in, noise);
    const auto t2 = net.forward(p, in, noise);
    ++replay.trials;
    if (t1.q_tot != t2.q_tot || t1.z_out != t2.z_out) replay.fail({{"case", t}});

    LossConfig lc;
    lc.lambda_a_dim = draw(rng, 1, 0.0, 0.1)[0];
    lc.lambda_x_dim = draw(rng, 1, 0.0, 0.1)[0];
    lc.warmup_steps = 10;
    BatchTrace bt{{t1}};
    const auto rep = net.assemble_loss(bt, {normal(rng)}, lc, draw_int(rng, 0, 20));
    const double err = std::abs(rep.total - rep.recompute_total());
    ++recompose.trials;
    recompose.worst = std::max(recompose.worst, err);
    if (err > 1e-12) recompose.fail({{"total", rep.total}, {"recomputed", rep.recompute_total()}});

    // Raising any chosen utility never lowers the mixed value.
    for (int probe = 0; probe < 10; ++probe) {
      const Vec state = Vec::NullaryExpr(3, [&] { return 3.0 * normal(rng); });
      const Mat z = Mat::NullaryExpr(3, 2, [&] { return normal(rng); });
      const auto m = q_heads_and_mix(in.agent_inputs, z, p, state, in.actions);
      ++monotone.trials;
      const double wmin = m.w.minCoeff();
      monotone.worst = std::min(monotone.worst, wmin);
      if (wmin < 0.0) monotone.fail({{"weights", std::vector<double>(m.w.data(), m.w.data() + m.w.size())}});
    }

    // Encoder outputs pinned to the prior: zero the output weights and set the biases.
    NetworkParams q = p;
    q.layers[0].enc_wmu.setZero();
    q.layers[0].enc_bmu.setZero();
    q.layers[0].enc_wlv.setZero();
    q.xib_wmu.setZero();
    q.xib_bmu.setZero();
    q.xib_wlv.setZero();
    q.xib_blv.setConstant(std::log(prior.feature_scale));
    // Single shared log-variance only matches one block scale; use a flat prior here.
    const HibcgNetwork flat_net(cfg, partition, flat_prior(0.5, blocks, 0.7));
    q.layers[0].enc_blv.setConstant(std::log(0.5));
    const auto tz = flat_net.forward(q, in, noise);
    const double kl = flat_net.layer_aib(tz, 0).total + [&] {
      double s = 0.0;
      for (double x : flat_net.sample_xib(tz)) s += x;
      return s;
    }();
    ++prior_zero.trials;
    prior_zero.worst = std::max(prior_zero.worst, std::abs(kl));
    if (std::abs(kl) > 1e-12) prior_zero.fail({{"kl", kl}});
  }
  return {recompose.to_json(), monotone.to_json(), replay.to_json(), prior_zero.to_json()};
}

}  // namespace

const std::vector<std::string>& prop_suite_names() {
  static const std::vector<std::string> names{"prop1", "prop2", "prop3", "prop4", "prop5", "network"};
  return names;
}

json run_props(const PropsOptions& opts) {
  const auto& names = prop_suite_names();
  if (opts.suite != "all" && std::find(names.begin(), names.end(), opts.suite) == names.end())
    throw ContractViolation("props: unknown suite '" + opts.suite + "'");
  require(opts.trials >= 1, "props: trials must be positive");
  json checks = json::array();
  bool ok = true;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (opts.suite != "all" && opts.suite != names[k]) continue;
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::vector<json> part;
    switch (k) {
      case 0: part = suite_prop1(rng, opts.trials); break;
      case 1: part = suite_prop2(rng, opts.trials); break;
      case 2: part = suite_prop3(rng, opts.trials); break;
      case 3: part = suite_prop4(rng, opts.trials); break;
      case 4: part = suite_prop5(rng, opts.trials); break;
      default: part = suite_network(rng, opts.trials); break;
    }
    for (auto& c : part) {
      ok = ok && c["ok"].get<bool>();
      checks.push_back(std::move(c));
    }
  }
  return {{"suite", opts.suite}, {"seed", opts.seed}, {"trials", opts.trials}, {"ok", ok}, {"checks", checks}};
}

// ============================================================ training

bool TrainOutcome::ok() const {
  return std::all_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.ok; });
}

bool SweepOutcome::ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const TrainOutcome& r) { return r.ok(); });
}

std::string output_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("HIBCG_OUT"); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

namespace {

TrainOutcome train_into(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "config.json", std::ios::binary);
    f << config_to_json(cfg).dump(2) << '\n';
  }
  TrainOutcome out;
  out.dir = dir;
  out.seeds.resize(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cfg.seeds.size(); k = next++) {
      auto& s = out.seeds[k];
      s.seed = cfg.seeds[k];
      s.dir = (fs::path(dir) / ("seed_" + std::to_string(s.seed))).string();
      try {
        const RunLog log = train(cfg, s.seed);
        write_run_artifacts(log, cfg, s.dir);
        s.summary = log.summary;
        s.ok = true;
      } catch (const std::exception& e) {
        s.error = e.what();
        fs::create_directories(s.dir);
        std::ofstream f(fs::path(s.dir) / "diverged.txt", std::ios::binary);
        f << s.error << '\n';
      }
    }
  };
  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cfg.seeds.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  json seeds = json::array();
  std::vector<RunSummary> good;
  for (const auto& s : out.seeds) {
    if (s.ok) {
      seeds.push_back(summary_to_json(s.summary));
      good.push_back(s.summary);
    } else {
      seeds.push_back({{"seed", s.seed}, {"error", s.error}});
    }
  }
  auto mean = [&good](double RunSummary::*field) {
    double acc = 0.0;
    for (const auto& s : good) acc += s.*field;
    return good.empty() ? 0.0 : acc / static_cast<double>(good.size());
  };
  json agg{{"name", cfg.name},
           {"seeds_ok", good.size()},
           {"seeds_total", out.seeds.size()},
           {"mean_tail_eval_return_per_step", mean(&RunSummary::tail_eval_return_per_step)},
           {"mean_tail_train_return_per_step", mean(&RunSummary::tail_train_return_per_step)},
           {"mean_tail_intra_kl_per_edge", mean(&RunSummary::tail_intra_kl_per_edge)},
           {"mean_tail_cross_kl_per_edge", mean(&RunSummary::tail_cross_kl_per_edge)},
           {"mean_cross_intra_ratio", mean(&RunSummary::cross_intra_ratio)},
           {"runs", seeds}};
  std::ofstream f(fs::path(dir) / "aggregate.json", std::ios::binary);
  f << agg.dump(2) << '\n';
  return out;
}

std::string ratio_key(double r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

}  // namespace

TrainOutcome train_config(const RunConfig& cfg, const std::string& root) {
  return train_into(cfg, (fs::path(root) / cfg.name).string());
}

std::pair<double, double> sweep_scales(double ratio, double base) {
  require(ratio > 0.0 && std::isfinite(ratio), "sweep: ratios must be positive");
  require(base > 0.0, "sweep: base scale must be positive");
  return ratio >= 1.0 ? std::pair{base * ratio, base} : std::pair{base, base / ratio};
}

std::vector<double> parse_ratio_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ContractViolation("sweep: bad ratio '" + tok + "'");
    require(v > 0.0 && std::isfinite(v), "sweep: ratios must be positive");
    out.push_back(v);
  }
  require(!out.empty(), "sweep: empty ratio list");
  return out;
}

SweepOutcome sweep_sigma(const RunConfig& cfg, const std::vector<double>& ratios,
                         const std::string& root) {
  for (double r : ratios) require(r > 0.0 && std::isfinite(r), "sweep: ratios must be positive");
  const fs::path dir = fs::path(root) / cfg.name / "sweep";
  const double base = std::min(cfg.prior.sigma_intra, cfg.prior.sigma_cross);
  SweepOutcome out;
  std::ostringstream csv;
  csv << "ratio,sigma_intra,sigma_cross,seed,tail_eval_return_per_step,tail_train_return_per_step,"
         "tail_intra_kl_per_edge,tail_cross_kl_per_edge,cross_intra_ratio,status\n";
  csv << std::setprecision(10);
  for (double r : ratios) {
    RunConfig sub = cfg;
    std::tie(sub.prior.sigma_intra, sub.prior.sigma_cross) = sweep_scales(r, base);
    auto run = train_into(sub, (dir / ("ratio_" + ratio_key(r))).string());
    for (const auto& s : run.seeds) {
      const auto& m = s.summary;
      csv << ratio_key(r) << ',' << sub.prior.sigma_intra << ',' << sub.prior.sigma_cross << ','
          << s.seed << ',';
      if (s.ok) {
        csv << m.tail_eval_return_per_step << ',' << m.tail_train_return_per_step << ','
            << m.tail_intra_kl_per_edge << ',' << m.tail_cross_kl_per_edge << ','
            << m.cross_intra_ratio << ",ok\n";
      } else {
        csv << ",,,,,diverged\n";
      }
    }
    out.runs.push_back(std::move(run));
  }
  fs::create_directories(dir);
  out.csv_path = (dir / "sweep_sigma.csv").string();
  std::ofstream f(out.csv_path, std::ios::binary);
  f << csv.str();
  return out;
}

// ============================================================ allocation

bool allocate(const std::string& channels_path, double budget, std::ostream& out) {
  const auto channels = load_channels(channels_path);
  const auto result = water_fill(channels, budget);
  const auto kkt = verify_kkt(channels, result, 1e-6);
  write_allocation_csv(out, channels, result, kkt);
  return kkt.ok;
}

}  // namespace hibcg
