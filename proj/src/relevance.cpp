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

#include "hibcg/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hibcg/errors.hpp"

namespace hibcg {
namespace {

void check_inputs(const RelevanceInputs& in) {
  require(in.td_loss >= 0.0, "relevance: td_loss must be nonnegative");
  require(in.delta_min > 0.0, "relevance: delta_min must be positive");
  require(in.joint_actions >= 2, "relevance: need at least 2 joint actions");
  require(in.entropy_y >= 0.0, "relevance: entropy must be nonnegative");
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

double binary_entropy(double p) {
  require(p >= 0.0 && p <= 1.0, "binary_entropy: p must lie in [0, 1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

PeBound pe_upper_bound(const RelevanceInputs& in) {
  check_inputs(in);
  const double k = static_cast<double>(in.joint_actions);
  const double c = in.delta_min * in.delta_min / (4.0 * k);
  const double p = in.td_loss / c;
  return {p, p <= (k - 1.0) / k};
}

RelevanceBound fano_relevance_lower_bound(const RelevanceInputs& in) {
  const PeBound pe = pe_upper_bound(in);
  const double k = static_cast<double>(in.joint_actions);
  // h(p) is only defined on [0,1]; past the domain the bound is vacuous anyway.
  const double p = std::min(pe.value, 1.0);
  const double bound = in.entropy_y - binary_entropy(p) - pe.value * std::log(k - 1.0);
  return {bound, pe.in_domain};
}

RelevanceCheck empirical_relevance_check(const std::vector<std::vector<double>>& q_table,
                                         const std::vector<std::vector<double>>& q_star,
                                         const std::vector<double>& state_dist) {
  require(!q_star.empty(), "empirical_relevance_check: empty tables");
  require(q_table.size() == q_star.size() && state_dist.size() == q_star.size(),
          "empirical_relevance_check: table/state count mismatch");
  const std::size_t k = q_star.front().size();
  require(k >= 2, "empirical_relevance_check: need at least 2 joint actions");
  double mass = 0.0;
  for (double p : state_dist) {
    require(p >= 0.0, "empirical_relevance_check: negative state probability");
    mass += p;
  }
  require(std::abs(mass - 1.0) <= 1e-9, "empirical_relevance_check: state_dist must sum to 1");

  double delta_min = std::numeric_limits<double>::infinity();
  double mse = 0.0, pe = 0.0;
  std::map<std::size_t, double> optimal_mass;
  for (std::size_t s = 0; s < q_star.size(); ++s) {
    require(q_table[s].size() == k && q_star[s].size() == k,
            "empirical_relevance_check: action count mismatch");
    const std::size_t best = argmax(q_star[s]);
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < k; ++u)
      if (u != best) gap = std::min(gap, q_star[s][best] - q_star[s][u]);
    if (!(gap > 0.0))
      throw ContractViolation("empirical_relevance_check: optimal action not unique in state " +
                              std::to_string(s));
    delta_min = std::min(delta_min, gap);

    double se = 0.0;
    for (std::size_t u = 0; u < k; ++u) {
      const double e = q_table[s][u] - q_star[s][u];
      se += e * e;
    }
    mse += state_dist[s] * se / static_cast<double>(k);
    if (argmax(q_table[s]) != best) pe += state_dist[s];
    optimal_mass[best] += state_dist[s];
  }

  double h_y = 0.0;
  for (const auto& [u, p] : optimal_mass)
    if (p > 0.0) h_y -= p * std::log(p);
  h_y = std::max(h_y, 0.0);

  const RelevanceInputs in{mse, delta_min, static_cast<long>(k), h_y};
  const PeBound bound = pe_upper_bound(in);
  RelevanceCheck out;
  out.measured_pe = pe;
  out.pe_bound = bound.value;
  out.delta_min = delta_min;
  out.mse = mse;
  out.implied_bound = fano_relevance_lower_bound(in).bound;
  out.contained = pe <= bound.value + 1e-12;
  return out;
}

}  // namespace hibcg
