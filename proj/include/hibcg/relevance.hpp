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

// Fano-based lower bound on the information a representation keeps about the
// optimal joint action, driven by the TD loss.

#include <vector>

namespace hibcg {

struct RelevanceInputs {
  double td_loss;    // >= 0
  double delta_min;  // minimum action-value gap, > 0
  long joint_actions;  // K >= 2
  double entropy_y;  // H(Y) in nats
};

double binary_entropy(double p);

struct PeBound {
  double value;
  bool in_domain;  // value <= (K-1)/K
};

// P_e <= L_TD / c with c = delta_min^2 / (4K).
PeBound pe_upper_bound(const RelevanceInputs& in);

struct RelevanceBound {
  double bound;
  bool valid;
};

// H(Y) - h(p) - p log(K-1) with p = pe_upper_bound. Returned even when p is
// outside the monotone domain, flagged invalid.
RelevanceBound fano_relevance_lower_bound(const RelevanceInputs& in);

struct RelevanceCheck {
  double measured_pe;
  double pe_bound;
  double delta_min;
  double mse;  // state-weighted mean over uniformly covered actions
  double implied_bound;  // Fano bound with uniform H(Y) over the optimal actions
  bool contained;  // measured_pe <= pe_bound
};

// Tables are [state][joint action]. state_dist must sum to 1. Throws
// ContractViolation when some state has a tied optimum in q_star.
RelevanceCheck empirical_relevance_check(const std::vector<std::vector<double>>& q_table,
                                         const std::vector<std::vector<double>>& q_star,
                                         const std::vector<double>& state_dist);

}  // namespace hibcg
