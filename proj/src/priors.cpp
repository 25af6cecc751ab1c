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

#include "hibcg/priors.hpp"

#include <string>

#include "hibcg/errors.hpp"

namespace hibcg {

double to_variance(double value, ScaleUnits units) {
  require(value > 0.0, "prior scale must be positive");
  return units == ScaleUnits::kStd ? value * value : value;
}

BlockPrior flat_prior(double sigma0_sq, const EdgeBlockIndex& blocks, double feature_scale) {
  return group_prior(blocks, sigma0_sq, sigma0_sq, feature_scale);
}

BlockPrior group_prior(const EdgeBlockIndex& blocks, double sigma_intra_sq, double sigma_cross_sq,
                       double feature_scale) {
  require(sigma_intra_sq > 0.0 && sigma_cross_sq > 0.0, "group_prior: scales must be positive");
  require(feature_scale > 0.0, "group_prior: feature scale must be positive");
  BlockPrior prior;
  prior.feature_scale = feature_scale;
  for (const auto& b : blocks.blocks())
    prior.per_block_scale.push_back(b.intra() ? sigma_intra_sq : sigma_cross_sq);
  return prior;
}

BlockPrior matched_group_prior(const std::map<BlockId, std::vector<double>>& block_variances) {
  require(!block_variances.empty(), "matched_group_prior: no blocks");
  BlockPrior prior;
  BlockId expect = 0;
  for (const auto& [id, vars] : block_variances) {
    require(id == expect, "matched_group_prior: block ids must be 0..B-1");
    prior.per_block_scale.push_back(matched_isotropic_scale(vars));
    ++expect;
  }
  return prior;
}

BoundGapReport bound_gap(const std::map<BlockId, BlockAggregate>& aggregate, const BlockPrior& flat,
                         const BlockPrior& group) {
  require(aggregate.size() == flat.num_blocks() && aggregate.size() == group.num_blocks(),
          "bound_gap: block sets differ");
  BoundGapReport r;
  BlockId expect = 0;
  for (const auto& [id, agg] : aggregate) {
    require(id == expect, "bound_gap: block ids must be 0..B-1");
    const double f = gauss_zero_mean_kl(agg.variance, agg.size, flat.scale(id));
    const double g = gauss_zero_mean_kl(agg.variance, agg.size, group.scale(id));
    r.per_block_flat.push_back(f);
    r.per_block_group.push_back(g);
    r.flat_expected_kl += f;
    r.group_expected_kl += g;
    ++expect;
  }
  r.gap = r.flat_expected_kl - r.group_expected_kl;
  return r;
}

}  // namespace hibcg
