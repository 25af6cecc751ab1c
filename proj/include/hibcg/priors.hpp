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

// Flat and group-aligned block-diagonal priors over edge latents, and the
// bound-tightening gap between them.

#include <map>
#include <vector>

#include "hibcg/groups.hpp"
#include "hibcg/kl.hpp"

namespace hibcg {

enum class ScaleUnits { kStd, kVar };

// Converts a configured scale to a variance.
double to_variance(double value, ScaleUnits units);

BlockPrior flat_prior(double sigma0_sq, const EdgeBlockIndex& blocks, double feature_scale = 1.0);

BlockPrior group_prior(const EdgeBlockIndex& blocks, double sigma_intra_sq, double sigma_cross_sq,
                       double feature_scale = 1.0);

BlockPrior matched_group_prior(const std::map<BlockId, std::vector<double>>& block_variances);

struct BlockAggregate {
  double variance;  // zero-mean isotropic variance of the block
  int size;
};

struct BoundGapReport {
  double flat_expected_kl = 0.0;
  double group_expected_kl = 0.0;
  double gap = 0.0;
  std::vector<double> per_block_flat;
  std::vector<double> per_block_group;
};

BoundGapReport bound_gap(const std::map<BlockId, BlockAggregate>& aggregate, const BlockPrior& flat,
                         const BlockPrior& group);

}  // namespace hibcg
