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

// Closed-form Kullback-Leibler divergences between diagonal Gaussians and
// zero-mean isotropic (or block-isotropic) priors. All results are in nats.

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace hibcg {

// Variances below this are clamped before taking logs.
inline constexpr double kVarianceFloor = 1e-12;

using BlockId = int;

struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_var;

  DiagGaussian(std::vector<double> mean, std::vector<double> log_var);

  static DiagGaussian from_variance(std::vector<double> mean,
                                    const std::vector<double>& variance);
  static DiagGaussian isotropic(std::size_t dim, double mu, double variance);

  std::size_t dim() const { return mean.size(); }
  double variance(std::size_t d) const;
};

struct IsotropicPrior {
  double scale;  // sigma_0^2
  std::size_t dim;

  IsotropicPrior(double scale, std::size_t dim);
};

// Zero-mean prior with one isotropic variance per edge block, indexed by
// BlockId, plus the variance used for per-agent feature codes.
struct BlockPrior {
  std::vector<double> per_block_scale;
  double feature_scale = 1.0;

  double scale(BlockId b) const;
  std::size_t num_blocks() const { return per_block_scale.size(); }
};

struct KlBreakdown {
  std::vector<std::pair<BlockId, double>> per_block;
  double total = 0.0;

  double at(BlockId b) const;
};

// One dimension of the diagonal KL against N(0, prior_var).
double gauss_kl_term(double mu, double log_var, double prior_var);

double diag_gauss_kl(const DiagGaussian& p, const IsotropicPrior& prior);

// Same, with a separate prior variance per dimension.
double diag_gauss_kl(const DiagGaussian& p, std::span<const double> prior_var);

KlBreakdown blockwise_kl(const std::map<BlockId, DiagGaussian>& posteriors,
                         const BlockPrior& prior);

// tr(Sigma)/k: the isotropic variance minimising KL(N(0,Sigma) || N(0,sI)).
double matched_isotropic_scale(std::span<const double> block_variances);

// (k/2) log(AM/GM): residual KL left after matching an isotropic scale to a
// diagonal block.
double anisotropy_kl(std::span<const double> block_variances);

// KL(N(0, v I_k) || N(0, s I_k)).
double gauss_zero_mean_kl(double block_var, int k, double prior_var);

struct WeightedGaussian {
  double weight;
  DiagGaussian dist;
};

struct MiKlDecomposition {
  double mi_estimate;
  double prior_gap;
  double expected_kl;
};

// Gaussian with the mean and per-dimension variance of the mixture.
DiagGaussian moment_matched(std::span<const WeightedGaussian> ensemble);

// E_i KL(P_i || Q) = I + KL(Pbar || Q), with Pbar replaced by its moment
// match.
MiKlDecomposition mi_kl_decomposition(std::span<const WeightedGaussian> ensemble,
                                      const IsotropicPrior& prior);

}  // namespace hibcg
