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

#include "hibcg/kl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hibcg/errors.hpp"

namespace hibcg {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

DiagGaussian::DiagGaussian(std::vector<double> mean_in, std::vector<double> log_var_in)
    : mean(std::move(mean_in)), log_var(std::move(log_var_in)) {
  require(!mean.empty(), "DiagGaussian: dimension must be >= 1");
  require(mean.size() == log_var.size(), "DiagGaussian: mean/log_var length mismatch");
  for (double v : mean) require_finite(v, "mean");
  for (double v : log_var) require_finite(v, "log-variance");
}

DiagGaussian DiagGaussian::from_variance(std::vector<double> mean,
                                         const std::vector<double>& variance) {
  std::vector<double> lv(variance.size());
  for (std::size_t d = 0; d < variance.size(); ++d) {
    require(variance[d] > 0.0, "DiagGaussian: variance must be positive");
    lv[d] = std::log(variance[d]);
  }
  return DiagGaussian(std::move(mean), std::move(lv));
}

DiagGaussian DiagGaussian::isotropic(std::size_t dim, double mu, double variance) {
  require(variance > 0.0, "DiagGaussian: variance must be positive");
  return DiagGaussian(std::vector<double>(dim, mu),
                      std::vector<double>(dim, std::log(variance)));
}

double DiagGaussian::variance(std::size_t d) const {
  return std::max(std::exp(log_var[d]), kVarianceFloor);
}

IsotropicPrior::IsotropicPrior(double s, std::size_t d) : scale(s), dim(d) {
  require(s > 0.0, "IsotropicPrior: scale must be positive");
  require(d >= 1, "IsotropicPrior: dim must be >= 1");
}

double BlockPrior::scale(BlockId b) const {
  require(b >= 0 && static_cast<std::size_t>(b) < per_block_scale.size(),
          "BlockPrior: unknown block id " + std::to_string(b));
  return per_block_scale[static_cast<std::size_t>(b)];
}

double KlBreakdown::at(BlockId b) const {
  for (const auto& [id, kl] : per_block)
    if (id == b) return kl;
  throw ContractViolation("KlBreakdown: no entry for block " + std::to_string(b));
}

double gauss_kl_term(double mu, double log_var, double prior_var) {
  const double var = std::max(std::exp(log_var), kVarianceFloor);
  return 0.5 * ((var + mu * mu) / prior_var - 1.0 + std::log(prior_var) - std::log(var));
}

double diag_gauss_kl(const DiagGaussian& p, const IsotropicPrior& prior) {
  require(p.dim() == prior.dim, "diag_gauss_kl: dimension mismatch (" +
                                    std::to_string(p.dim()) + " vs " +
                                    std::to_string(prior.dim) + ")");
  require_finite(prior.scale, "prior scale");
  double kl = 0.0;
  for (std::size_t d = 0; d < p.dim(); ++d)
    kl += gauss_kl_term(p.mean[d], p.log_var[d], prior.scale);
  require_finite(kl, "KL");
  return std::max(kl, 0.0);
}

double diag_gauss_kl(const DiagGaussian& p, std::span<const double> prior_var) {
  require(p.dim() == prior_var.size(), "diag_gauss_kl: dimension mismatch");
  double kl = 0.0;
  for (std::size_t d = 0; d < p.dim(); ++d) {
    require(prior_var[d] > 0.0, "diag_gauss_kl: prior variance must be positive");
    kl += gauss_kl_term(p.mean[d], p.log_var[d], prior_var[d]);
  }
  require_finite(kl, "KL");
  return std::max(kl, 0.0);
}

KlBreakdown blockwise_kl(const std::map<BlockId, DiagGaussian>& posteriors,
                         const BlockPrior& prior) {
  require(posteriors.size() == prior.num_blocks(),
          "blockwise_kl: posterior/prior block sets differ");
  KlBreakdown out;
  for (std::size_t b = 0; b < prior.num_blocks(); ++b) {
    const auto id = static_cast<BlockId>(b);
    auto it = posteriors.find(id);
    require(it != posteriors.end(), "blockwise_kl: missing posterior for block " +
                                        std::to_string(id));
    const double kl =
        diag_gauss_kl(it->second, IsotropicPrior(prior.scale(id), it->second.dim()));
    out.per_block.emplace_back(id, kl);
    out.total += kl;
  }
  return out;
}

double matched_isotropic_scale(std::span<const double> block_variances) {
  require(!block_variances.empty(), "matched_isotropic_scale: empty block");
  double sum = 0.0;
  for (double v : block_variances) {
    require(v > 0.0, "matched_isotropic_scale: variances must be positive");
    sum += v;
  }
  return sum / static_cast<double>(block_variances.size());
}

double anisotropy_kl(std::span<const double> block_variances) {
  const double am = matched_isotropic_scale(block_variances);
  double mean_log = 0.0;
  for (double v : block_variances) mean_log += std::log(v);
  const double k = static_cast<double>(block_variances.size());
  mean_log /= k;
  // log(AM) - log(GM) >= 0; clamp roundoff for constant vectors.
  return std::max(0.0, 0.5 * k * (std::log(am) - mean_log));
}

double gauss_zero_mean_kl(double block_var, int k, double prior_var) {
  require(block_var > 0.0 && prior_var > 0.0, "gauss_zero_mean_kl: variances must be positive");
  require(k >= 1, "gauss_zero_mean_kl: block size must be >= 1");
  const double r = block_var / prior_var;
  return 0.5 * k * (r - 1.0 - std::log(r));
}

DiagGaussian moment_matched(std::span<const WeightedGaussian> ensemble) {
  require(!ensemble.empty(), "moment_matched: empty ensemble");
  const std::size_t dim = ensemble.front().dist.dim();
  double wsum = 0.0;
  for (const auto& e : ensemble) {
    require(e.dist.dim() == dim, "moment_matched: inconsistent dimensions");
    require(e.weight >= 0.0, "moment_matched: negative weight");
    wsum += e.weight;
  }
  require(std::abs(wsum - 1.0) <= 1e-9, "moment_matched: weights must sum to 1");

  std::vector<double> mean(dim, 0.0), second(dim, 0.0), var(dim);
  for (const auto& e : ensemble) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double mu = e.dist.mean[d];
      mean[d] += e.weight * mu;
      second[d] += e.weight * (e.dist.variance(d) + mu * mu);
    }
  }
  for (std::size_t d = 0; d < dim; ++d)
    var[d] = std::max(second[d] - mean[d] * mean[d], kVarianceFloor);
  return DiagGaussian::from_variance(std::move(mean), var);
}

MiKlDecomposition mi_kl_decomposition(std::span<const WeightedGaussian> ensemble,
                                      const IsotropicPrior& prior) {
  const DiagGaussian agg = moment_matched(ensemble);
  double expected = 0.0;
  for (const auto& e : ensemble) expected += e.weight * diag_gauss_kl(e.dist, prior);
  const double gap = diag_gauss_kl(agg, prior);
  return {expected - gap, gap, expected};
}

}  // namespace hibcg
