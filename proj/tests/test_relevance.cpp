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
#include <vector>

#include "doctest.h"
#include "hibcg/errors.hpp"
#include "hibcg/relevance.hpp"

using namespace hibcg;

TEST_SUITE("relevance-bound") {

TEST_CASE("binary entropy") {
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.5) == doctest::Approx(std::log(2.0)));
  CHECK(binary_entropy(0.25) == doctest::Approx(0.5623351446188083).epsilon(1e-14));
  CHECK_THROWS_AS(binary_entropy(1.5), ContractViolation);
}

TEST_CASE("error probability bound") {
  CHECK(pe_upper_bound({0.0, 1.0, 4, 1.0}).value == 0.0);
  const auto out = pe_upper_bound({1.0 / 16.0, 1.0, 4, 1.0});
  CHECK(out.value == doctest::Approx(1.0));
  CHECK_FALSE(out.in_domain);
  const auto in = pe_upper_bound({0.0625, 2.0, 4, 1.0});
  CHECK(in.value == doctest::Approx(0.25));
  CHECK(in.in_domain);
  CHECK_THROWS_AS(pe_upper_bound({-1.0, 1.0, 4, 1.0}), ContractViolation);
  CHECK_THROWS_AS(pe_upper_bound({0.1, 0.0, 4, 1.0}), ContractViolation);
  CHECK_THROWS_AS(pe_upper_bound({0.1, 1.0, 1, 1.0}), ContractViolation);
}

TEST_CASE("relevance lower bound") {
  const double H = std::log(4.0);
  const auto zero = fano_relevance_lower_bound({0.0, 1.0, 4, H});
  CHECK(zero.bound == doctest::Approx(H));
  CHECK(zero.valid);
  // p = 0.25 with c = 1 / 16: L = 1 / 64.
  const auto quarter = fano_relevance_lower_bound({1.0 / 64.0, 1.0, 4, H});
  CHECK(quarter.bound == doctest::Approx(0.5493061443340549).epsilon(1e-12));
  // p = 3 / 4 saturates Fano for a uniform target.
  const auto sat = fano_relevance_lower_bound({3.0 / 64.0, 1.0, 4, H});
  CHECK(std::abs(sat.bound) < 1e-12);
  CHECK(sat.valid);
  const auto beyond = fano_relevance_lower_bound({4.0 / 64.0, 1.0, 4, H});
  CHECK_FALSE(beyond.valid);
}

TEST_CASE("bound is nonincreasing in the loss on the valid domain") {
  for (long K : {2L, 3L, 8L}) {
    const double c = 0.7 * 0.7 / (4.0 * K);
    double prev = INFINITY;
    for (int i = 0; i <= 200; ++i) {
      const double L = c * (K - 1.0) / K * i / 200.0;
      const double b = fano_relevance_lower_bound({L, 0.7, K, std::log(static_cast<double>(K))}).bound;
      CHECK(b <= prev + 1e-12);
      prev = b;
    }
  }
}

TEST_CASE("empirical check") {
  const std::vector<std::vector<double>> qs{{1.0, 0.2, 0.5}, {0.0, 0.9, 0.3}};
  const std::vector<double> dist{0.4, 0.6};
  SUBCASE("exact table") {
    const auto r = empirical_relevance_check(qs, qs, dist);
    CHECK(r.measured_pe == 0.0);
    CHECK(r.mse == 0.0);
    CHECK(r.contained);
    CHECK(r.delta_min == doctest::Approx(0.5));
  }
  SUBCASE("noise below half the gap never flips the argmax") {
    auto q = qs;
    const double amp = 0.49 * 0.5;
    q[0] = {1.0 - amp, 0.2 + amp, 0.5 + amp};
    q[1] = {0.0 + amp, 0.9 - amp, 0.3 + amp};
    const auto r = empirical_relevance_check(q, qs, dist);
    CHECK(r.measured_pe == 0.0);
    CHECK(r.contained);
  }
  SUBCASE("flipped state counted with its probability") {
    auto q = qs;
    q[1] = {1.0, 0.9, 0.3};
    const auto r = empirical_relevance_check(q, qs, dist);
    CHECK(r.measured_pe == doctest::Approx(0.6));
    CHECK(r.contained);
  }
  SUBCASE("ties are rejected") {
    const std::vector<std::vector<double>> tie{{1.0, 1.0}};
    CHECK_THROWS_AS(empirical_relevance_check(tie, tie, {1.0}), ContractViolation);
  }
  SUBCASE("distribution must be normalized") {
    CHECK_THROWS_AS(empirical_relevance_check(qs, qs, {0.5, 0.6}), ContractViolation);
  }
}

TEST_CASE("containment on random small tables") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t S = 1 + t % 3, K = 2 + t % 4;
    std::vector<std::vector<double>> qs(S, std::vector<double>(K)), q = qs;
    std::vector<double> dist(S, 1.0 / static_cast<double>(S));
    for (std::size_t s = 0; s < S; ++s) {
      for (auto& x : qs[s]) x = u(rng);
      for (std::size_t a = 0; a < K; ++a) q[s][a] = qs[s][a] + (u(rng) - 0.5) * 0.6;
    }
    const auto r = empirical_relevance_check(q, qs, dist);
    CHECK(r.measured_pe <= r.pe_bound + 1e-12);
  }
}

}  // TEST_SUITE
