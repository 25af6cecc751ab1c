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
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hibcg/errors.hpp"
#include "hibcg/groups.hpp"

using namespace hibcg;

namespace {

std::vector<int> sizes_of(const EdgeBlockIndex& idx) {
  std::vector<int> s;
  for (const auto& b : idx.blocks()) s.push_back(b.size());
  return s;
}

}  // namespace

TEST_SUITE("group-structure") {

TEST_CASE("edge block sizes") {
  CHECK(sizes_of(build_edge_blocks(GroupPartition::from_sizes({2, 3}))) == std::vector<int>{4, 9, 6, 6});
  CHECK(sizes_of(build_edge_blocks(GroupPartition::from_sizes({4, 6}))) ==
        std::vector<int>{16, 36, 24, 24});
  CHECK(sizes_of(build_edge_blocks(GroupPartition::from_sizes({7}))) == std::vector<int>{49});
}

TEST_CASE("block order and kinds") {
  const EdgeBlockIndex idx(GroupPartition::from_sizes({1, 2, 1}));
  REQUIRE(idx.num_blocks() == 9);
  const std::vector<std::pair<int, int>> expect{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2},
                                                {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  for (int b = 0; b < 9; ++b) {
    const auto& blk = idx.block(b);
    CHECK(blk.id == b);
    CHECK(std::make_pair(blk.src_group, blk.dst_group) == expect[static_cast<std::size_t>(b)]);
    CHECK(blk.intra() == (b < 3));
  }
}

TEST_CASE("every ordered pair lands in exactly one block") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 9)(rng);
    const int m = std::uniform_int_distribution<int>(1, n)(rng);
    std::vector<int> a(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = i < m ? i : std::uniform_int_distribution<int>(0, m - 1)(rng);
    std::shuffle(a.begin(), a.end(), rng);
    const GroupPartition p(a);
    const EdgeBlockIndex idx(p);
    std::set<std::pair<int, int>> seen;
    int total = 0;
    for (const auto& blk : idx.blocks()) {
      for (auto e : blk.edges) {
        CHECK(seen.insert(e).second);
        CHECK(p.group_of(e.first) == blk.src_group);
        CHECK(p.group_of(e.second) == blk.dst_group);
        CHECK(idx.block_of(e.first, e.second) == blk.id);
      }
      total += blk.size();
    }
    CHECK(total == n * n);
    CHECK(idx.num_blocks() == m * m);
    CHECK(idx.intra_edge_count() + idx.cross_edge_count() == n * n);
  }
}

TEST_CASE("partition parsing") {
  std::istringstream ok("# agents\n0 1\n1 0\n2 1  # trailing\n\n");
  const auto p = GroupPartition::parse(ok);
  CHECK(p.assignment() == std::vector<int>{1, 0, 1});
  CHECK(p.members(1) == std::vector<int>{0, 2});
  std::istringstream dup("0 0\n0 1\n");
  CHECK_THROWS_AS(GroupPartition::parse(dup), ConfigError);
  std::istringstream gap("0 0\n2 0\n");
  CHECK_THROWS_AS(GroupPartition::parse(gap), ConfigError);
  std::istringstream empty("# nothing\n");
  CHECK_THROWS_AS(GroupPartition::parse(empty), ConfigError);
  CHECK_THROWS_AS(GroupPartition({0, 2}), ContractViolation);
  CHECK_THROWS_AS(GroupPartition::from_sizes({2, 0}), ContractViolation);
}

TEST_CASE("group mask") {
  const auto one = group_mask(GroupPartition::from_sizes({3}));
  CHECK(one.count_ones() == 9);
  const auto eye = group_mask(GroupPartition::from_sizes({1, 1}));
  CHECK(eye.mask == std::vector<std::uint8_t>{1, 0, 0, 1});
  const auto p = GroupPartition::from_sizes({4, 6});
  const auto mask = group_mask(p);
  const EdgeBlockIndex idx(p);
  CHECK(mask.count_ones() == idx.intra_edge_count());
  CHECK(mask.count_ones() == 16 + 36);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(mask.at(i, j) == (idx.block(idx.block_of(i, j)).intra() ? 1 : 0));
}

TEST_CASE("edge covariance") {
  SUBCASE("singleton groups correlate only self edges") {
    const auto cov = gacg_edge_covariance(group_mask(GroupPartition::from_sizes({1, 1, 1})), 0.5, 0.2);
    for (std::size_t a = 0; a < 9; ++a)
      for (std::size_t b = 0; b < 9; ++b) {
        const bool self_a = a % 4 == 0, self_b = b % 4 == 0;
        if (a != b && !(self_a && self_b)) CHECK(cov.entry(a, b) == 0.0);
        if (a != b && self_a && self_b) CHECK(cov.entry(a, b) == 0.5);
      }
  }
  SUBCASE("sample covariance matches within three standard errors") {
    const auto cov = gacg_edge_covariance(group_mask(GroupPartition::from_sizes({2, 1})), 0.4, 0.3);
    const std::size_t D = cov.dim();
    const int N = 100'000;
    std::mt19937_64 rng(5);
    std::vector<double> mean(D);
    for (std::size_t d = 0; d < D; ++d) mean[d] = 0.1 * static_cast<double>(d);
    std::vector<double> s1(D, 0.0), s2(D * D, 0.0);
    for (int t = 0; t < N; ++t) {
      const auto z = cov.sample(mean, rng);
      for (std::size_t a = 0; a < D; ++a) {
        const double xa = z[a] - mean[a];
        s1[a] += xa;
        for (std::size_t b = 0; b < D; ++b) s2[a * D + b] += xa * (z[b] - mean[b]);
      }
    }
    for (std::size_t a = 0; a < D; ++a) CHECK(std::abs(s1[a] / N) < 3.0 * std::sqrt(cov.entry(a, a) / N));
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) {
        const double emp = s2[a * D + b] / N;
        const double se = std::sqrt((cov.entry(a, a) * cov.entry(b, b) + cov.entry(a, b) * cov.entry(a, b)) / N);
        CHECK(std::abs(emp - cov.entry(a, b)) < 3.0 * se);
      }
  }
  SUBCASE("alpha to zero gives i.i.d. edges") {
    const auto cov = gacg_edge_covariance(group_mask(GroupPartition::from_sizes({3})), 1e-14, 2.0);
    for (std::size_t a = 0; a < 9; ++a)
      for (std::size_t b = 0; b < 9; ++b)
        CHECK(cov.entry(a, b) == doctest::Approx(a == b ? 2.0 : 0.0).epsilon(1e-12).scale(1.0));
  }
  SUBCASE("invalid scales") {
    const auto m = group_mask(GroupPartition::from_sizes({2}));
    CHECK_THROWS_AS(gacg_edge_covariance(m, 0.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(gacg_edge_covariance(m, 1.0, -1.0), ContractViolation);
  }
}

TEST_CASE("pair scores") {
  SUBCASE("identical embeddings") {
    const auto mu = pair_scores({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    for (double v : mu) CHECK(v == doctest::Approx(5.0 / std::sqrt(2.0)));
  }
  SUBCASE("orthogonal embeddings") {
    const auto mu = pair_scores({{1.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 3.0}});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) CHECK(mu[static_cast<std::size_t>(i * 3 + j)] == 0.0);
  }
  SUBCASE("random embeddings against a dot-product table") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> e(5, std::vector<double>(4));
    for (auto& row : e)
      for (auto& x : row) x = g(rng);
    const auto mu = pair_scores(e);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        long double dot = 0.0L;
        for (std::size_t k = 0; k < 4; ++k) dot += static_cast<long double>(e[i][k]) * e[j][k];
        CHECK(mu[i * 5 + j] == doctest::Approx(static_cast<double>(dot / 2.0L)).epsilon(1e-13));
      }
  }
  CHECK_THROWS_AS(pair_scores({{1.0}, {1.0, 2.0}}), ContractViolation);
}

}  // TEST_SUITE
