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

#include "hibcg/groups.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "hibcg/errors.hpp"

namespace hibcg {

GroupPartition::GroupPartition(std::vector<int> assignment) : assignment_(std::move(assignment)) {
  require(!assignment_.empty(), "GroupPartition: no agents");
  const int max_group = *std::max_element(assignment_.begin(), assignment_.end());
  require(*std::min_element(assignment_.begin(), assignment_.end()) >= 0,
          "GroupPartition: negative group id");
  num_groups_ = max_group + 1;
  std::vector<int> sizes(static_cast<std::size_t>(num_groups_), 0);
  for (int g : assignment_) ++sizes[static_cast<std::size_t>(g)];
  for (int g = 0; g < num_groups_; ++g)
    require(sizes[static_cast<std::size_t>(g)] > 0,
            "GroupPartition: group " + std::to_string(g) + " is empty");
}

GroupPartition GroupPartition::from_sizes(const std::vector<int>& sizes) {
  std::vector<int> a;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    require(sizes[g] > 0, "GroupPartition: empty group in size list");
    a.insert(a.end(), static_cast<std::size_t>(sizes[g]), static_cast<int>(g));
  }
  return GroupPartition(std::move(a));
}

GroupPartition GroupPartition::parse(std::istream& in) {
  std::map<int, int> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int agent, group;
    if (!(ls >> agent)) continue;
    if (!(ls >> group))
      throw ConfigError("partition line " + std::to_string(lineno) + ": expected `agent group`");
    if (!entries.emplace(agent, group).second)
      throw ConfigError("partition: agent " + std::to_string(agent) + " listed twice");
  }
  if (entries.empty()) throw ConfigError("partition: no entries");
  std::vector<int> a;
  int expect = 0;
  for (const auto& [agent, group] : entries) {
    if (agent != expect)
      throw ConfigError("partition: agent ids must be 0..n-1 (missing " +
                        std::to_string(expect) + ")");
    a.push_back(group);
    ++expect;
  }
  return GroupPartition(std::move(a));
}

GroupPartition GroupPartition::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open partition file " + path);
  return parse(in);
}

std::vector<int> GroupPartition::members(int group) const {
  std::vector<int> out;
  for (int i = 0; i < num_agents(); ++i)
    if (assignment_[static_cast<std::size_t>(i)] == group) out.push_back(i);
  return out;
}

std::vector<int> GroupPartition::group_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(num_groups_), 0);
  for (int g : assignment_) ++sizes[static_cast<std::size_t>(g)];
  return sizes;
}

EdgeBlockIndex::EdgeBlockIndex(const GroupPartition& p) : n_(p.num_agents()) {
  const int m = p.num_groups();
  std::vector<std::pair<int, int>> order;
  for (int a = 0; a < m; ++a) order.emplace_back(a, a);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      if (a != b) order.emplace_back(a, b);

  std::map<std::pair<int, int>, BlockId> lookup;
  for (const auto& [a, b] : order) {
    const auto id = static_cast<BlockId>(blocks_.size());
    lookup[{a, b}] = id;
    blocks_.push_back({id, a, b, a == b ? BlockKind::kIntra : BlockKind::kCross, {}});
  }
  edge_block_.resize(static_cast<std::size_t>(n_ * n_));
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      const BlockId id = lookup.at({p.group_of(i), p.group_of(j)});
      blocks_[static_cast<std::size_t>(id)].edges.emplace_back(i, j);
      edge_block_[static_cast<std::size_t>(i * n_ + j)] = id;
    }
  }
}

int EdgeBlockIndex::intra_edge_count() const {
  int c = 0;
  for (const auto& b : blocks_)
    if (b.intra()) c += b.size();
  return c;
}

int EdgeBlockIndex::cross_edge_count() const { return n_ * n_ - intra_edge_count(); }

EdgeBlockIndex build_edge_blocks(const GroupPartition& p) { return EdgeBlockIndex(p); }

int GroupMask::count_ones() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

GroupMask group_mask(const GroupPartition& p) {
  GroupMask m;
  m.n = p.num_agents();
  m.mask.resize(static_cast<std::size_t>(m.n * m.n));
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j)
      m.mask[static_cast<std::size_t>(i * m.n + j)] = p.group_of(i) == p.group_of(j) ? 1 : 0;
  return m;
}

EdgeCovariance::EdgeCovariance(const GroupMask& mask, double alpha, double eps)
    : v_(mask.mask.begin(), mask.mask.end()), alpha_(alpha), eps_(eps) {
  require(alpha > 0.0, "gacg_edge_covariance: alpha must be positive");
  require(eps > 0.0, "gacg_edge_covariance: eps must be positive");
}

double EdgeCovariance::entry(std::size_t a, std::size_t b) const {
  return alpha_ * v_[a] * v_[b] + (a == b ? eps_ : 0.0);
}

std::vector<double> EdgeCovariance::sample(const std::vector<double>& mean,
                                           std::mt19937_64& rng) const {
  require(mean.size() == v_.size(), "EdgeCovariance::sample: mean has wrong length");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shared = std::sqrt(alpha_) * normal(rng);
  const double diag = std::sqrt(eps_);
  std::vector<double> z(mean.size());
  for (std::size_t e = 0; e < z.size(); ++e) z[e] = mean[e] + shared * v_[e] + diag * normal(rng);
  return z;
}

EdgeCovariance gacg_edge_covariance(const GroupMask& mask, double alpha, double eps) {
  return EdgeCovariance(mask, alpha, eps);
}

std::vector<double> pair_scores(const std::vector<std::vector<double>>& embeds) {
  require(!embeds.empty(), "pair_scores: no embeddings");
  const std::size_t d = embeds.front().size();
  require(d > 0, "pair_scores: empty embedding");
  for (const auto& e : embeds) require(e.size() == d, "pair_scores: embedding dimension mismatch");
  const std::size_t n = embeds.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> mu(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += embeds[i][k] * embeds[j][k];
      mu[i * n + j] = mu[j * n + i] = dot * scale;
    }
  }
  return mu;
}

}  // namespace hibcg
