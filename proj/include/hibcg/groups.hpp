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

// Agent partitions and the m^2 edge blocks they induce on the n x n grid of
// ordered agent pairs.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hibcg/kl.hpp"

namespace hibcg {

class GroupPartition {
 public:
  // assignment[i] is the group of agent i; groups must be 0..m-1, all nonempty.
  explicit GroupPartition(std::vector<int> assignment);

  // Contiguous groups: sizes {4, 6} puts agents 0-3 in group 0, 4-9 in group 1.
  static GroupPartition from_sizes(const std::vector<int>& sizes);

  // Text format: one `agent_id group_id` pair per line, '#' starts a comment.
  static GroupPartition parse(std::istream& in);
  static GroupPartition load(const std::string& path);

  int num_agents() const { return static_cast<int>(assignment_.size()); }
  int num_groups() const { return num_groups_; }
  int group_of(int agent) const { return assignment_.at(static_cast<std::size_t>(agent)); }
  const std::vector<int>& assignment() const { return assignment_; }
  std::vector<int> members(int group) const;
  std::vector<int> group_sizes() const;

  bool operator==(const GroupPartition&) const = default;

 private:
  std::vector<int> assignment_;
  int num_groups_ = 0;
};

enum class BlockKind { kIntra, kCross };

struct EdgeBlock {
  BlockId id;
  int src_group;
  int dst_group;
  BlockKind kind;
  std::vector<std::pair<int, int>> edges;

  int size() const { return static_cast<int>(edges.size()); }
  bool intra() const { return kind == BlockKind::kIntra; }
};

// Blocks are ordered intra first (group 0, 1, ...), then cross blocks in
// lexicographic (src, dst) order.
class EdgeBlockIndex {
 public:
  EdgeBlockIndex() = default;
  explicit EdgeBlockIndex(const GroupPartition& p);

  int num_agents() const { return n_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const std::vector<EdgeBlock>& blocks() const { return blocks_; }
  const EdgeBlock& block(BlockId b) const { return blocks_.at(static_cast<std::size_t>(b)); }
  BlockId block_of(int i, int j) const {
    return edge_block_[static_cast<std::size_t>(i * n_ + j)];
  }
  // Per-edge block id in row-major (i * n + j) order.
  const std::vector<BlockId>& edge_blocks() const { return edge_block_; }
  int intra_edge_count() const;
  int cross_edge_count() const;

 private:
  int n_ = 0;
  std::vector<EdgeBlock> blocks_;
  std::vector<BlockId> edge_block_;
};

EdgeBlockIndex build_edge_blocks(const GroupPartition& p);

struct GroupMask {
  int n = 0;
  std::vector<std::uint8_t> mask;  // row-major n x n

  int at(int i, int j) const { return mask[static_cast<std::size_t>(i * n + j)]; }
  int count_ones() const;
};

GroupMask group_mask(const GroupPartition& p);

// Sigma = alpha * v v^T + eps * I over the n^2 edge variables, v = vec(M).
// Kept in factored form; never materialised.
class EdgeCovariance {
 public:
  EdgeCovariance(const GroupMask& mask, double alpha, double eps);

  double alpha() const { return alpha_; }
  double eps() const { return eps_; }
  const std::vector<double>& direction() const { return v_; }
  std::size_t dim() const { return v_.size(); }
  double entry(std::size_t a, std::size_t b) const;

  // Exact draw: mu + sqrt(alpha) * v * g0 + sqrt(eps) * g.
  std::vector<double> sample(const std::vector<double>& mean, std::mt19937_64& rng) const;

 private:
  std::vector<double> v_;
  double alpha_;
  double eps_;
};

EdgeCovariance gacg_edge_covariance(const GroupMask& mask, double alpha, double eps);

// mu_ij = <e_i, e_j> / sqrt(d), row-major n x n.
std::vector<double> pair_scores(const std::vector<std::vector<double>>& embeds);

}  // namespace hibcg
