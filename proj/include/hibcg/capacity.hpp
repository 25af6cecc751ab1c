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

// Water-filling allocation of an information budget across channels with
// diminishing marginal utility, KKT verification, and projected dual ascent
// on per-block multipliers.

#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace hibcg {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// Marginal utility U(R) >= 0, nonincreasing in the rate R >= 0.
class UtilityCurve {
 public:
  struct Reciprocal {
    double a;  // a / (1 + R)
  };
  struct Exponential {
    double a, b;  // a * exp(-b R)
  };
  // Piecewise linear through (rates[k], utilities[k]); rates[0] == 0, held
  // constant past the last knot.
  struct Tabulated {
    std::vector<double> rates;
    std::vector<double> utilities;
  };

  static UtilityCurve reciprocal(double a);
  static UtilityCurve exponential(double a, double b);
  static UtilityCurve tabulated(std::vector<double> rates, std::vector<double> utilities);

  double utility(double rate) const;
  // inf{R >= 0 : U(R) <= nu}; 0 when U(0) <= nu, +inf when U never drops to nu.
  double rate_at(double nu) const;
  // Integral of U over [0, rate].
  double cumulative(double rate) const;
  std::string family() const;
  std::vector<double> parameters() const;

 private:
  explicit UtilityCurve(std::variant<Reciprocal, Exponential, Tabulated> f) : form_(std::move(f)) {}
  std::variant<Reciprocal, Exponential, Tabulated> form_;
};

enum class ChannelKind { kAib, kXib };

struct Channel {
  std::string id;
  ChannelKind kind = ChannelKind::kAib;
  UtilityCurve curve;
  double max_rate = kUnbounded;

  double demand(double nu) const;
};

struct AllocationResult {
  std::vector<double> rates;  // aligned with the channel list
  double water_level = 0.0;
  double budget = 0.0;
  double budget_used = 0.0;
  int iterations = 0;
};

struct WaterFillOptions {
  double tol = 1e-8;  // bisection tolerance on the water level
  int max_iterations = 200;
};

AllocationResult water_fill(const std::vector<Channel>& channels, double budget,
                            const WaterFillOptions& opts = {});

struct KktReport {
  bool ok = true;
  std::vector<std::string> violations;
};

KktReport verify_kkt(const std::vector<Channel>& channels, const AllocationResult& result,
                     double tol);

// Sum of integrated utilities at the given rates.
double total_utility(const std::vector<Channel>& channels, const std::vector<double>& rates);

// Channel file: one channel per line,
//   <id> <aib|xib> reciprocal <a> [max=<r>]
//   <id> <aib|xib> exponential <a> <b> [max=<r>]
//   <id> <aib|xib> tabulated <r0> <u0> <r1> <u1> ... [max=<r>]
std::vector<Channel> parse_channels(std::istream& in);
std::vector<Channel> load_channels(const std::string& path);

void write_allocation_csv(std::ostream& out, const std::vector<Channel>& channels,
                          const AllocationResult& result, const KktReport& kkt);

struct DualState {
  std::map<int, double> multipliers;
  std::map<int, double> targets;
  double step = 0.1;
};

// lambda <- max(0, lambda + step * (measured - target)) per block.
DualState dual_ascent_step(const DualState& state, const std::map<int, double>& measured_rates);

}  // namespace hibcg
