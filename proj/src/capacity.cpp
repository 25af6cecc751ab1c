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

#include "hibcg/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "hibcg/errors.hpp"

namespace hibcg {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

UtilityCurve UtilityCurve::reciprocal(double a) {
  require(a > 0.0, "reciprocal utility: a must be positive");
  return UtilityCurve(Reciprocal{a});
}

UtilityCurve UtilityCurve::exponential(double a, double b) {
  require(a > 0.0 && b > 0.0, "exponential utility: a and b must be positive");
  return UtilityCurve(Exponential{a, b});
}

UtilityCurve UtilityCurve::tabulated(std::vector<double> rates, std::vector<double> utilities) {
  require(rates.size() >= 2 && rates.size() == utilities.size(),
          "tabulated utility: need >= 2 matching knots");
  require(rates.front() == 0.0, "tabulated utility: first knot must be at rate 0");
  for (std::size_t k = 0; k < rates.size(); ++k) {
    require(utilities[k] >= 0.0, "tabulated utility: utilities must be nonnegative");
    if (k > 0) {
      require(rates[k] > rates[k - 1], "tabulated utility: rates must increase");
      require(utilities[k] <= utilities[k - 1], "tabulated utility: utilities must not increase");
    }
  }
  return UtilityCurve(Tabulated{std::move(rates), std::move(utilities)});
}

double UtilityCurve::utility(double r) const {
  return std::visit(Overloaded{
                        [r](const Reciprocal& f) { return f.a / (1.0 + r); },
                        [r](const Exponential& f) { return f.a * std::exp(-f.b * r); },
                        [r](const Tabulated& f) {
                          if (r >= f.rates.back()) return f.utilities.back();
                          auto it = std::upper_bound(f.rates.begin(), f.rates.end(), r);
                          const auto k = static_cast<std::size_t>(it - f.rates.begin());
                          const double t = (r - f.rates[k - 1]) / (f.rates[k] - f.rates[k - 1]);
                          return f.utilities[k - 1] + t * (f.utilities[k] - f.utilities[k - 1]);
                        },
                    },
                    form_);
}

double UtilityCurve::rate_at(double nu) const {
  if (utility(0.0) <= nu) return 0.0;
  return std::visit(Overloaded{
                        [nu](const Reciprocal& f) {
                          return nu <= 0.0 ? kUnbounded : f.a / nu - 1.0;
                        },
                        [nu](const Exponential& f) {
                          return nu <= 0.0 ? kUnbounded : std::log(f.a / nu) / f.b;
                        },
                        [nu](const Tabulated& f) {
                          if (f.utilities.back() > nu) return kUnbounded;
                          for (std::size_t k = 1; k < f.rates.size(); ++k) {
                            if (f.utilities[k] <= nu) {
                              const double u0 = f.utilities[k - 1], u1 = f.utilities[k];
                              const double t = (u0 - nu) / (u0 - u1);
                              return f.rates[k - 1] + t * (f.rates[k] - f.rates[k - 1]);
                            }
                          }
                          return f.rates.back();
                        },
                    },
                    form_);
}

double UtilityCurve::cumulative(double r) const {
  return std::visit(Overloaded{
                        [r](const Reciprocal& f) { return f.a * std::log1p(r); },
                        [r](const Exponential& f) { return f.a / f.b * (1.0 - std::exp(-f.b * r)); },
                        [this, r](const Tabulated& f) {
                          double acc = 0.0;
                          for (std::size_t k = 1; k < f.rates.size() && f.rates[k - 1] < r; ++k) {
                            const double hi = std::min(r, f.rates[k]);
                            acc += 0.5 * (f.utilities[k - 1] + utility(hi)) * (hi - f.rates[k - 1]);
                          }
                          if (r > f.rates.back()) acc += f.utilities.back() * (r - f.rates.back());
                          return acc;
                        },
                    },
                    form_);
}

std::string UtilityCurve::family() const {
  return std::visit(Overloaded{
                        [](const Reciprocal&) { return std::string("reciprocal"); },
                        [](const Exponential&) { return std::string("exponential"); },
                        [](const Tabulated&) { return std::string("tabulated"); },
                    },
                    form_);
}

std::vector<double> UtilityCurve::parameters() const {
  return std::visit(Overloaded{
                        [](const Reciprocal& f) { return std::vector<double>{f.a}; },
                        [](const Exponential& f) { return std::vector<double>{f.a, f.b}; },
                        [](const Tabulated& f) {
                          std::vector<double> p;
                          for (std::size_t k = 0; k < f.rates.size(); ++k) {
                            p.push_back(f.rates[k]);
                            p.push_back(f.utilities[k]);
                          }
                          return p;
                        },
                    },
                    form_);
}

double Channel::demand(double nu) const { return std::min(max_rate, curve.rate_at(nu)); }

namespace {

double total_demand(const std::vector<Channel>& channels, double nu) {
  double d = 0.0;
  for (const auto& c : channels) d += c.demand(nu);
  return d;
}

}  // namespace

AllocationResult water_fill(const std::vector<Channel>& channels, double budget,
                            const WaterFillOptions& opts) {
  require(!channels.empty(), "water_fill: no channels");
  require(budget > 0.0 && std::isfinite(budget), "water_fill: budget must be positive");
  require(opts.tol > 0.0, "water_fill: tolerance must be positive");

  AllocationResult res;
  res.budget = budget;
  res.rates.resize(channels.size());

  // Slack budget: every channel saturates and information is free.
  if (total_demand(channels, 0.0) <= budget) {
    for (std::size_t c = 0; c < channels.size(); ++c) res.rates[c] = channels[c].demand(0.0);
    res.water_level = 0.0;
  } else {
    double lo = 0.0, hi = 0.0;
    for (const auto& c : channels) hi = std::max(hi, c.curve.utility(0.0));
    int it = 0;
    while (hi - lo > opts.tol) {
      if (++it > opts.max_iterations) {
        std::ostringstream msg;
        msg << "water_fill: no convergence after " << opts.max_iterations
            << " iterations (bracket [" << lo << ", " << hi << "], demand at lo "
            << total_demand(channels, lo) << ", budget " << budget << ")";
        throw ConvergenceError(msg.str());
      }
      const double mid = 0.5 * (lo + hi);
      if (total_demand(channels, mid) > budget)
        lo = mid;
      else
        hi = mid;
    }
    res.iterations = it;
    res.water_level = hi;

    // Demand is only right-continuous where a curve is flat; spread what is
    // left of the budget over the slack between the two bracket ends.
    double used = 0.0;
    std::vector<double> room(channels.size());
    double room_total = 0.0;
    int unbounded_room = 0;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      res.rates[c] = channels[c].demand(hi);
      used += res.rates[c];
      room[c] = channels[c].demand(lo) - res.rates[c];
      if (std::isinf(room[c]))
        ++unbounded_room;
      else
        room_total += room[c];
    }
    const double left = budget - used;
    if (left > 0.0) {
      for (std::size_t c = 0; c < channels.size(); ++c) {
        if (unbounded_room > 0) {
          if (std::isinf(room[c])) res.rates[c] += left / unbounded_room;
        } else if (room_total > 0.0) {
          res.rates[c] += left * room[c] / room_total;
        }
      }
    }
  }
  res.budget_used = 0.0;
  for (double r : res.rates) res.budget_used += r;
  return res;
}

KktReport verify_kkt(const std::vector<Channel>& channels, const AllocationResult& result,
                     double tol) {
  KktReport rep;
  auto fail = [&rep](std::string msg) {
    rep.ok = false;
    rep.violations.push_back(std::move(msg));
  };
  if (result.rates.size() != channels.size()) {
    fail("rate vector length differs from channel count");
    return rep;
  }
  const double nu = result.water_level;
  if (nu < 0.0) fail("negative water level");
  double used = 0.0;
  for (double r : result.rates) used += r;
  if (used > result.budget + 1e-9) fail("budget exceeded: used " + std::to_string(used));

  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& ch = channels[c];
    const double r = result.rates[c];
    std::ostringstream msg;
    msg << std::setprecision(10);
    if (r < -1e-9 || r > ch.max_rate + 1e-9) {
      msg << ch.id << ": rate " << r << " outside [0, " << ch.max_rate << "]";
      fail(msg.str());
    } else if (r > 1e-9) {
      const double u = ch.curve.utility(r);
      if (r < ch.max_rate - 1e-9) {
        if (std::abs(u - nu) > tol) {
          msg << ch.id << ": equalization violated, U(" << r << ") = " << u << " vs nu = " << nu;
          fail(msg.str());
        }
      } else if (u < nu - tol) {
        msg << ch.id << ": capped channel has U(" << r << ") = " << u << " below nu = " << nu;
        fail(msg.str());
      }
    } else {
      const double u0 = ch.curve.utility(0.0);
      if (u0 > nu + tol) {
        msg << ch.id << ": shut-off channel has U(0) = " << u0 << " above nu = " << nu;
        fail(msg.str());
      }
    }
  }
  if (nu > tol && std::abs(used - result.budget) > 1e-6) {
    std::ostringstream msg;
    msg << "complementary slackness violated: nu = " << nu << " but budget used " << used
        << " of " << result.budget;
    fail(msg.str());
  }
  return rep;
}

double total_utility(const std::vector<Channel>& channels, const std::vector<double>& rates) {
  require(rates.size() == channels.size(), "total_utility: size mismatch");
  double acc = 0.0;
  for (std::size_t c = 0; c < channels.size(); ++c) acc += channels[c].curve.cumulative(rates[c]);
  return acc;
}

std::vector<Channel> parse_channels(std::istream& in) {
  std::vector<Channel> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string id, kind, family;
    if (!(ls >> id)) continue;
    auto bad = [lineno](const std::string& why) {
      return ConfigError("channel file line " + std::to_string(lineno) + ": " + why);
    };
    if (!(ls >> kind >> family)) throw bad("expected `<id> <kind> <family> <params...>`");
    ChannelKind ck;
    if (kind == "aib")
      ck = ChannelKind::kAib;
    else if (kind == "xib")
      ck = ChannelKind::kXib;
    else
      throw bad("unknown channel kind '" + kind + "'");

    std::vector<double> params;
    double max_rate = kUnbounded;
    std::string tok;
    while (ls >> tok) {
      if (tok.rfind("max=", 0) == 0) {
        max_rate = std::stod(tok.substr(4));
        if (!(max_rate > 0.0)) throw bad("max rate must be positive");
        continue;
      }
      try {
        params.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw bad("cannot parse number '" + tok + "'");
      }
    }
    try {
      if (family == "reciprocal") {
        if (params.size() != 1) throw bad("reciprocal takes 1 parameter");
        out.push_back({id, ck, UtilityCurve::reciprocal(params[0]), max_rate});
      } else if (family == "exponential") {
        if (params.size() != 2) throw bad("exponential takes 2 parameters");
        out.push_back({id, ck, UtilityCurve::exponential(params[0], params[1]), max_rate});
      } else if (family == "tabulated") {
        if (params.size() < 4 || params.size() % 2 != 0)
          throw bad("tabulated takes rate/utility pairs");
        std::vector<double> r, u;
        for (std::size_t k = 0; k < params.size(); k += 2) {
          r.push_back(params[k]);
          u.push_back(params[k + 1]);
        }
        out.push_back({id, ck, UtilityCurve::tabulated(std::move(r), std::move(u)), max_rate});
      } else {
        throw bad("unknown utility family '" + family + "'");
      }
    } catch (const ContractViolation& e) {
      throw bad(e.what());
    }
  }
  if (out.empty()) throw ConfigError("channel file has no channels");
  return out;
}

std::vector<Channel> load_channels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open channel file " + path);
  return parse_channels(in);
}

void write_allocation_csv(std::ostream& out, const std::vector<Channel>& channels,
                          const AllocationResult& result, const KktReport& kkt) {
  out << std::setprecision(9);
  out << "channel,kind,family,rate,marginal_utility,status\n";
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& ch = channels[c];
    const double r = result.rates[c];
    out << ch.id << ',' << (ch.kind == ChannelKind::kAib ? "aib" : "xib") << ','
        << ch.curve.family() << ',' << r << ',' << ch.curve.utility(r) << ','
        << (r > 1e-9 ? "active" : "off") << '\n';
  }
  out << "\nwater_level,budget,budget_used,kkt\n";
  out << result.water_level << ',' << result.budget << ',' << result.budget_used << ','
      << (kkt.ok ? "ok" : "violated") << '\n';
}

DualState dual_ascent_step(const DualState& state, const std::map<int, double>& measured_rates) {
  require(state.step > 0.0, "dual_ascent_step: step must be positive");
  require(state.multipliers.size() == state.targets.size() &&
              state.multipliers.size() == measured_rates.size(),
          "dual_ascent_step: key sets differ");
  DualState next = state;
  for (auto& [block, lambda] : next.multipliers) {
    auto t = state.targets.find(block);
    auto m = measured_rates.find(block);
    require(t != state.targets.end() && m != measured_rates.end(),
            "dual_ascent_step: key sets differ at block " + std::to_string(block));
    lambda = std::max(0.0, lambda + state.step * (m->second - t->second));
  }
  return next;
}

}  // namespace hibcg
