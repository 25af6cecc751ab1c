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

#include "hibcg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hibcg/errors.hpp"

namespace hibcg {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) fail(key, "a 32-bit integer");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of integers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number_integer()) fail(key, "an array of integers");
        out.push_back(x.get<int>());
      }
    }
  }
  void get(const char* key, std::vector<std::uint64_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of nonnegative integers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number_unsigned() && !(x.is_number_integer() && x.get<long long>() >= 0))
          fail(key, "an array of nonnegative integers");
        out.push_back(x.get<std::uint64_t>());
      }
    }
  }
  const json* child(const char* key) { return find(key); }

  void one_of(const char* key, const std::string& value, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (value == a) return;
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
    throw ConfigError(at(key) + ": must be one of " + list + ", got '" + value + "'");
  }
  void positive(const char* key, double v) {
    if (!(v > 0.0)) throw ConfigError(at(key) + ": must be positive");
  }
  void in_range(const char* key, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi))
      throw ConfigError(at(key) + ": must lie in [" + num(lo) + ", " + num(hi) + "]");
  }
  std::string at(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown key");
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError(at(key) + ": expected " + what);
  }
  static std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

EnvSection read_env(Section& s) {
  EnvSection e;
  s.get("n", e.n);
  s.get("groups", e.groups);
  s.get("episode_length", e.episode_length);
  s.get("p_obs", e.p_obs);
  s.get("gamma", e.gamma);
  s.finish();
  if (e.n < 1) throw ConfigError(s.at("n") + ": must be at least 1");
  int total = 0;
  for (int g : e.groups) {
    if (g < 1) throw ConfigError(s.at("groups") + ": group sizes must be positive");
    total += g;
  }
  if (total != e.n) throw ConfigError(s.at("groups") + ": sizes must sum to n");
  if (e.episode_length < 1) throw ConfigError(s.at("episode_length") + ": must be at least 1");
  s.in_range("p_obs", e.p_obs, 0.0, 1.0);
  s.in_range("gamma", e.gamma, 0.0, 1.0);
  return e;
}

NetworkSection read_network(Section& s) {
  NetworkSection n;
  s.get("layers", n.layers);
  s.get("message_dim", n.message_dim);
  s.get("code_dim", n.code_dim);
  s.get("q_hidden", n.q_hidden);
  s.get("normalization", n.normalization);
  s.get("gating", n.gating);
  s.get("hard_threshold", n.hard_threshold);
  s.get("noise_scale", n.noise_scale);
  s.get("init_graph", n.init_graph);
  s.get("init_alpha", n.init_alpha);
  s.get("init_eps", n.init_eps);
  s.get("temperature", n.temperature);
  s.finish();
  if (n.layers < 1) throw ConfigError(s.at("layers") + ": must be at least 1");
  if (n.message_dim < 1 || n.code_dim < 1 || n.q_hidden < 1)
    throw ConfigError(s.at("message_dim") + ": widths must be positive");
  s.one_of("normalization", n.normalization, {"symmetric", "row"});
  s.one_of("gating", n.gating, {"sigmoid", "hard"});
  s.one_of("init_graph", n.init_graph, {"gaussian", "relaxed"});
  s.in_range("hard_threshold", n.hard_threshold, 0.0, 1.0);
  s.in_range("noise_scale", n.noise_scale, 0.0, 1.0);
  s.positive("init_alpha", n.init_alpha);
  s.positive("init_eps", n.init_eps);
  s.positive("temperature", n.temperature);
  return n;
}

PriorSection read_prior(Section& s) {
  PriorSection p;
  s.get("sigma_intra", p.sigma_intra);
  s.get("sigma_cross", p.sigma_cross);
  s.get("sigma_x0", p.sigma_x0);
  s.get("units", p.units);
  s.finish();
  s.positive("sigma_intra", p.sigma_intra);
  s.positive("sigma_cross", p.sigma_cross);
  s.positive("sigma_x0", p.sigma_x0);
  s.one_of("units", p.units, {"std", "var"});
  return p;
}

LossSection read_loss(Section& s) {
  LossSection l;
  s.get("lambda_a_dim", l.lambda_a_dim);
  s.get("lambda_x_dim", l.lambda_x_dim);
  s.get("lambda_g", l.lambda_g);
  s.get("warmup_steps", l.warmup_steps);
  s.get("block_size_scaling", l.block_size_scaling);
  s.get("intra_weight", l.intra_weight);
  s.get("cross_weight", l.cross_weight);
  s.get("xib_per_layer", l.xib_per_layer);
  s.finish();
  s.in_range("lambda_a_dim", l.lambda_a_dim, 0.0, 1e300);
  s.in_range("lambda_x_dim", l.lambda_x_dim, 0.0, 1e300);
  s.in_range("lambda_g", l.lambda_g, 0.0, 1e300);
  s.in_range("intra_weight", l.intra_weight, 0.0, 1e300);
  s.in_range("cross_weight", l.cross_weight, 0.0, 1e300);
  if (l.warmup_steps < 0) throw ConfigError(s.at("warmup_steps") + ": must be nonnegative");
  if (l.xib_per_layer)
    throw ConfigError(s.at("xib_per_layer") + ": per-layer XIB is not supported yet");
  return l;
}

TrainingSection read_training(Section& s) {
  TrainingSection t;
  s.get("steps", t.steps);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("momentum", t.momentum);
  s.get("grad_clip", t.grad_clip);
  s.get("buffer_episodes", t.buffer_episodes);
  s.get("target_interval", t.target_interval);
  s.get("learning_starts", t.learning_starts);
  s.get("eps_start", t.eps_start);
  s.get("eps_end", t.eps_end);
  s.get("eps_decay_fraction", t.eps_decay_fraction);
  s.get("eval_interval", t.eval_interval);
  s.get("eval_episodes", t.eval_episodes);
  s.get("tail_fraction", t.tail_fraction);
  s.finish();
  if (t.steps < 1) throw ConfigError(s.at("steps") + ": must be at least 1");
  if (t.batch_size < 1) throw ConfigError(s.at("batch_size") + ": must be at least 1");
  if (t.buffer_episodes < 1) throw ConfigError(s.at("buffer_episodes") + ": must be at least 1");
  if (t.target_interval < 1) throw ConfigError(s.at("target_interval") + ": must be at least 1");
  if (t.learning_starts < 0) throw ConfigError(s.at("learning_starts") + ": must be nonnegative");
  if (t.eval_interval < 1) throw ConfigError(s.at("eval_interval") + ": must be at least 1");
  if (t.eval_episodes < 0) throw ConfigError(s.at("eval_episodes") + ": must be nonnegative");
  s.positive("lr", t.lr);
  s.in_range("momentum", t.momentum, 0.0, 0.999999);
  s.positive("grad_clip", t.grad_clip);
  s.in_range("eps_start", t.eps_start, 0.0, 1.0);
  s.in_range("eps_end", t.eps_end, 0.0, 1.0);
  s.in_range("eps_decay_fraction", t.eps_decay_fraction, 0.0, 1.0);
  s.positive("tail_fraction", t.tail_fraction);
  s.in_range("tail_fraction", t.tail_fraction, 0.0, 1.0);
  return t;
}

template <class T, class Reader>
T read_child(Section& top, const char* key, Reader reader) {
  if (const json* c = top.child(key)) {
    Section s(*c, key);
    return reader(s);
  }
  return T{};
}

}  // namespace

RunConfig config_from_json(const json& j) {
  Section top(j, "config");
  RunConfig c;
  top.get("name", c.name);
  c.env = read_child<EnvSection>(top, "env", read_env);
  c.network = read_child<NetworkSection>(top, "network", read_network);
  c.prior = read_child<PriorSection>(top, "prior", read_prior);
  c.loss = read_child<LossSection>(top, "loss", read_loss);
  c.training = read_child<TrainingSection>(top, "training", read_training);
  top.get("seeds", c.seeds);
  top.get("output_dir", c.output_dir);
  top.get("workers", c.workers);
  top.finish();
  if (c.name.empty() || c.name.find('/') != std::string::npos)
    throw ConfigError("config.name: must be a nonempty name without '/'");
  if (c.seeds.empty()) throw ConfigError("config.seeds: at least one seed required");
  if (c.workers < 1) throw ConfigError("config.workers: must be at least 1");
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["env"] = {{"n", c.env.n},
              {"groups", c.env.groups},
              {"episode_length", c.env.episode_length},
              {"p_obs", c.env.p_obs},
              {"gamma", c.env.gamma}};
  j["network"] = {{"layers", c.network.layers},
                  {"message_dim", c.network.message_dim},
                  {"code_dim", c.network.code_dim},
                  {"q_hidden", c.network.q_hidden},
                  {"normalization", c.network.normalization},
                  {"gating", c.network.gating},
                  {"hard_threshold", c.network.hard_threshold},
                  {"noise_scale", c.network.noise_scale},
                  {"init_graph", c.network.init_graph},
                  {"init_alpha", c.network.init_alpha},
                  {"init_eps", c.network.init_eps},
                  {"temperature", c.network.temperature}};
  j["prior"] = {{"sigma_intra", c.prior.sigma_intra},
                {"sigma_cross", c.prior.sigma_cross},
                {"sigma_x0", c.prior.sigma_x0},
                {"units", c.prior.units}};
  j["loss"] = {{"lambda_a_dim", c.loss.lambda_a_dim},
               {"lambda_x_dim", c.loss.lambda_x_dim},
               {"lambda_g", c.loss.lambda_g},
               {"warmup_steps", c.loss.warmup_steps},
               {"block_size_scaling", c.loss.block_size_scaling},
               {"intra_weight", c.loss.intra_weight},
               {"cross_weight", c.loss.cross_weight},
               {"xib_per_layer", c.loss.xib_per_layer}};
  const auto& t = c.training;
  j["training"] = {{"steps", t.steps},
                   {"batch_size", t.batch_size},
                   {"lr", t.lr},
                   {"momentum", t.momentum},
                   {"grad_clip", t.grad_clip},
                   {"buffer_episodes", t.buffer_episodes},
                   {"target_interval", t.target_interval},
                   {"learning_starts", t.learning_starts},
                   {"eps_start", t.eps_start},
                   {"eps_end", t.eps_end},
                   {"eps_decay_fraction", t.eps_decay_fraction},
                   {"eval_interval", t.eval_interval},
                   {"eval_episodes", t.eval_episodes},
                   {"tail_fraction", t.tail_fraction}};
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  return j;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_schema() {
  auto num = [](double lo) { return json{{"type", "number"}, {"minimum", lo}}; };
  auto pos = [] { return json{{"type", "number"}, {"exclusiveMinimum", 0}}; };
  auto unit = [] { return json{{"type", "number"}, {"minimum", 0}, {"maximum", 1}}; };
  auto integer = [](int lo) { return json{{"type", "integer"}, {"minimum", lo}}; };
  auto choice = [](std::vector<std::string> v) { return json{{"type", "string"}, {"enum", v}}; };
  auto object = [](json props) {
    return json{{"type", "object"}, {"additionalProperties", false}, {"properties", props}};
  };
  json s = object({
      {"name", {{"type", "string"}, {"pattern", "^[^/]+$"}}},
      {"env", object({{"n", integer(1)},
                      {"groups", {{"type", "array"}, {"items", integer(1)}, {"minItems", 1}}},
                      {"episode_length", integer(1)},
                      {"p_obs", unit()},
                      {"gamma", unit()}})},
      {"network", object({{"layers", integer(1)},
                          {"message_dim", integer(1)},
                          {"code_dim", integer(1)},
                          {"q_hidden", integer(1)},
                          {"normalization", choice({"symmetric", "row"})},
                          {"gating", choice({"sigmoid", "hard"})},
                          {"hard_threshold", unit()},
                          {"noise_scale", {{"type", "number"}, {"exclusiveMinimum", 0}, {"maximum", 1}}},
                          {"init_graph", choice({"gaussian", "relaxed"})},
                          {"init_alpha", pos()},
                          {"init_eps", pos()},
                          {"temperature", pos()}})},
      {"prior", object({{"sigma_intra", pos()},
                        {"sigma_cross", pos()},
                        {"sigma_x0", pos()},
                        {"units", choice({"std", "var"})}})},
      {"loss", object({{"lambda_a_dim", num(0)},
                       {"lambda_x_dim", num(0)},
                       {"lambda_g", num(0)},
                       {"warmup_steps", integer(0)},
                       {"block_size_scaling", {{"type", "boolean"}}},
                       {"intra_weight", num(0)},
                       {"cross_weight", num(0)},
                       {"xib_per_layer", {{"const", false}}}})},
      {"training", object({{"steps", integer(1)},
                           {"batch_size", integer(1)},
                           {"lr", pos()},
                           {"momentum", {{"type", "number"}, {"minimum", 0}, {"exclusiveMaximum", 1}}},
                           {"grad_clip", pos()},
                           {"buffer_episodes", integer(1)},
                           {"target_interval", integer(1)},
                           {"learning_starts", integer(0)},
                           {"eps_start", unit()},
                           {"eps_end", unit()},
                           {"eps_decay_fraction", unit()},
                           {"eval_interval", integer(1)},
                           {"eval_episodes", integer(0)},
                           {"tail_fraction", {{"type", "number"}, {"exclusiveMinimum", 0}, {"maximum", 1}}}})},
      {"seeds", {{"type", "array"}, {"items", integer(0)}, {"minItems", 1}}},
      {"output_dir", {{"type", "string"}}},
      {"workers", integer(1)},
  });
  s["$schema"] = "http://json-schema.org/draft-07/schema#";
  s["title"] = "hibcg run configuration";
  return s;
}

GameConfig make_game_config(const RunConfig& cfg) {
  GameConfig g;
  g.partition = GroupPartition::from_sizes(cfg.env.groups);
  g.episode_length = cfg.env.episode_length;
  g.p_obs = cfg.env.p_obs;
  g.gamma = cfg.env.gamma;
  return g;
}

NetworkConfig make_network_config(const RunConfig& cfg, const HiddenBitGame& game) {
  const auto& n = cfg.network;
  NetworkConfig c;
  c.num_agents = game.num_agents();
  c.input_dim = game.input_dim();
  c.state_dim = game.state_dim();
  c.num_actions = game.num_actions();
  c.message_dim = n.message_dim;
  c.code_dim = n.code_dim;
  c.q_hidden = n.q_hidden;
  c.layers = n.layers;
  c.normalization = n.normalization == "row" ? Normalization::kRow : Normalization::kSymmetric;
  c.gating = n.gating == "hard" ? Gating::kHardThreshold : Gating::kSigmoid;
  c.hard_threshold = n.hard_threshold;
  c.noise_scale = n.noise_scale;
  c.init_graph.mode = n.init_graph == "relaxed" ? InitGraphMode::kRelaxed : InitGraphMode::kGaussian;
  c.init_graph.alpha = n.init_alpha;
  c.init_graph.eps = n.init_eps;
  c.init_graph.temperature = n.temperature;
  c.init_graph.normalization = c.normalization;
  return c;
}

BlockPrior make_block_prior(const RunConfig& cfg, const EdgeBlockIndex& blocks) {
  const auto units = cfg.prior.units == "var" ? ScaleUnits::kVar : ScaleUnits::kStd;
  return group_prior(blocks, to_variance(cfg.prior.sigma_intra, units),
                     to_variance(cfg.prior.sigma_cross, units),
                     to_variance(cfg.prior.sigma_x0, units));
}

LossConfig make_loss_config(const RunConfig& cfg) {
  LossConfig l;
  l.lambda_a_dim = cfg.loss.lambda_a_dim;
  l.lambda_x_dim = cfg.loss.lambda_x_dim;
  l.lambda_g = cfg.loss.lambda_g;
  l.warmup_steps = cfg.loss.warmup_steps;
  l.block_size_scaling = cfg.loss.block_size_scaling;
  l.intra_weight = cfg.loss.intra_weight;
  l.cross_weight = cfg.loss.cross_weight;
  return l;
}

}  // namespace hibcg
