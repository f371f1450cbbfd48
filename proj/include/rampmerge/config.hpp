// Copyright 2026 The rampmerge Authors
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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rampmerge/clustering.hpp"
#include "rampmerge/design.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/graph.hpp"
#include "rampmerge/harness.hpp"
#include "rampmerge/interference.hpp"
#include "rampmerge/outcomes.hpp"

namespace rampmerge {

// A tolerance check shipped with a recipe.
struct Expectation {
  std::string estimator;
  std::size_t t = 0;
  std::string metric = "bias";  // bias, std or mse
  double value = 0.0;
  double tolerance = 0.0;
};

struct RunConfig {
  std::filesystem::path source;
  std::string scenario_id = "scenario";

  std::optional<std::filesystem::path> graph_path;
  EdgeListFormat graph_format = EdgeListFormat::kPlain;
  std::optional<GraphKind> synthetic_kind;
  NodeId synthetic_n = 0;

  bool has_clustering = false;
  double clustering_resolution = 1.0;
  std::uint64_t clustering_seed = 0;

  OutcomeModel model;
  std::optional<std::filesystem::path> b_path;
  DesignPlan plan;
  std::vector<std::string> estimators;
  std::vector<std::size_t> merge_depths;
  std::size_t replications = 1;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "out";
  bool dynamic = false;
  std::vector<double> x_grid;
  std::size_t exposure_seeds = 1;
  EstimatorOptions estimator_options;
  std::map<std::string, PluginSpec> plugins;
  std::vector<Expectation> expected;
};

namespace detail {

// Strict view of one JSON object: every key must be consumed or listed.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!ok.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json& raw(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(field(key), "missing required key");
    return j_.at(key);
  }

  Section section(const std::string& key) const { return Section(raw(key), field(key)); }

  double number(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::uint64_t integer(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(field(key), "expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::string string(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(field(key), "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& x : v) {
      if (!x.is_string()) throw ConfigError(field(key), "expected an array of strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }

  const nlohmann::json& json() const { return j_; }
  const std::string& path() const { return path_; }

 private:
  const nlohmann::json& j_;
  std::string path_;
};

// "${VAR}" expands from the environment; relative paths resolve against `base`.
inline std::filesystem::path resolve_path(const std::string& field, std::string value,
                                          const std::filesystem::path& base) {
  for (std::size_t open; (open = value.find("${")) != std::string::npos;) {
    std::size_t close = value.find('}', open);
    if (close == std::string::npos) throw ConfigError(field, "unterminated ${ in '" + value + "'");
    std::string var = value.substr(open + 2, close - open - 2);
    const char* env = std::getenv(var.c_str());
    if (!env || !*env) throw ConfigError(field, "environment variable " + var + " is not set");
    value.replace(open, close - open + 1, env);
  }
  std::filesystem::path p(value);
  if (p.is_relative()) p = base / p;
  return p;
}

template <typename Parse>
auto parse_enum(const Section& s, const std::string& key, const std::string& fallback, Parse parse) {
  try {
    return parse(s.string(key, fallback));
  } catch (const ParameterError& e) {
    throw ConfigError(s.field(key), e.what());
  }
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& source = {}) {
  using detail::Section;
  RunConfig cfg;
  cfg.source = source;
  auto base = source.empty() ? std::filesystem::current_path() : source.parent_path();
  Section root(doc, "");
  root.allow({"scenario_id", "graph", "clustering", "model", "design", "estimators", "merge_depths",
              "mc", "output", "dynamic", "theory", "exposure", "estimator_options", "plugins",
              "expected"});
  cfg.scenario_id = root.string("scenario_id", "scenario");

  {
    auto g = root.section("graph");
    g.allow({"path", "format", "synthetic"});
    if (g.has("path") == g.has("synthetic")) {
      throw ConfigError("graph", "give exactly one of path or synthetic");
    }
    if (g.has("path")) {
      cfg.graph_path = detail::resolve_path(g.field("path"), g.string("path"), base);
      if (!std::filesystem::exists(*cfg.graph_path)) {
        throw ConfigError(g.field("path"), "file not found: " + cfg.graph_path->string());
      }
      std::string fmt = g.string("format", "auto");
      if (fmt == "auto") {
        cfg.graph_format = guess_format(cfg.graph_path->string());
      } else if (fmt == "plain") {
        cfg.graph_format = EdgeListFormat::kPlain;
      } else if (fmt == "mtx" || fmt == "matrix-market") {
        cfg.graph_format = EdgeListFormat::kMatrixMarket;
      } else {
        throw ConfigError(g.field("format"), "expected auto, plain or mtx");
      }
    } else {
      if (g.has("format")) throw ConfigError(g.field("format"), "only valid with path");
      auto syn = g.section("synthetic");
      syn.allow({"kind", "n"});
      cfg.synthetic_kind = detail::parse_enum(syn, "kind", "", parse_graph_kind);
      cfg.synthetic_n = static_cast<NodeId>(syn.integer("n"));
    }
  }

  if (root.has("clustering")) {
    auto c = root.section("clustering");
    c.allow({"resolution", "seed"});
    cfg.has_clustering = true;
    cfg.clustering_resolution = c.number("resolution", 1.0);
    cfg.clustering_seed = c.integer("seed", 0);
    if (!(cfg.clustering_resolution > 0.0)) throw ConfigError(c.field("resolution"), "must be positive");
  }

  {
    auto m = root.section("model");
    m.allow({"kind", "beta0", "beta1", "r", "sigma_e", "b_path"});
    cfg.model.kind = detail::parse_enum(m, "kind", "onehop-linear", parse_model_kind);
    cfg.model.beta0 = m.number("beta0", 1.0);
    cfg.model.beta1 = m.number("beta1", 1.0);
    cfg.model.sigma_e = m.number("sigma_e", 0.0);
    if (m.has("r")) {
      if (m.raw("r").is_array()) {
        cfg.model.hop_weights = m.numbers("r");
        if (cfg.model.hop_weights.empty()) throw ConfigError(m.field("r"), "needs at least one weight");
        cfg.model.r = cfg.model.hop_weights.front();
      } else {
        cfg.model.r = m.number("r");
        cfg.model.hop_weights = {cfg.model.r};
      }
    } else {
      cfg.model.hop_weights = {cfg.model.r};
    }
    if (cfg.model.kind != ModelKind::kMultihopLinear && cfg.model.hop_weights.size() > 1) {
      throw ConfigError(m.field("r"), "a weight array is only valid for the multihop model");
    }
    if (cfg.model.kind == ModelKind::kGeneralLinear) {
      cfg.b_path = detail::resolve_path(m.field("b_path"), m.string("b_path"), base);
      if (!std::filesystem::exists(*cfg.b_path)) {
        throw ConfigError(m.field("b_path"), "file not found: " + cfg.b_path->string());
      }
    } else if (m.has("b_path")) {
      throw ConfigError(m.field("b_path"), "only valid for the general-linear model");
    }
    if (!(cfg.model.sigma_e >= 0.0)) throw ConfigError(m.field("sigma_e"), "must be nonnegative");
    if (cfg.model.kind == ModelKind::kMultihopLinear) {
      try {
        check_multihop_weights(cfg.model.hop_weights);
      } catch (const ParameterError& e) {
        throw ConfigError(m.field("r"), e.what());
      }
    }
  }

  {
    auto d = root.section("design");
    d.allow({"level", "scheme", "temporal", "proportions"});
    cfg.plan.level = detail::parse_enum(d, "level", "unit", parse_level);
    cfg.plan.scheme = detail::parse_enum(d, "scheme", "complete", parse_scheme);
    cfg.plan.temporal = detail::parse_enum(d, "temporal", "rollout", parse_temporal);
    cfg.plan.proportions = d.numbers("proportions");
    if (cfg.plan.proportions.empty()) throw ConfigError(d.field("proportions"), "needs at least one value");
    for (double c : cfg.plan.proportions) {
      if (!(c >= 0.0 && c <= 1.0)) throw ConfigError(d.field("proportions"), "values must lie in [0, 1]");
    }
    if (cfg.plan.level == Level::kCluster && !cfg.has_clustering) {
      throw ConfigError("clustering", "required by a cluster-level design");
    }
  }

  if (root.has("plugins")) {
    auto p = root.section("plugins");
    for (auto it = p.json().begin(); it != p.json().end(); ++it) {
      Section spec(it.value(), p.field(it.key()));
      spec.allow({"command", "timeout_s", "blind", "gnn_seed"});
      PluginSpec ps;
      ps.command = spec.string("command");
      ps.timeout_seconds = spec.number("timeout_s", 600.0);
      ps.blind = spec.boolean("blind", false);
      ps.gnn_seed = static_cast<int>(spec.integer("gnn_seed", 2));
      if (is_builtin_estimator(it.key())) throw ConfigError(p.field(it.key()), "shadows a built-in estimator");
      cfg.plugins[it.key()] = ps;
    }
  }

  cfg.estimators = root.has("estimators") ? root.strings("estimators") : std::vector<std::string>{"ols"};
  for (const auto& id : cfg.estimators) {
    if (!is_builtin_estimator(id) && !cfg.plugins.count(id)) {
      throw ConfigError("estimators", "unknown estimator '" + id + "'");
    }
  }

  if (root.has("merge_depths")) {
    for (double t : root.numbers("merge_depths")) {
      if (t < 1 || t > double(cfg.plan.steps()) || t != std::floor(t)) {
        throw ConfigError("merge_depths", "each depth must be an integer in 1..T");
      }
      cfg.merge_depths.push_back(static_cast<std::size_t>(t));
    }
  }

  if (root.has("mc")) {
    auto mc = root.section("mc");
    mc.allow({"replications", "master_seed"});
    cfg.replications = mc.integer("replications", 1);
    cfg.master_seed = mc.integer("master_seed", 0);
    if (cfg.replications < 1) throw ConfigError(mc.field("replications"), "must be at least 1");
  }

  if (root.has("output")) {
    auto o = root.section("output");
    o.allow({"dir"});
    cfg.output_dir = o.string("dir", "out");
  }

  if (root.has("dynamic")) {
    auto dyn = root.section("dynamic");
    dyn.allow({"enabled"});
    cfg.dynamic = dyn.boolean("enabled", false);
  }

  if (root.has("theory")) {
    auto th = root.section("theory");
    th.allow({"x_grid"});
    if (th.has("x_grid")) cfg.x_grid = th.numbers("x_grid");
    for (double x : cfg.x_grid) {
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(th.field("x_grid"), "values must lie in [0, 1]");
    }
  }

  if (root.has("exposure")) {
    auto ex = root.section("exposure");
    ex.allow({"seeds"});
    cfg.exposure_seeds = ex.integer("seeds", 1);
    if (cfg.exposure_seeds < 1) throw ConfigError(ex.field("seeds"), "must be at least 1");
  }

  if (root.has("estimator_options")) {
    auto eo = root.section("estimator_options");
    eo.allow({"expreg_hops", "expreg_ridge", "propensity_draws"});
    cfg.estimator_options.expreg.hops = static_cast<int>(eo.integer("expreg_hops", 2));
    cfg.estimator_options.expreg.ridge = eo.number("expreg_ridge", 1e-8);
    cfg.estimator_options.propensity.mc_draws = eo.integer("propensity_draws", 10000);
    if (cfg.estimator_options.expreg.hops < 1) throw ConfigError(eo.field("expreg_hops"), "must be at least 1");
    if (cfg.estimator_options.expreg.ridge < 0) throw ConfigError(eo.field("expreg_ridge"), "must be nonnegative");
    if (cfg.estimator_options.propensity.mc_draws < 1) {
      throw ConfigError(eo.field("propensity_draws"), "must be at least 1");
    }
  }

  if (root.has("expected")) {
    const auto& arr = root.raw("expected");
    if (!arr.is_array()) throw ConfigError("expected", "expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      Section e(arr[k], "expected[" + std::to_string(k) + "]");
      e.allow({"estimator", "t", "metric", "value", "tolerance"});
      Expectation x;
      x.estimator = e.string("estimator");
      x.t = e.integer("t");
      x.metric = e.string("metric", "bias");
      if (x.metric != "bias" && x.metric != "std" && x.metric != "mse") {
        throw ConfigError(e.field("metric"), "expected bias, std or mse");
      }
      x.value = e.number("value");
      x.tolerance = e.number("tolerance");
      cfg.expected.push_back(x);
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("--config", "not valid JSON: " + path.string());
  return parse_config(doc, path);
}

// Reads "i j value" lines (0-indexed) into an n x n interference matrix.
inline InterferenceMatrix load_triplets(const std::filesystem::path& path, NodeId n) {
  std::ifstream in(path);
  if (!in) throw ConfigError("model.b_path", "cannot open " + path.string());
  std::vector<Triplet> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line[0] == '%') continue;
    std::istringstream ls(line);
    std::int64_t i = 0, j = 0;
    double v = 0.0;
    if (!(ls >> i >> j >> v) || i < 0 || j < 0 || i >= n || j >= n) {
      throw ParseError("expected 'i j value' with 0 <= i, j < " + std::to_string(n), lineno);
    }
    entries.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j), v});
  }
  return InterferenceMatrix::from_triplets(n, std::move(entries));
}

inline std::shared_ptr<const Graph> load_graph(const RunConfig& cfg) {
  if (cfg.graph_path) {
    return std::make_shared<const Graph>(load_edge_list(cfg.graph_path->string(), cfg.graph_format));
  }
  return std::make_shared<const Graph>(synthetic_graph(*cfg.synthetic_kind, cfg.synthetic_n));
}

// Loads the graph, runs Louvain when a clustering is configured and assembles
// the Monte Carlo scenario.
inline Scenario build_scenario(const RunConfig& cfg) {
  Scenario s;
  s.id = cfg.scenario_id;
  s.graph = load_graph(cfg);
  s.model = cfg.model;
  if (cfg.b_path) {
    s.model.B = std::make_shared<const InterferenceMatrix>(load_triplets(*cfg.b_path, s.graph->num_nodes()));
  }
  s.plan = cfg.plan;
  if (cfg.has_clustering) {
    s.plan.clustering = std::make_shared<const Clustering>(
        louvain(*s.graph, cfg.clustering_resolution, cfg.clustering_seed));
  }
  s.estimators = cfg.estimators;
  s.merge_depths = cfg.merge_depths;
  s.replications = cfg.replications;
  s.master_seed = cfg.master_seed;
  s.dynamic = cfg.dynamic;
  s.options = cfg.estimator_options;
  s.plugins = cfg.plugins;
  s.work_dir = cfg.output_dir / "exchange";
  return s;
}

}  // namespace rampmerge
