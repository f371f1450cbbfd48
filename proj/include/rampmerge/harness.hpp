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

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fcntl.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rampmerge/design.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/estimators.hpp"
#include "rampmerge/graph.hpp"
#include "rampmerge/outcomes.hpp"
#include "rampmerge/rng.hpp"
#include "rampmerge/stats.hpp"
#include "rampmerge/theory.hpp"

extern char** environ;

namespace rampmerge {

// ---------------------------------------------------------------------------
// Plugin protocol

struct PluginSpec {
  std::string command;  // whitespace-separated argv; the exchange dir is appended
  double timeout_seconds = 600.0;
  bool blind = false;   // omit true_gate from meta.json
  int gnn_seed = 2;
};

// Writes step_<t>_edges.csv (1-based t), panel.csv and meta.json.
inline void write_exchange_dir(const MergedDataset& d, const std::filesystem::path& dir,
                               const PluginSpec& spec = {}) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < d.steps(); ++t) {
    std::ofstream out(dir / ("step_" + std::to_string(t + 1) + "_edges.csv"));
    out << "u,v\n";
    for (auto [u, v] : d.graphs[t]->edges()) out << u << ',' << v << '\n';
  }
  {
    std::ofstream out(dir / "panel.csv");
    write_dataset_csv(d, out);
  }
  nlohmann::json meta = {{"n", d.n},
                         {"proportions", d.proportions},
                         {"model_kind", to_string(d.model_kind)},
                         {"gnn_seed", spec.gnn_seed}};
  std::vector<std::string> files;
  for (std::size_t t = 0; t < d.steps(); ++t) files.push_back("step_" + std::to_string(t + 1) + "_edges.csv");
  meta["graph_files"] = files;
  if (!spec.blind) meta["true_gate"] = d.true_gate;
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

namespace detail {

inline std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream in(cmd);
  std::vector<std::string> argv;
  for (std::string tok; in >> tok;) argv.push_back(tok);
  return argv;
}

}  // namespace detail

// Runs `<command> <dir>` and reads dir/estimate.json {"tau_hat": real, ...}.
// Extra numeric or boolean fields land in the diagnostics.
inline GateEstimate plugin_estimate(const std::filesystem::path& dir, const std::string& plugin_id,
                                    const PluginSpec& spec) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "meta.json")) throw PluginError(plugin_id + ": missing meta.json");
  auto argv_s = detail::split_command(spec.command);
  if (argv_s.empty()) throw PluginError(plugin_id + ": empty command");
  argv_s.push_back(dir.string());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);
  fs::remove(dir / "estimate.json");

  std::string log = (dir / "plugin.log").string();
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  pid_t pid = 0;
  int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw PluginError(plugin_id + ": cannot launch '" + argv_s[0] + "'");

  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration<double>(spec.timeout_seconds);
  int status = 0;
  for (;;) {
    pid_t done = waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0) throw PluginError(plugin_id + ": wait failed");
    if (std::chrono::steady_clock::now() > deadline) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw PluginError(plugin_id + ": timeout after " + std::to_string(spec.timeout_seconds) + " s");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw PluginError(plugin_id + ": exited with status " + std::to_string(code));
  }

  std::ifstream in(dir / "estimate.json");
  if (!in) throw PluginError(plugin_id + ": missing estimate.json");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tau_hat") || !j["tau_hat"].is_number()) {
    throw PluginError(plugin_id + ": malformed estimate.json");
  }
  GateEstimate est{j["tau_hat"].get<double>(), plugin_id, {}};
  for (auto& [key, value] : j.items()) {
    if (key == "tau_hat") continue;
    if (value.is_number()) est.diagnostics[key] = value.get<double>();
    if (value.is_boolean()) est.diagnostics[key] = value.get<bool>() ? 1.0 : 0.0;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct Scenario {
  std::string id = "scenario";
  std::shared_ptr<const Graph> graph;
  OutcomeModel model;
  DesignPlan plan;
  std::vector<std::string> estimators;
  std::vector<std::size_t> merge_depths;  // empty: 1..T
  std::size_t replications = 1;
  std::uint64_t master_seed = 0;
  bool dynamic = false;
  EstimatorOptions options;
  std::map<std::string, PluginSpec> plugins;
  std::filesystem::path work_dir;  // plugin exchange dirs live here

  std::vector<std::size_t> depths() const {
    if (!merge_depths.empty()) return merge_depths;
    std::vector<std::size_t> all;
    for (std::size_t t = 1; t <= plan.steps(); ++t) all.push_back(t);
    return all;
  }

  void validate() const {
    if (!graph) throw ParameterError("scenario has no graph");
    if (replications < 1) throw ParameterError("replications must be at least 1");
    if (estimators.empty()) throw ParameterError("scenario has no estimators");
    for (const auto& id : estimators) {
      if (!is_builtin_estimator(id) && !plugins.count(id)) {
        throw ParameterError("estimator '" + id + "' is not registered");
      }
    }
    for (std::size_t t : depths()) {
      if (t < 1 || t > plan.steps()) throw ParameterError("merge depth out of range");
    }
    model.validate();
    plan.validate(graph->num_nodes());
  }
};

// One (estimator, depth, replication) outcome; tau_hat is NaN when it failed.
struct Replicate {
  double tau_hat = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct ReportRow {
  std::string estimator;
  std::size_t t = 0;
  double bias = 0.0;
  double std = 0.0;  // sample standard deviation, R - 1 denominator
  double mse = 0.0;
  std::size_t n_effective = 0;
  std::size_t n_failed = 0;
  std::optional<double> theory_bias;
  double wall_seconds = 0.0;
};

struct EstimateReport {
  std::string scenario_id;
  double true_gate = 0.0;
  std::size_t replications = 0;
  std::vector<ReportRow> rows;
  // tau[row][replication]
  std::vector<std::vector<Replicate>> tau;
};

// Bias, std and MSE over the successful replicates.
inline ReportRow aggregate(std::span<const Replicate> reps, double true_gate) {
  std::vector<double> ok;
  for (const auto& r : reps) {
    if (r.error.empty()) ok.push_back(r.tau_hat);
  }
  ReportRow row;
  row.n_effective = ok.size();
  row.n_failed = reps.size() - ok.size();
  if (ok.empty()) {
    row.bias = row.std = row.mse = std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  row.bias = mean(ok) - true_gate;
  row.std = ok.size() > 1 ? sample_stddev(ok) : 0.0;
  double sq = 0.0;
  for (double v : ok) sq += (v - true_gate) * (v - true_gate);
  row.mse = sq / static_cast<double>(ok.size());
  return row;
}

// Step graphs: g, evolve(g), evolve(evolve(g)), ... when dynamic.
inline std::vector<std::shared_ptr<const Graph>> step_graphs(const Scenario& s) {
  std::vector<std::shared_ptr<const Graph>> graphs{s.graph};
  for (std::size_t t = 1; t < s.plan.steps(); ++t) {
    if (s.dynamic) {
      graphs.push_back(std::make_shared<const Graph>(
          evolve_graph(*graphs.back(), replication_seed(s.master_seed, t))));
    } else {
      graphs.push_back(s.graph);
    }
  }
  return graphs;
}

// Analytic pooled-OLS bias for unit-level complete randomization under a
// linear model on a static graph.
inline std::optional<double> theory_bias(const Scenario& s, std::size_t depth) {
  if (!s.model.is_linear() || s.dynamic || s.plan.level != Level::kUnit ||
      s.plan.scheme != Scheme::kComplete) {
    return std::nullopt;
  }
  auto b = model_interference(s.model, s.graph);
  auto props = s.plan.suffix(depth).proportions;
  try {
    return bias_T(total_sum(b), s.graph->num_nodes(), props);
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
}

inline EstimateReport run_scenario(const Scenario& s, unsigned workers = 1) {
  s.validate();
  auto graphs = step_graphs(s);
  auto depths = s.depths();
  std::size_t R = s.replications;

  std::optional<Propensities> props;
  for (const auto& id : s.estimators) {
    if (id == "ht_exposure" && !props) {
      PropensityOptions po = s.options.propensity;
      po.seed = s.master_seed;
      props = full_exposure_propensities(*graphs.back(), s.plan.suffix(1), po);
    }
  }

  EstimateReport report;
  report.scenario_id = s.id;
  report.replications = R;
  for (const auto& id : s.estimators) {
    for (std::size_t t : depths) {
      ReportRow row;
      row.estimator = id;
      row.t = t;
      if (id == "ols" || id == "dim") row.theory_bias = theory_bias(s, t);
      report.rows.push_back(row);
    }
  }
  report.tau.assign(report.rows.size(), std::vector<Replicate>(R));
  std::vector<std::vector<double>> seconds(report.rows.size(), std::vector<double>(R, 0.0));
  std::vector<double> gates(R, 0.0);

  auto run_one = [&](std::size_t r) {
    std::uint64_t seed = replication_seed(s.master_seed, r);
    MergedDataset full = run_experiment(s.model, s.plan, graphs, seed);
    gates[r] = full.true_gate;
    std::size_t k = 0;
    for (const auto& id : s.estimators) {
      for (std::size_t t : depths) {
        auto start = std::chrono::steady_clock::now();
        Replicate& rep = report.tau[k][r];
        try {
          MergedDataset data = full.suffix(t);
          if (is_builtin_estimator(id)) {
            rep.tau_hat = estimate(id, data, s.options, props ? &*props : nullptr).tau_hat;
          } else {
            auto dir = s.work_dir / ("exchange_" + id + "_r" + std::to_string(r) + "_t" + std::to_string(t));
            write_exchange_dir(data, dir, s.plugins.at(id));
            rep.tau_hat = plugin_estimate(dir, id, s.plugins.at(id)).tau_hat;
            std::filesystem::remove_all(dir);
          }
        } catch (const Error& e) {
          rep.error = e.what();
        }
        seconds[k][r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        ++k;
      }
    }
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(R)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < R;) {
      try {
        run_one(r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = R;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  report.true_gate = gates.front();
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    ReportRow agg = aggregate(report.tau[k], report.true_gate);
    ReportRow& row = report.rows[k];
    row.bias = agg.bias;
    row.std = agg.std;
    row.mse = agg.mse;
    row.n_effective = agg.n_effective;
    row.n_failed = agg.n_failed;
    for (double v : seconds[k]) row.wall_seconds += v;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Exact enumeration

struct ExactMoments {
  double mean = 0.0;
  double variance = 0.0;  // over equiprobable assignments
  std::size_t assignments = 0;
};

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return r;
}

// Calls fn on every k-subset of {0, ..., m-1} in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t m, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  for (;;) {
    fn(std::span<const std::size_t>(idx));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == m - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

using DatasetEstimator = std::function<double(const MergedDataset&)>;

inline constexpr double kEnumerationBudget = 1e6;

// Exact mean and variance of an estimator over every assignment of a unit-level
// complete design, with noise-free outcomes. Rollout plans enumerate nested
// chains; independent and repeated plans enumerate the product over steps.
inline ExactMoments enumerate_oracle(const std::shared_ptr<const Graph>& g, const OutcomeModel& model,
                                     const DesignPlan& plan, const DatasetEstimator& estimator) {
  if (model.sigma_e != 0.0) throw ParameterError("enumeration needs a noise-free model");
  if (plan.level != Level::kUnit || plan.scheme != Scheme::kComplete) {
    throw ParameterError("enumeration supports unit-level complete randomization only");
  }
  std::size_t n = g->num_nodes();
  plan.validate(n);
  model.validate();
  std::size_t T = plan.steps();
  std::vector<std::size_t> d(T);
  double count = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    d[t] = treated_count(plan.proportions[t], n);
    if (plan.temporal == Temporal::kRollout) {
      std::size_t prev = t ? d[t - 1] : 0;
      count *= detail::binomial(n - prev, d[t] - prev);
    } else {
      count *= detail::binomial(n, d[t]);
    }
  }
  if (count > kEnumerationBudget) {
    throw ResourceError("enumeration needs " + std::to_string(count) + " assignments, budget is 1e6");
  }

  std::optional<Interference> b;
  if (model.kind == ModelKind::kGeneralLinear || model.kind == ModelKind::kMultihopLinear) {
    b = model_interference(model, g);
  }
  std::vector<double> zeros(n, 0.0);

  MergedDataset data;
  data.n = n;
  data.proportions = plan.proportions;
  data.z.assign(T * n, 0);
  data.y.assign(T * n, 0.0);
  data.graphs.assign(T, g);
  data.plan = plan;
  data.model_kind = model.kind;
  data.true_gate = true_gate(model, g);

  double sum = 0.0, sumsq = 0.0;
  std::size_t leaves = 0;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(count));

  std::function<void(std::size_t)> recurse = [&](std::size_t t) {
    if (t == T) {
      for (std::size_t s = 0; s < T; ++s) {
        auto z = std::span<const std::uint8_t>(data.z.data() + s * n, n);
        auto y = detail::outcomes_with_noise(model, *g, b ? &*b : nullptr, z, zeros);
        std::copy(y.begin(), y.end(), data.y.begin() + static_cast<std::ptrdiff_t>(s * n));
      }
      values.push_back(estimator(data));
      ++leaves;
      return;
    }
    std::uint8_t* row = data.z.data() + t * n;
    std::vector<std::size_t> pool;
    std::size_t need = d[t];
    if (plan.temporal == Temporal::kRollout && t > 0) {
      const std::uint8_t* prev = row - n;
      std::fill(row, row + n, std::uint8_t{0});
      for (std::size_t i = 0; i < n; ++i) {
        if (prev[i]) {
          row[i] = 1;
        } else {
          pool.push_back(i);
        }
      }
      need -= d[t - 1];
    } else {
      std::fill(row, row + n, std::uint8_t{0});
      for (std::size_t i = 0; i < n; ++i) pool.push_back(i);
    }
    std::vector<std::uint8_t> base(row, row + n);
    detail::for_each_subset(pool.size(), need, [&](std::span<const std::size_t> pick) {
      std::copy(base.begin(), base.end(), row);
      for (std::size_t k : pick) row[pool[k]] = 1;
      recurse(t + 1);
    });
  };
  recurse(0);

  for (double v : values) sum += v;
  double m = sum / double(leaves);
  for (double v : values) sumsq += (v - m) * (v - m);
  return {m, sumsq / double(leaves), leaves};
}

// ---------------------------------------------------------------------------
// Report output

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace detail

// results.csv; std uses the R - 1 denominator.
inline void write_results_csv(const EstimateReport& r, std::ostream& out) {
  out << "scenario_id,estimator,t,bias,std,mse,n_effective,theory_bias\n";
  for (const auto& row : r.rows) {
    out << r.scenario_id << ',' << row.estimator << ',' << row.t << ',' << detail::fmt(row.bias) << ','
        << detail::fmt(row.std) << ',' << detail::fmt(row.mse) << ',' << row.n_effective << ','
        << (row.theory_bias ? detail::fmt(*row.theory_bias) : "") << '\n';
  }
}

inline nlohmann::json results_json(const EstimateReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"scenario_id", r.scenario_id}, {"estimator", row.estimator},
                        {"t", row.t},                   {"bias", row.bias},
                        {"std", row.std},               {"mse", row.mse},
                        {"n_effective", row.n_effective}, {"n_failed", row.n_failed},
                        {"theory_bias", nullptr}};
    if (row.theory_bias) j["theory_bias"] = *row.theory_bias;
    rows.push_back(j);
  }
  return {{"scenario_id", r.scenario_id},
          {"true_gate", r.true_gate},
          {"replications", r.replications},
          {"std_denominator", "R-1"},
          {"rows", rows}};
}

// tau.csv: one line per (estimator, t, replication).
inline void write_tau_csv(const EstimateReport& r, std::ostream& out) {
  out << "estimator,t,replication,tau_hat,error\n";
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    for (std::size_t rep = 0; rep < r.tau[k].size(); ++rep) {
      const auto& v = r.tau[k][rep];
      std::string err = v.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out << r.rows[k].estimator << ',' << r.rows[k].t << ',' << rep << ',' << detail::fmt(v.tau_hat)
          << ',' << err << '\n';
    }
  }
}

// Rows are merge depths; each estimator contributes a (Bias, Std, MSE) triple.
inline void print_table(const EstimateReport& r, std::ostream& out) {
  std::vector<std::string> ids;
  std::vector<std::size_t> depths;
  for (const auto& row : r.rows) {
    if (std::find(ids.begin(), ids.end(), row.estimator) == ids.end()) ids.push_back(row.estimator);
    if (std::find(depths.begin(), depths.end(), row.t) == depths.end()) depths.push_back(row.t);
  }
  char buf[128];
  out << r.scenario_id << "  (true GATE " << r.true_gate << ", R = " << r.replications << ")\n";
  out << "   t";
  for (const auto& id : ids) {
    std::snprintf(buf, sizeof buf, " | %-29s", id.c_str());
    out << buf;
  }
  out << "\n    ";
  for (std::size_t k = 0; k < ids.size(); ++k) out << " |     Bias     Std     MSE     ";
  out << '\n';
  for (std::size_t t : depths) {
    std::snprintf(buf, sizeof buf, "%4zu", t);
    out << buf;
    for (const auto& id : ids) {
      for (const auto& row : r.rows) {
        if (row.estimator != id || row.t != t) continue;
        std::snprintf(buf, sizeof buf, " | %8.3f %7.3f %7.3f     ", row.bias, row.std, row.mse);
        out << buf;
      }
    }
    out << '\n';
  }
}

}  // namespace rampmerge
