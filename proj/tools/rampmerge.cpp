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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rampmerge/config.hpp"
#include "rampmerge/design.hpp"
#include "rampmerge/harness.hpp"
#include "rampmerge/interference.hpp"
#include "rampmerge/stats.hpp"
#include "rampmerge/theory.hpp"

namespace fs = std::filesystem;
using namespace rampmerge;

namespace {

struct Flags {
  std::string config;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string output;
  bool quiet = false;
};

RunConfig load(const Flags& f) {
  RunConfig cfg = load_config(f.config);
  if (!f.output.empty()) cfg.output_dir = f.output;
  return cfg;
}

bool check_expectations(const RunConfig& cfg, const EstimateReport& report) {
  bool all = true;
  for (const auto& e : cfg.expected) {
    const ReportRow* row = nullptr;
    for (const auto& r : report.rows) {
      if (r.estimator == e.estimator && r.t == e.t) row = &r;
    }
    if (!row) {
      std::cout << "check " << e.estimator << " t=" << e.t << ": no such row\n";
      all = false;
      continue;
    }
    double got = e.metric == "bias" ? row->bias : e.metric == "std" ? row->std : row->mse;
    bool ok = std::abs(got - e.value) <= e.tolerance;
    all = all && ok;
    std::printf("check %s t=%zu %s: got %.4f, expected %.4f +- %.4f  %s\n", e.estimator.c_str(), e.t,
                e.metric.c_str(), got, e.value, e.tolerance, ok ? "ok" : "MISMATCH");
  }
  return all;
}

int cmd_run(const Flags& f) {
  RunConfig cfg = load(f);
  Scenario s = build_scenario(cfg);
  fs::create_directories(cfg.output_dir);
  EstimateReport report = run_scenario(s, f.workers);
  {
    std::ofstream out(cfg.output_dir / "results.csv");
    write_results_csv(report, out);
  }
  std::ofstream(cfg.output_dir / "results.json") << results_json(report).dump(2) << '\n';
  if (cfg.graph_path) {
    std::ofstream out(cfg.output_dir / "node_map.csv");
    out << "node_id,label\n";
    auto labels = s.graph->labels();
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
  }
  {
    std::ofstream out(cfg.output_dir / "tau.csv");
    write_tau_csv(report, out);
  }
  for (const auto& row : report.rows) {
    if (row.n_failed == 0) continue;
    std::string first;
    for (const auto& rep : report.tau[&row - report.rows.data()]) {
      if (!rep.error.empty()) {
        first = rep.error;
        break;
      }
    }
    std::cerr << "warning: " << row.estimator << " t=" << row.t << " failed in " << row.n_failed << " of "
              << report.replications << " replications (" << first << ")\n";
  }
  if (!f.quiet) {
    print_table(report, std::cout);
    check_expectations(cfg, report);
  }
  return 0;
}

int cmd_theory(const Flags& f) {
  RunConfig cfg = load(f);
  Scenario s = build_scenario(cfg);
  const auto& props = cfg.plan.proportions;
  std::size_t n = s.graph->num_nodes();
  std::printf("n = %zu, proportions =", n);
  for (double c : props) std::printf(" %g", c);
  std::printf("\n");

  if (!s.model.is_linear()) {
    std::printf("model %s is nonlinear; bias formulas apply to linear models only\n", to_string(s.model.kind));
  } else {
    std::optional<InterferenceMatrix> B;
    double total = 0.0;
    switch (s.model.kind) {
      case ModelKind::kGeneralLinear: B = *s.model.B; break;
      case ModelKind::kOnehopLinear: B = build_onehop_B(*s.graph, s.model.r); break;
      default:
        try {
          B = build_multihop_B(*s.graph, s.model.hop_weights);
        } catch (const ResourceError& e) {
          std::printf("note: %s; using the matrix-free operator\n", e.what());
        }
    }
    total = B ? B->total_sum() : total_sum(model_interference(s.model, s.graph));
    std::printf("sum B = %.6f, sum B / n = %.6f, GATE = %.6f\n", total, total / double(n),
                s.model.beta1 + total / double(n));
    if (B) {
      auto diag = assumption_diagnostics(*B);
      std::printf("max_i sum_j |B_ij| = %.6f, sum_j (colsum_j)^2 / n = %.6f\n", diag.max_abs_row_sum,
                  diag.col_sq_over_n);
    }

    std::printf("\n   t  proportions                      bias\n");
    for (std::size_t t = 1; t <= props.size(); ++t) {
      auto suffix = cfg.plan.suffix(t).proportions;
      std::string list;
      for (double c : suffix) list += (list.empty() ? "" : ",") + std::to_string(c).substr(0, 5);
      try {
        std::printf("%4zu  %-30s %9.4f\n", t, list.c_str(), bias_T(total, n, suffix) + 0.0);
      } catch (const DegenerateError& e) {
        std::printf("%4zu  %-30s %9s (%s)\n", t, list.c_str(), "-", e.what());
      }
    }
    if (props.size() == 1 || (props.size() == 2 && props[0] != props[1])) {
      double b = props.size() == 1 ? bias_T1(total, n) : bias_T2(total, n, props[0], props[1]);
      std::printf("closed form (%s): %.6f\n", props.size() == 1 ? "one step" : "two steps", b + 0.0);
    }

    if (B && n >= 4) {
      double c = props.back();
      auto bs = bsums(*B);
      try {
        std::printf("\nexact single-step variance at c = %g: %.6g\n", c,
                    variance_T1_exact(bs, n, c, s.model.sigma_e));
      } catch (const Error& e) {
        std::printf("\nexact single-step variance unavailable: %s\n", e.what());
      }
      for (double cc : props) {
        auto tr = exposure_trace(*B, cfg.plan.level, cfg.plan.scheme, cc, s.plan.clustering.get());
        if (tr) {
          std::printf("trace(B'B Cov z) at c = %g: %.6f\n", cc, *tr);
        } else {
          std::printf("trace(B'B Cov z) at c = %g: not available for this design\n", cc);
        }
      }
    }
  }

  if (!cfg.x_grid.empty()) {
    std::printf("\nadding a step with proportion x to (");
    for (std::size_t k = 0; k < props.size(); ++k) std::printf("%s%g", k ? ", " : "", props[k]);
    std::printf(")\n       x          lhs  improves\n");
    std::optional<Improvement> prev;
    double prev_x = 0.0;
    for (double x : cfg.x_grid) {
      auto imp = corollary2_improvement(props, x);
      std::printf("%8.4f %12.6g  %s\n", x, imp.lhs, imp.improves ? "yes" : "no");
      if (prev && prev->improves != imp.improves) {
        std::printf("         boundary crossed between x = %g and x = %g\n", prev_x, x);
      }
      prev = imp;
      prev_x = x;
    }
    auto roots = corollary2_roots(props);
    for (double r : roots) {
      if (r >= 0.0 && r <= 1.0) std::printf("boundary root at x = %.6f\n", r);
    }
  }
  return 0;
}

int cmd_exposure(const Flags& f) {
  RunConfig cfg = load(f);
  Scenario s = build_scenario(cfg);
  auto graphs = step_graphs(s);
  std::size_t n = s.graph->num_nodes(), T = s.plan.steps();
  constexpr int kBins = 50;
  constexpr double kWidth = 0.02;
  std::vector<std::vector<std::size_t>> hist(T + 1, std::vector<std::size_t>(kBins, 0));
  std::vector<std::vector<double>> var(T + 1);

  for (std::size_t seed = 0; seed < cfg.exposure_seeds; ++seed) {
    auto panel = assign(s.plan, n, replication_seed(cfg.master_seed, seed));
    std::vector<double> merged;
    for (std::size_t t = 0; t <= T; ++t) {
      std::vector<double> e;
      if (t < T) {
        e = exposure_onehop(*graphs[t], panel.step(t));
        merged.insert(merged.end(), e.begin(), e.end());
      } else {
        e = merged;
      }
      var[t].push_back(population_variance(e));
      if (seed != 0) continue;
      for (double v : e) {
        int bin = std::min(kBins - 1, static_cast<int>(std::floor(v / kWidth + 1e-9)));
        ++hist[t][bin];
      }
    }
  }

  fs::create_directories(cfg.output_dir);
  auto label = [&](std::size_t t) { return t < T ? std::to_string(t + 1) : std::string("merged"); };
  {
    std::ofstream out(cfg.output_dir / "exposure_hist.csv");
    out << "step,bin_lo,bin_hi,count\n";
    for (std::size_t t = 0; t <= T; ++t) {
      for (int b = 0; b < kBins; ++b) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f,%.2f", b * kWidth, (b + 1) * kWidth);
        out << label(t) << ',' << buf << ',' << hist[t][b] << '\n';
      }
    }
  }
  {
    std::ofstream out(cfg.output_dir / "exposure_variance.csv");
    out << "seed,step,variance\n";
    out.precision(17);
    for (std::size_t seed = 0; seed < cfg.exposure_seeds; ++seed) {
      for (std::size_t t = 0; t <= T; ++t) out << seed << ',' << label(t) << ',' << var[t][seed] << '\n';
    }
  }
  if (!f.quiet) {
    std::printf("exposure variance, mean over %zu randomization(s)\n", cfg.exposure_seeds);
    for (std::size_t t = 0; t <= T; ++t) {
      std::string name = t < T ? "c = " + std::to_string(s.plan.proportions[t]).substr(0, 5) : "merged";
      std::printf("  %-12s %.4f\n", name.c_str(), mean(var[t]));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Merged ramp-up experiments under network interference"};
  app.require_subcommand(1);
  Flags flags;
  auto add_flags = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration (JSON)")->required();
    sub->add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--output", flags.output, "Output directory (overrides output.dir)");
    sub->add_flag("--quiet", flags.quiet, "Suppress the summary table");
  };
  auto* run = app.add_subcommand("run", "Monte Carlo run; writes results.csv, results.json, tau.csv");
  auto* theory = app.add_subcommand("theory", "Evaluate the bias, variance and improvement formulas");
  auto* exposure = app.add_subcommand("exposure", "Exposure histograms and variances");
  for (auto* sub : {run, theory, exposure}) add_flags(sub);
  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(flags);
    if (theory->parsed()) return cmd_theory(flags);
    return cmd_exposure(flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
