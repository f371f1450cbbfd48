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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rampmerge/design.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/graph.hpp"
#include "rampmerge/outcomes.hpp"
#include "rampmerge/rng.hpp"

namespace rampmerge {

struct GateEstimate {
  double tau_hat = 0.0;
  std::string estimator_id;
  std::map<std::string, double> diagnostics;
};

// Pooled OLS of y on [1, z]; returns the slope. The 2x2 normal equations are
// solved in centered form: slope = S_zy / S_zz.
inline GateEstimate ols_gate(const MergedDataset& data) {
  const std::size_t N = data.records();
  double zbar = 0.0, ybar = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    zbar += data.z[k];
    ybar += data.y[k];
  }
  std::size_t treated = static_cast<std::size_t>(zbar);
  if (treated == 0 || treated == N) {
    throw DegenerateError("OLS needs both treated and control records");
  }
  zbar /= static_cast<double>(N);
  ybar /= static_cast<double>(N);
  double szz = 0.0, szy = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    double dz = data.z[k] - zbar;
    szz += dz * dz;
    szy += dz * (data.y[k] - ybar);
  }
  return {szy / szz, "ols", {{"treated_records", double(treated)}}};
}

inline GateEstimate diff_in_means(const MergedDataset& data) {
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t k = 0; k < data.records(); ++k) {
    if (data.z[k]) {
      sum1 += data.y[k];
      ++n1;
    } else {
      sum0 += data.y[k];
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw DegenerateError("difference in means needs both arms");
  return {sum1 / double(n1) - sum0 / double(n0), "dim", {}};
}

namespace detail {

inline double ht_step_sum(std::span<const std::uint8_t> z, std::span<const double> y, double c) {
  if (!(c > 0.0 && c < 1.0)) throw DegenerateError("HT needs a proportion strictly inside (0, 1)");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    s += (z[i] ? 1.0 / c : -1.0 / (1.0 - c)) * y[i];
  }
  return s;
}

}  // namespace detail

// (1/n) sum_i [z_i/c - (1-z_i)/(1-c)] y_i over a single step.
inline GateEstimate ht_standard(std::span<const std::uint8_t> z, std::span<const double> y, double c) {
  return {detail::ht_step_sum(z, y, c) / static_cast<double>(z.size()), "ht", {}};
}

// Standard HT on the last step of `data`.
inline GateEstimate ht_standard(const MergedDataset& data) {
  std::size_t t = data.steps() - 1;
  return ht_standard(data.z_step(t), data.y_step(t), data.proportions[t]);
}

// Average of the per-step HT estimates.
inline GateEstimate ht_naive_pooled(const MergedDataset& data) {
  double s = 0.0;
  for (std::size_t t = 0; t < data.steps(); ++t) {
    s += detail::ht_step_sum(data.z_step(t), data.y_step(t), data.proportions[t]);
  }
  return {s / static_cast<double>(data.n * data.steps()), "ht_pooled", {}};
}

// P(k given units all treated) under complete randomization of d out of n:
// C(n-k, d-k) / C(n, d).
inline double complete_all_treated_probability(std::size_t n, std::size_t d, std::size_t k) {
  if (k > d) return 0.0;
  double p = 1.0;
  for (std::size_t q = 0; q < k; ++q) p *= double(d - q) / double(n - q);
  return p;
}

// P(k given units all control): C(n-k, d) / C(n, d).
inline double complete_all_control_probability(std::size_t n, std::size_t d, std::size_t k) {
  return complete_all_treated_probability(n, n - d, k);
}

using Propensities = std::pair<std::vector<double>, std::vector<double>>;

struct PropensityOptions {
  std::size_t mc_draws = 10000;
  std::uint64_t seed = 0;
};

// Probabilities that unit i and all of its neighbors are treated (first) or
// all in control (second) under a single-step plan.
inline Propensities full_exposure_propensities(const Graph& g, const DesignPlan& step_plan,
                                              const PropensityOptions& opts = {}) {
  NodeId n = g.num_nodes();
  double c = step_plan.proportions.back();
  std::vector<double> p1(n), p0(n);
  if (step_plan.level == Level::kUnit) {
    std::size_t d = treated_count(c, n);
    for (NodeId i = 0; i < n; ++i) {
      std::size_t k = g.degree(i) + 1;
      if (step_plan.scheme == Scheme::kComplete) {
        p1[i] = complete_all_treated_probability(n, d, k);
        p0[i] = complete_all_control_probability(n, d, k);
      } else {
        p1[i] = std::pow(c, double(k));
        p0[i] = std::pow(1.0 - c, double(k));
      }
    }
    return {p1, p0};
  }

  // Cluster designs: the event depends only on the set of clusters touching
  // the closed neighborhood of i.
  const Clustering& cl = *step_plan.clustering;
  std::map<std::vector<ClusterId>, std::vector<NodeId>> groups;
  for (NodeId i = 0; i < n; ++i) {
    std::vector<ClusterId> set{cl.assignment[i]};
    for (NodeId j : g.neighbors(i)) set.push_back(cl.assignment[j]);
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    groups[std::move(set)].push_back(i);
  }
  if (step_plan.scheme == Scheme::kBernoulli) {
    for (const auto& [set, units] : groups) {
      double a = std::pow(c, double(set.size())), b = std::pow(1.0 - c, double(set.size()));
      for (NodeId i : units) {
        p1[i] = a;
        p0[i] = b;
      }
    }
    return {p1, p0};
  }

  // Cluster-level complete: Monte Carlo over assignment draws.
  DesignPlan plan = step_plan;
  plan.temporal = Temporal::kIndependent;
  plan.proportions = {c};
  std::vector<std::size_t> hits1(groups.size(), 0), hits0(groups.size(), 0);
  std::vector<std::uint8_t> treated(cl.num_clusters());
  std::vector<std::uint8_t> z(n);
  for (std::size_t draw = 0; draw < opts.mc_draws; ++draw) {
    Philox4x32 rng(replication_seed(opts.seed, draw), stream::at(stream::kPropensity, 0));
    detail::fill_step(plan, detail::fresh_draw(plan, cl.num_clusters(), rng), c, n, z);
    for (ClusterId k = 0; k < cl.num_clusters(); ++k) treated[k] = 0;
    for (NodeId i = 0; i < n; ++i) treated[cl.assignment[i]] = z[i];
    std::size_t gi = 0;
    for (const auto& [set, units] : groups) {
      bool all1 = true, all0 = true;
      for (ClusterId k : set) {
        all1 = all1 && treated[k];
        all0 = all0 && !treated[k];
      }
      hits1[gi] += all1;
      hits0[gi] += all0;
      ++gi;
    }
  }
  std::size_t gi = 0;
  for (const auto& [set, units] : groups) {
    for (NodeId i : units) {
      p1[i] = double(hits1[gi]) / double(opts.mc_draws);
      p0[i] = double(hits0[gi]) / double(opts.mc_draws);
    }
    ++gi;
  }
  return {p1, p0};
}

// Exposure-indicator HT on the last step of `data`:
// (1/n) sum_i [delta_i(1)/P(delta_i(1)) - delta_i(0)/P(delta_i(0))] y_i, where
// delta_i(v) says unit i and every neighbor have treatment v. Units whose
// propensity is zero contribute nothing and are counted in the diagnostics.
inline GateEstimate ht_exposure(const MergedDataset& data, const Propensities& props) {
  std::size_t t = data.steps() - 1;
  const Graph& g = *data.graphs[t];
  auto z = data.z_step(t);
  auto y = data.y_step(t);
  const auto& [p1, p0] = props;
  if (p1.size() != g.num_nodes()) throw ParameterError("propensities do not match the graph");

  double s = 0.0;
  std::size_t exposed1 = 0, exposed0 = 0, zero1 = 0, zero0 = 0;
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    if (p1[i] == 0.0) ++zero1;
    if (p0[i] == 0.0) ++zero0;
    bool all1 = z[i] == 1, all0 = z[i] == 0;
    for (NodeId j : g.neighbors(i)) {
      all1 = all1 && z[j] == 1;
      all0 = all0 && z[j] == 0;
    }
    if (all1 && p1[i] > 0.0) {
      s += y[i] / p1[i];
      ++exposed1;
    }
    if (all0 && p0[i] > 0.0) {
      s -= y[i] / p0[i];
      ++exposed0;
    }
  }
  return {s / double(g.num_nodes()),
          "ht_exposure",
          {{"exposed_treated", double(exposed1)},
           {"exposed_control", double(exposed0)},
           {"zero_propensity_treated", double(zero1)},
           {"zero_propensity_control", double(zero0)}}};
}

inline GateEstimate ht_exposure(const MergedDataset& data, const PropensityOptions& opts = {}) {
  return ht_exposure(data, full_exposure_propensities(*data.graphs.back(), data.plan.suffix(1), opts));
}

// P(1) - P(0) for the interpolating polynomial through (c_t, mean_t).
inline GateEstimate lagrange_gate(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw DegenerateError("interpolation needs at least two steps");
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      if (points[a].first == points[b].first) {
        throw DegenerateError("interpolation needs distinct proportions");
      }
    }
  }
  auto eval = [&](double x) {
    double acc = 0.0;
    for (std::size_t a = 0; a < points.size(); ++a) {
      double basis = 1.0;
      for (std::size_t b = 0; b < points.size(); ++b) {
        if (a != b) basis *= (x - points[b].first) / (points[a].first - points[b].first);
      }
      acc += basis * points[a].second;
    }
    return acc;
  };
  return {eval(1.0) - eval(0.0), "lagrange", {}};
}

inline GateEstimate lagrange_gate(const MergedDataset& data) {
  std::vector<std::pair<double, double>> points;
  for (std::size_t t = 0; t < data.steps(); ++t) {
    auto y = data.y_step(t);
    double s = 0.0;
    for (double v : y) s += v;
    points.emplace_back(data.proportions[t], s / double(data.n));
  }
  return lagrange_gate(points);
}

struct ExposureRegressionOptions {
  int hops = 2;
  double ridge = 1e-8;
};

// Pooled ridge regression of y on [1, z, e^(1), ..., e^(K)] with
// e^(k) = (D^{-1}A)^k z on each step's graph. The intercept is unpenalized.
// The estimate is the fitted gap between z = 1 (all exposures 1) and z = 0.
inline GateEstimate exposure_regression_gate(const MergedDataset& data,
                                             const ExposureRegressionOptions& opts = {}) {
  if (opts.hops < 1) throw ParameterError("hops must be at least 1");
  if (!(opts.ridge >= 0.0)) throw ParameterError("ridge must be nonnegative");
  const auto p = static_cast<Eigen::Index>(opts.hops + 2);
  const auto N = static_cast<Eigen::Index>(data.records());
  Eigen::MatrixXd X(N, p);
  Eigen::VectorXd y(N);
  for (std::size_t t = 0; t < data.steps(); ++t) {
    const Graph& g = *data.graphs[t];
    auto z = data.z_step(t);
    std::vector<double> e(z.begin(), z.end()), next(data.n);
    auto base = static_cast<Eigen::Index>(t * data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
      X(base + Eigen::Index(i), 0) = 1.0;
      X(base + Eigen::Index(i), 1) = z[i];
      y(base + Eigen::Index(i)) = data.y_step(t)[i];
    }
    for (int k = 0; k < opts.hops; ++k) {
      for (NodeId i = 0; i < g.num_nodes(); ++i) {
        double acc = 0.0;
        for (NodeId j : g.neighbors(i)) acc += e[j];
        next[i] = acc / double(g.degree(i));
      }
      e.swap(next);
      for (std::size_t i = 0; i < data.n; ++i) X(base + Eigen::Index(i), 2 + k) = e[i];
    }
  }

  Eigen::VectorXd theta;
  GateEstimate out{0.0, "expreg", {}};
  if (opts.ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      throw DegenerateError("exposure regression design is rank deficient; use ridge > 0");
    }
    theta = qr.solve(y);
  } else {
    Eigen::MatrixXd gram = X.transpose() * X;
    for (Eigen::Index k = 1; k < p; ++k) gram(k, k) += opts.ridge;
    theta = gram.ldlt().solve(X.transpose() * y);
    out.diagnostics["ridge"] = opts.ridge;
  }
  double tau = 0.0;
  for (Eigen::Index k = 1; k < p; ++k) tau += theta(k);
  out.tau_hat = tau;
  return out;
}

struct EstimatorOptions {
  PropensityOptions propensity;
  ExposureRegressionOptions expreg;
};

inline const std::vector<std::string>& builtin_estimators() {
  static const std::vector<std::string> ids = {"ols",         "dim",      "ht",    "ht_pooled",
                                               "ht_exposure", "lagrange", "expreg"};
  return ids;
}

inline bool is_builtin_estimator(const std::string& id) {
  const auto& ids = builtin_estimators();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// Dispatch by id. `props` may carry precomputed propensities for ht_exposure.
inline GateEstimate estimate(const std::string& id, const MergedDataset& data,
                             const EstimatorOptions& opts = {}, const Propensities* props = nullptr) {
  if (id == "ols") return ols_gate(data);
  if (id == "dim") return diff_in_means(data);
  if (id == "ht") return ht_standard(data);
  if (id == "ht_pooled") return ht_naive_pooled(data);
  if (id == "ht_exposure") return props ? ht_exposure(data, *props) : ht_exposure(data, opts.propensity);
  if (id == "lagrange") return lagrange_gate(data);
  if (id == "expreg") return exposure_regression_gate(data, opts.expreg);
  throw ParameterError("unknown estimator '" + id + "'");
}

}  // namespace rampmerge
