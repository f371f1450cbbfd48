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

#include "rampmerge/estimators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rampmerge/clustering.hpp"
#include "rampmerge/stats.hpp"
#include "test_util.hpp"

namespace rampmerge {
namespace {

OutcomeModel onehop(double b0 = 1, double b1 = 1, double r = 1, double sigma = 0) {
  OutcomeModel m;
  m.kind = ModelKind::kOnehopLinear;
  m.beta0 = b0;
  m.beta1 = b1;
  m.r = r;
  m.sigma_e = sigma;
  return m;
}

DesignPlan make_plan(std::vector<double> c, Level level = Level::kUnit, Scheme scheme = Scheme::kComplete,
                     Temporal temporal = Temporal::kIndependent,
                     std::shared_ptr<const Clustering> cl = nullptr) {
  DesignPlan p;
  p.level = level;
  p.scheme = scheme;
  p.temporal = temporal;
  p.proportions = std::move(c);
  p.clustering = std::move(cl);
  return p;
}

// Dataset with prescribed treatment rows and noise-free outcomes.
MergedDataset dataset(const std::shared_ptr<const Graph>& g, const OutcomeModel& m, const DesignPlan& plan,
                      const std::vector<std::vector<std::uint8_t>>& rows) {
  MergedDataset d;
  d.n = g->num_nodes();
  d.proportions = plan.proportions;
  d.plan = plan;
  d.model_kind = m.kind;
  d.true_gate = true_gate(m, g);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    auto y = generate_outcomes(m, g, rows[t], 0, t);
    d.z.insert(d.z.end(), rows[t].begin(), rows[t].end());
    d.y.insert(d.y.end(), y.begin(), y.end());
    d.graphs.push_back(g);
  }
  return d;
}

std::vector<std::uint8_t> bits(std::uint32_t mask, unsigned n) {
  std::vector<std::uint8_t> z(n);
  for (unsigned i = 0; i < n; ++i) z[i] = (mask >> i) & 1u;
  return z;
}

TEST(Ols, NoInterferenceRecoversBeta1) {
  auto g = testutil::shared(testutil::random_graph(50, 50, 1));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = run_experiment(onehop(1, 1, 0, 0), make_plan({0.1, 0.3, 0.6}, Level::kUnit, Scheme::kBernoulli),
                            {g, g, g}, seed);
    EXPECT_NEAR(ols_gate(d).tau_hat, 1.0, 1e-12);
    EXPECT_NEAR(diff_in_means(d).tau_hat, 1.0, 1e-12);
  }
}

TEST(Ols, PathFourEnumeration) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kPath, 4));
  auto plan = make_plan({0.5});
  std::vector<double> taus;
  testutil::for_each_mask(4, 2, [&](std::uint32_t m) {
    taus.push_back(ols_gate(dataset(g, onehop(), plan, {bits(m, 4)})).tau_hat);
  });
  ASSERT_EQ(taus.size(), 6u);
  EXPECT_NEAR(testutil::moments(taus).mean - 2.0, -4.0 / 3.0, 1e-12);
}

TEST(Ols, EqualsDiffInMeans) {
  auto g = testutil::shared(testutil::random_graph(80, 100, 2));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto d = run_experiment(onehop(1, 1, 1, 0.1), make_plan({0.2, 0.5}, Level::kUnit, Scheme::kBernoulli),
                            {g, g}, seed);
    EXPECT_NEAR(ols_gate(d).tau_hat, diff_in_means(d).tau_hat, 1e-10);
    EXPECT_NEAR(ols_gate(d.step(1)).tau_hat, diff_in_means(d.step(1)).tau_hat, 1e-10);
  }
}

TEST(Ols, DegenerateArms) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kRing, 5));
  auto all = dataset(g, onehop(), make_plan({1.0}), {std::vector<std::uint8_t>(5, 1)});
  EXPECT_THROW(ols_gate(all), DegenerateError);
  EXPECT_THROW(diff_in_means(all), DegenerateError);
  auto none = dataset(g, onehop(), make_plan({0.0}), {std::vector<std::uint8_t>(5, 0)});
  EXPECT_THROW(ols_gate(none), DegenerateError);
}

TEST(Ht, ExactUnderNoInterference) {
  auto g = testutil::shared(testutil::random_graph(8, 5, 3));
  testutil::for_each_mask(8, 4, [&](std::uint32_t m) {
    auto d = dataset(g, onehop(1, 1, 0, 0), make_plan({0.5}), {bits(m, 8)});
    EXPECT_NEAR(ht_standard(d).tau_hat, 1.0, 1e-12);
  });
}

TEST(Ht, PooledReducesToStandardForOneStep) {
  auto g = testutil::shared(testutil::random_graph(60, 60, 4));
  auto d = run_experiment(onehop(1, 1, 1, 0.1), make_plan({0.3}), {g}, 8);
  EXPECT_DOUBLE_EQ(ht_naive_pooled(d).tau_hat, ht_standard(d).tau_hat);
  EXPECT_DOUBLE_EQ(ht_standard(d.z_step(0), d.y_step(0), 0.3).tau_hat, ht_standard(d).tau_hat);
}

TEST(Ht, PooledAveragesSteps) {
  auto g = testutil::shared(testutil::random_graph(60, 60, 4));
  auto d = run_experiment(onehop(1, 1, 1, 0.1), make_plan({0.3, 0.6}), {g, g}, 8);
  double a = ht_standard(d.z_step(0), d.y_step(0), 0.3).tau_hat;
  double b = ht_standard(d.z_step(1), d.y_step(1), 0.6).tau_hat;
  EXPECT_NEAR(ht_naive_pooled(d).tau_hat, 0.5 * (a + b), 1e-12);
}

TEST(Ht, BoundaryProportionDegenerate) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kRing, 5));
  auto d = dataset(g, onehop(), make_plan({0.0, 0.6}), {std::vector<std::uint8_t>(5, 0), {1, 1, 1, 0, 0}});
  EXPECT_THROW(ht_naive_pooled(d), DegenerateError);
  EXPECT_NO_THROW(ht_standard(d));
}

TEST(Propensity, CompleteHelpers) {
  // star(3) hub: both leaves treated with d = 1 is impossible.
  EXPECT_EQ(complete_all_treated_probability(3, 1, 2), 0.0);
  EXPECT_NEAR(complete_all_treated_probability(10, 5, 2), 5.0 / 10 * 4.0 / 9, 1e-15);
  EXPECT_NEAR(complete_all_control_probability(10, 3, 3), 7.0 / 10 * 6.0 / 9 * 5.0 / 8, 1e-15);
}

TEST(Propensity, BernoulliPath) {
  Graph g = synthetic_graph(GraphKind::kPath, 3);
  auto [p1, p0] = full_exposure_propensities(g, make_plan({0.5}, Level::kUnit, Scheme::kBernoulli));
  EXPECT_DOUBLE_EQ(p1[1], 0.125);  // middle node and both neighbors
  EXPECT_DOUBLE_EQ(p1[0], 0.25);
  EXPECT_DOUBLE_EQ(p0[2], 0.25);
  EXPECT_DOUBLE_EQ(std::pow(0.5, double(g.degree(1))), 0.25);
}

TEST(Propensity, CompleteMatchesEnumeration) {
  Graph g = testutil::random_graph(10, 6, 5);
  for (unsigned d : {3u, 5u, 7u}) {
    auto [p1, p0] = full_exposure_propensities(g, make_plan({d / 10.0}));
    std::vector<double> c1(10, 0), c0(10, 0);
    double total = 0;
    testutil::for_each_mask(10, d, [&](std::uint32_t m) {
      ++total;
      for (NodeId i = 0; i < 10; ++i) {
        bool all1 = (m >> i) & 1u, all0 = !((m >> i) & 1u);
        for (NodeId j : g.neighbors(i)) {
          all1 = all1 && ((m >> j) & 1u);
          all0 = all0 && !((m >> j) & 1u);
        }
        c1[i] += all1;
        c0[i] += all0;
      }
    });
    for (NodeId i = 0; i < 10; ++i) {
      EXPECT_NEAR(p1[i], c1[i] / total, 1e-14);
      EXPECT_NEAR(p0[i], c0[i] / total, 1e-14);
    }
  }
}

TEST(Propensity, ClusterDesignsMatchEnumeration) {
  Graph g = testutil::random_graph(24, 10, 6);
  auto cl = std::make_shared<const Clustering>(louvain(g, 3.0, 0));
  std::size_t K = cl->num_clusters();
  ASSERT_GE(K, 3u);
  ASSERT_LE(K, 8u);
  auto closed = [&](NodeId i) {
    std::vector<ClusterId> s{cl->assignment[i]};
    for (NodeId j : g.neighbors(i)) s.push_back(cl->assignment[j]);
    return s;
  };

  // Bernoulli: enumerate all 2^K cluster assignments with their weights.
  double c = 0.4;
  auto [b1, b0] = full_exposure_propensities(g, make_plan({c}, Level::kCluster, Scheme::kBernoulli,
                                                           Temporal::kIndependent, cl));
  for (NodeId i = 0; i < 24; ++i) {
    double e1 = 0, e0 = 0;
    for (std::uint32_t m = 0; m < (1u << K); ++m) {
      double w = 1.0;
      for (std::size_t k = 0; k < K; ++k) w *= ((m >> k) & 1u) ? c : 1 - c;
      bool all1 = true, all0 = true;
      for (auto k : closed(i)) {
        all1 = all1 && ((m >> k) & 1u);
        all0 = all0 && !((m >> k) & 1u);
      }
      e1 += all1 * w;
      e0 += all0 * w;
    }
    EXPECT_NEAR(b1[i], e1, 1e-12);
    EXPECT_NEAR(b0[i], e0, 1e-12);
  }

  // Complete: enumerate all cluster permutations; MC must agree within tolerance.
  auto plan = make_plan({0.5}, Level::kCluster, Scheme::kComplete, Temporal::kIndependent, cl);
  PropensityOptions opts;
  opts.mc_draws = 20000;
  opts.seed = 3;
  auto [m1, m0] = full_exposure_propensities(g, plan, opts);
  std::vector<std::uint32_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0u);
  std::vector<double> e1(24, 0), e0(24, 0);
  double count = 0;
  std::size_t target = treated_count(0.5, 24);
  do {
    std::vector<bool> treated(K, false);
    std::size_t covered = 0;
    for (std::size_t k = 0; k < K && covered < target; ++k) {
      treated[perm[k]] = true;
      covered += cl->sizes[perm[k]];
    }
    ++count;
    for (NodeId i = 0; i < 24; ++i) {
      bool all1 = true, all0 = true;
      for (auto k : closed(i)) {
        all1 = all1 && treated[k];
        all0 = all0 && !treated[k];
      }
      e1[i] += all1;
      e0[i] += all0;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (NodeId i = 0; i < 24; ++i) {
    EXPECT_NEAR(m1[i], e1[i] / count, 0.015);
    EXPECT_NEAR(m0[i], e0[i] / count, 0.015);
  }
}

TEST(HtExposure, StarHubFlagged) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kStar, 3));
  auto d = dataset(g, onehop(), make_plan({1.0 / 3.0}), {{1, 0, 0}});
  auto est = ht_exposure(d);
  EXPECT_GE(est.diagnostics.at("zero_propensity_treated"), 1.0);
  EXPECT_TRUE(std::isfinite(est.tau_hat));
}

TEST(HtExposure, ExactlyUnbiasedUnderCompleteRandomization) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kRing, 12));
  auto plan = make_plan({0.5});
  auto props = full_exposure_propensities(*g, plan);
  std::vector<double> taus;
  testutil::for_each_mask(12, 6, [&](std::uint32_t m) {
    taus.push_back(ht_exposure(dataset(g, onehop(), plan, {bits(m, 12)}), props).tau_hat);
  });
  EXPECT_NEAR(testutil::moments(taus).mean, 2.0, 1e-12);
}

TEST(HtExposure, MonteCarloUnbiasedBernoulliRing) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kRing, 10));
  auto plan = make_plan({0.5}, Level::kUnit, Scheme::kBernoulli);
  std::vector<double> taus;
  for (std::uint64_t r = 0; r < 4000; ++r) {
    auto d = run_experiment(onehop(1, 1, 1, 0.1), plan, {g}, replication_seed(5, r));
    taus.push_back(ht_exposure(d).tau_hat);
  }
  double se = sample_stddev(taus) / std::sqrt(double(taus.size()));
  EXPECT_NEAR(mean(taus), 2.0, 3 * se);
}

TEST(Lagrange, LinearMeansExact) {
  std::vector<std::pair<double, double>> pts{{0.1, 1.0 + 2.5 * 0.1}, {0.6, 1.0 + 2.5 * 0.6}};
  EXPECT_NEAR(lagrange_gate(pts).tau_hat, 2.5, 1e-12);
}

TEST(Lagrange, ReproducesPolynomials) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> coef(-2, 2);
  for (std::size_t T = 2; T <= 5; ++T) {
    std::vector<double> a(T);
    for (auto& x : a) x = coef(gen);
    auto P = [&](double x) {
      double v = 0;
      for (std::size_t k = T; k-- > 0;) v = v * x + a[k];
      return v;
    };
    std::vector<std::pair<double, double>> pts;
    double cs[] = {0.0, 0.1, 0.25, 0.5, 0.8};
    for (std::size_t t = 0; t < T; ++t) pts.emplace_back(cs[t], P(cs[t]));
    EXPECT_NEAR(lagrange_gate(pts).tau_hat, P(1.0) - P(0.0), 1e-9);
  }
}

TEST(Lagrange, Errors) {
  std::vector<std::pair<double, double>> dup{{0.5, 1.0}, {0.5, 2.0}};
  EXPECT_THROW(lagrange_gate(dup), DegenerateError);
  std::vector<std::pair<double, double>> one{{0.5, 1.0}};
  EXPECT_THROW(lagrange_gate(one), DegenerateError);
}

TEST(Lagrange, UsesStepMeans) {
  auto g = testutil::shared(testutil::random_graph(40, 30, 2));
  auto d = run_experiment(onehop(), make_plan({0.0, 0.5}, Level::kUnit, Scheme::kBernoulli), {g, g}, 4);
  double m0 = mean(d.y_step(0)), m1 = mean(d.y_step(1));
  EXPECT_NEAR(lagrange_gate(d).tau_hat, (m1 - m0) / 0.5, 1e-12);
}

TEST(ExposureRegression, RealizableModelExact) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kPath, 5));
  auto plan = make_plan({0.25, 0.5}, Level::kUnit, Scheme::kComplete, Temporal::kRollout);
  auto d = dataset(g, onehop(), plan, {{0, 0, 1, 0, 0}, {1, 0, 1, 0, 1}});
  ExposureRegressionOptions opts;
  opts.hops = 1;
  opts.ridge = 0.0;
  EXPECT_NEAR(exposure_regression_gate(d, opts).tau_hat, 2.0, 1e-9);
}

TEST(ExposureRegression, CollinearExposureDegenerate) {
  auto g = testutil::shared(synthetic_graph(GraphKind::kRing, 4));
  auto d = dataset(g, onehop(), make_plan({0.5}), {{1, 1, 0, 0}});
  ExposureRegressionOptions opts;
  opts.hops = 1;
  opts.ridge = 0.0;
  try {
    exposure_regression_gate(d, opts);
    FAIL() << "expected a degenerate design";
  } catch (const DegenerateError& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  opts.ridge = 1e-3;
  EXPECT_NO_THROW(exposure_regression_gate(d, opts));
  opts.hops = 0;
  EXPECT_THROW(exposure_regression_gate(d, opts), ParameterError);
}

TEST(ExposureRegression, BeatsOlsOnQuadraticModel) {
  auto g = testutil::shared(testutil::random_graph(1000, 4000, 7));
  OutcomeModel m = onehop(1, 1, 1, 0.1);
  m.kind = ModelKind::kQuadratic;
  auto plan = make_plan({0.25, 0.5}, Level::kUnit, Scheme::kComplete, Temporal::kRollout);
  std::vector<double> ols, reg;
  for (std::uint64_t r = 0; r < 200; ++r) {
    auto d = run_experiment(m, plan, {g, g}, replication_seed(2, r));
    ols.push_back(ols_gate(d).tau_hat);
    reg.push_back(exposure_regression_gate(d).tau_hat);
  }
  double bias_ols = mean(ols) - 2.0, bias_reg = mean(reg) - 2.0;
  EXPECT_NE(bias_reg, 0.0);
  EXPECT_LT(std::abs(bias_reg), std::abs(bias_ols));
}

TEST(Registry, DispatchAndPurity) {
  auto g = testutil::shared(testutil::random_graph(60, 60, 9));
  auto d = run_experiment(onehop(1, 1, 1, 0.1), make_plan({0.25, 0.5}, Level::kUnit, Scheme::kComplete,
                                                          Temporal::kRollout),
                          {g, g}, 3);
  for (const auto& id : builtin_estimators()) {
    auto a = estimate(id, d), b = estimate(id, d);
    EXPECT_EQ(a.estimator_id, id);
    EXPECT_EQ(a.tau_hat, b.tau_hat) << id;
    EXPECT_TRUE(std::isfinite(a.tau_hat)) << id;
  }
  EXPECT_TRUE(is_builtin_estimator("lagrange"));
  EXPECT_FALSE(is_builtin_estimator("gnn"));
  EXPECT_THROW(estimate("gnn", d), ParameterError);
}

}  // namespace
}  // namespace rampmerge
