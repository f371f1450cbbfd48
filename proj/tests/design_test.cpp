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

#include "rampmerge/design.hpp"

#include "rampmerge/clustering.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "rampmerge/stats.hpp"
#include "test_util.hpp"

namespace rampmerge {
namespace {

DesignPlan plan(Level level, Scheme scheme, Temporal temporal, std::vector<double> c,
                std::shared_ptr<const Clustering> cl = nullptr) {
  DesignPlan p;
  p.level = level;
  p.scheme = scheme;
  p.temporal = temporal;
  p.proportions = std::move(c);
  p.clustering = std::move(cl);
  return p;
}

void check_invariants(const DesignPlan& p, const AssignmentPanel& panel) {
  for (std::size_t t = 0; t < panel.steps(); ++t) {
    auto z = panel.step(t);
    std::size_t count = 0;
    for (auto v : z) {
      ASSERT_LE(v, 1);
      count += v;
    }
    ASSERT_EQ(count, panel.realized_counts[t]);
    if (p.level == Level::kUnit && p.scheme == Scheme::kComplete) {
      ASSERT_EQ(count, treated_count(p.proportions[t], panel.n));
    }
    if (p.level == Level::kCluster) {
      std::vector<int> value(p.clustering->num_clusters(), -1);
      for (std::size_t i = 0; i < panel.n; ++i) {
        auto c = p.clustering->assignment[i];
        if (value[c] < 0) value[c] = z[i];
        ASSERT_EQ(value[c], z[i]) << "cluster " << c << " is split";
      }
      if (p.scheme == Scheme::kComplete) {
        // Coverage first reaches the target: dropping any treated cluster falls short.
        ASSERT_GE(count, panel.target_counts[t]);
      }
    }
    if (p.temporal == Temporal::kRollout && t > 0) {
      auto prev = panel.step(t - 1);
      for (std::size_t i = 0; i < panel.n; ++i) ASSERT_LE(prev[i], z[i]);
    }
  }
}

TEST(TreatedCount, RoundHalfUp) {
  EXPECT_EQ(treated_count(0.5, 5), 3u);
  EXPECT_EQ(treated_count(0.25, 10), 3u);
  EXPECT_EQ(treated_count(0.1, 11586), 1159u);
  EXPECT_EQ(treated_count(0.0, 10), 0u);
  EXPECT_EQ(treated_count(1.0, 10), 10u);
}

TEST(Assign, UnitCompleteExactCount) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto panel = assign(plan(Level::kUnit, Scheme::kComplete, Temporal::kIndependent, {0.5}), 4, seed);
    EXPECT_EQ(panel.realized_counts[0], 2u);
  }
}

TEST(Assign, RolloutNested) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = plan(Level::kUnit, Scheme::kComplete, Temporal::kRollout, {0.25, 0.5});
    auto panel = assign(p, 8, seed);
    EXPECT_EQ(panel.realized_counts, (std::vector<std::size_t>{2, 4}));
    check_invariants(p, panel);
  }
}

TEST(Assign, Deterministic) {
  auto p = plan(Level::kUnit, Scheme::kBernoulli, Temporal::kIndependent, {0.3, 0.6});
  EXPECT_EQ(assign(p, 100, 5).z, assign(p, 100, 5).z);
  EXPECT_NE(assign(p, 100, 5).z, assign(p, 100, 6).z);
}

TEST(Assign, AllSchemesKeepInvariants) {
  Graph g = testutil::random_graph(150, 300, 1);
  auto cl = std::make_shared<const Clustering>(louvain(g, 1.0, 0));
  for (auto level : {Level::kUnit, Level::kCluster}) {
    for (auto scheme : {Scheme::kBernoulli, Scheme::kComplete}) {
      for (auto temporal : {Temporal::kIndependent, Temporal::kRollout, Temporal::kRepeated}) {
        std::vector<double> c = temporal == Temporal::kRepeated ? std::vector<double>{0.5, 0.5, 0.5}
                                                                : std::vector<double>{0.1, 0.25, 0.5};
        auto p = plan(level, scheme, temporal, c, level == Level::kCluster ? cl : nullptr);
        for (std::uint64_t seed = 0; seed < 20; ++seed) check_invariants(p, assign(p, 150, seed));
      }
    }
  }
}

TEST(Assign, ClusterCompleteStopsAtFirstCoverage) {
  Graph g = testutil::random_graph(200, 300, 2);
  auto cl = std::make_shared<const Clustering>(louvain(g, 5.0, 0));
  auto p = plan(Level::kCluster, Scheme::kComplete, Temporal::kIndependent, {0.5}, cl);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto panel = assign(p, 200, seed);
    std::size_t largest = *std::max_element(cl->sizes.begin(), cl->sizes.end());
    EXPECT_LT(panel.realized_counts[0], panel.target_counts[0] + largest);
    EXPECT_GE(panel.realized_counts[0], panel.target_counts[0]);
  }
}

TEST(Assign, MarginalFrequency) {
  const std::size_t n = 400;
  std::vector<double> freq(n, 0.0);
  auto p = plan(Level::kUnit, Scheme::kComplete, Temporal::kIndependent, {0.5});
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto panel = assign(p, n, replication_seed(99, seed));
    for (std::size_t i = 0; i < n; ++i) freq[i] += panel.step(0)[i];
  }
  for (double f : freq) EXPECT_NEAR(f / 1000.0, 0.5, 0.05);
}

TEST(Assign, BernoulliRolloutThresholdsOneUniform) {
  auto p = plan(Level::kUnit, Scheme::kBernoulli, Temporal::kRollout, {0.2, 0.7});
  double c1 = 0, c2 = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto panel = assign(p, 500, seed);
    check_invariants(p, panel);
    c1 += panel.realized_counts[0];
    c2 += panel.realized_counts[1];
  }
  EXPECT_NEAR(c1 / (200 * 500), 0.2, 0.01);
  EXPECT_NEAR(c2 / (200 * 500), 0.7, 0.01);
}

TEST(DesignPlan, Validation) {
  EXPECT_THROW(plan(Level::kUnit, Scheme::kComplete, Temporal::kRollout, {0.5, 0.25}).validate(10),
               ParameterError);
  EXPECT_THROW(plan(Level::kUnit, Scheme::kComplete, Temporal::kRollout, {0.5, 0.5}).validate(10),
               ParameterError);
  EXPECT_THROW(plan(Level::kUnit, Scheme::kComplete, Temporal::kRepeated, {0.5, 0.4}).validate(10),
               ParameterError);
  EXPECT_THROW(plan(Level::kUnit, Scheme::kComplete, Temporal::kIndependent, {1.5}).validate(10),
               ParameterError);
  EXPECT_THROW(plan(Level::kUnit, Scheme::kComplete, Temporal::kIndependent, {}).validate(10),
               ParameterError);
  try {
    plan(Level::kCluster, Scheme::kComplete, Temporal::kIndependent, {0.5}).validate(10);
    FAIL() << "expected a configuration error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "design.clustering");
  }
  auto cl = std::make_shared<const Clustering>(louvain(synthetic_graph(GraphKind::kRing, 6), 1.0, 0));
  EXPECT_THROW(plan(Level::kCluster, Scheme::kComplete, Temporal::kIndependent, {0.5}, cl).validate(7),
               ParameterError);
}

TEST(DesignPlan, SuffixTakesLastSteps) {
  auto p = plan(Level::kUnit, Scheme::kComplete, Temporal::kRollout, {0.02, 0.05, 0.1, 0.25, 0.5});
  EXPECT_EQ(p.suffix(2).proportions, (std::vector<double>{0.25, 0.5}));
  EXPECT_EQ(p.suffix(5).proportions.size(), 5u);
}

TEST(Enums, ParseAndPrint) {
  EXPECT_EQ(parse_level("cluster"), Level::kCluster);
  EXPECT_EQ(parse_scheme("bernoulli"), Scheme::kBernoulli);
  EXPECT_EQ(parse_temporal("repeated"), Temporal::kRepeated);
  EXPECT_STREQ(to_string(Temporal::kRollout), "rollout");
  EXPECT_THROW(parse_scheme("stratified"), ParameterError);
}

TEST(PanelCsv, Format) {
  auto panel = assign(plan(Level::kUnit, Scheme::kComplete, Temporal::kRollout, {0.5, 1.0}), 2, 0);
  std::ostringstream out;
  write_panel_csv(panel, out);
  EXPECT_EQ(out.str().substr(0, 12), "step,unit,z\n");
  EXPECT_NE(out.str().find("2,0,1\n2,1,1\n"), std::string::npos);
}

TEST(Exposure, HandValues) {
  Graph path = synthetic_graph(GraphKind::kPath, 3);
  std::vector<std::uint8_t> z{1, 0, 0};
  EXPECT_EQ(exposure_onehop(path, z), (std::vector<double>{0.0, 0.5, 0.0}));
  Graph g = testutil::random_graph(30, 40, 3);
  std::vector<std::uint8_t> ones(30, 1);
  for (double e : exposure_onehop(g, ones)) EXPECT_EQ(e, 1.0);
}

TEST(Exposure, MergedVarianceExceedsSingleSteps) {
  Graph g = testutil::ring_lattice(2000, 10);
  auto p = plan(Level::kUnit, Scheme::kComplete, Temporal::kRollout, {0.25, 0.5});
  int wins = 0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    auto panel = assign(p, 2000, replication_seed(1, s));
    auto e1 = exposure_onehop(g, panel.step(0));
    auto e2 = exposure_onehop(g, panel.step(1));
    std::vector<double> merged(e1);
    merged.insert(merged.end(), e2.begin(), e2.end());
    wins += population_variance(merged) > std::max(population_variance(e1), population_variance(e2));
  }
  EXPECT_GE(wins, 95);
}

TEST(Exposure, ClusterExceedsUnitVariance) {
  Graph g = testutil::ring_lattice(2000, 10);
  auto cl = std::make_shared<const Clustering>(louvain(g, 1.0, 0));
  auto unit = plan(Level::kUnit, Scheme::kComplete, Temporal::kIndependent, {0.5});
  auto clus = plan(Level::kCluster, Scheme::kComplete, Temporal::kIndependent, {0.5}, cl);
  int wins = 0;
  for (int s = 0; s < 100; ++s) {
    auto a = exposure_onehop(g, assign(unit, 2000, s).step(0));
    auto b = exposure_onehop(g, assign(clus, 2000, s).step(0));
    wins += population_variance(b) > population_variance(a);
  }
  EXPECT_GE(wins, 95);
}

}  // namespace
}  // namespace rampmerge
