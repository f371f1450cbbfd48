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

#include "rampmerge/clustering.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "test_util.hpp"

namespace rampmerge {
namespace {

Graph two_triangles() {
  std::vector<Edge> e{{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
  return Graph::from_edges(6, e);
}

// Direct evaluation from the edge list.
double reference_modularity(const Graph& g, const std::vector<std::uint64_t>& label, double gamma) {
  double m = double(g.num_edges());
  std::map<std::uint64_t, double> inside, degree;
  for (auto [u, v] : g.edges()) {
    if (label[u] == label[v]) inside[label[u]] += 1.0;
  }
  for (NodeId i = 0; i < g.num_nodes(); ++i) degree[label[i]] += double(g.degree(i));
  double q = 0.0;
  for (auto [c, d] : degree) q += inside[c] / m - gamma * (d / (2 * m)) * (d / (2 * m));
  return q;
}

// Maximum modularity over all set partitions (restricted growth strings).
double brute_force_max(const Graph& g, double gamma) {
  NodeId n = g.num_nodes();
  std::vector<std::uint64_t> label(n, 0);
  double best = -1e9;
  std::function<void(NodeId, std::uint64_t)> rec = [&](NodeId i, std::uint64_t used) {
    if (i == n) {
      best = std::max(best, reference_modularity(g, label, gamma));
      return;
    }
    for (std::uint64_t c = 0; c <= used; ++c) {
      label[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  label[0] = 0;
  rec(1, 1);
  return best;
}

Clustering from(std::vector<std::uint64_t> labels) { return Clustering::from_labels(labels); }

TEST(Modularity, HandValues) {
  Graph tri = synthetic_graph(GraphKind::kComplete, 3);
  EXPECT_NEAR(modularity(tri, from({0, 0, 0}), 1.0), 0.0, 1e-15);
  EXPECT_NEAR(modularity(tri, from({0, 1, 2}), 1.0), -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(modularity(two_triangles(), from({0, 0, 0, 1, 1, 1}), 1.0), 0.5, 1e-15);
}

TEST(Modularity, MatchesReferenceOnRandomPartitions) {
  Graph g = testutil::random_graph(30, 40, 2);
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint64_t> label(30);
    for (auto& l : label) l = gen() % 5;
    for (double gamma : {0.5, 1.0, 3.0}) {
      EXPECT_NEAR(modularity(g, from(label), gamma), reference_modularity(g, label, gamma), 1e-12);
    }
  }
}

TEST(Modularity, SizeMismatch) {
  EXPECT_THROW(modularity(two_triangles(), from({0, 0, 0}), 1.0), ParameterError);
}

TEST(Louvain, TwoTrianglesOptimal) {
  Graph g = two_triangles();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = louvain(g, 1.0, seed);
    ASSERT_EQ(c.num_clusters(), 2u);
    EXPECT_EQ(c.assignment[0], c.assignment[1]);
    EXPECT_EQ(c.assignment[1], c.assignment[2]);
    EXPECT_EQ(c.assignment[3], c.assignment[4]);
    EXPECT_NE(c.assignment[0], c.assignment[3]);
    EXPECT_NEAR(modularity(g, c, 1.0), brute_force_max(g, 1.0), 1e-12);
  }
}

TEST(Louvain, CompleteGraphSingleCluster) {
  Graph g = synthetic_graph(GraphKind::kComplete, 6);
  auto c = louvain(g, 1.0, 3);
  EXPECT_EQ(c.num_clusters(), 1u);
  EXPECT_NEAR(modularity(g, c, 1.0), brute_force_max(g, 1.0), 1e-12);
}

TEST(Louvain, PartitionValidAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Graph g = testutil::random_graph(300, 600, seed);
    auto a = louvain(g, 1.0, 11), b = louvain(g, 1.0, 11);
    EXPECT_EQ(a.assignment, b.assignment);
    ASSERT_EQ(a.num_nodes(), 300u);
    std::size_t total = 0;
    for (auto s : a.sizes) {
      EXPECT_GT(s, 0u);
      total += s;
    }
    EXPECT_EQ(total, 300u);
    std::vector<std::size_t> recount(a.num_clusters(), 0);
    for (auto c : a.assignment) {
      ASSERT_LT(c, a.num_clusters());
      ++recount[c];
    }
    EXPECT_EQ(recount, a.sizes);
    // Dense ids in order of first appearance.
    ClusterId next = 0;
    for (auto c : a.assignment) {
      ASSERT_LE(c, next);
      if (c == next) ++next;
    }
    // Better than singletons and than one cluster.
    std::vector<std::uint64_t> single(300);
    std::iota(single.begin(), single.end(), 0);
    EXPECT_GT(modularity(g, a, 1.0), modularity(g, from(single), 1.0));
    EXPECT_GT(modularity(g, a, 1.0), 0.0);
  }
}

TEST(Louvain, NoSingleMoveImproves) {
  Graph g = testutil::random_graph(120, 200, 7);
  auto c = louvain(g, 2.0, 1);
  double q = modularity(g, c, 2.0);
  std::vector<std::uint64_t> label(c.assignment.begin(), c.assignment.end());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    auto keep = label[i];
    for (NodeId j : g.neighbors(i)) {
      label[i] = c.assignment[j];
      EXPECT_LE(reference_modularity(g, label, 2.0), q + 1e-12);
    }
    label[i] = keep;
  }
}

TEST(Louvain, ResolutionTrend) {
  for (const Graph& g : {two_triangles(), testutil::random_graph(400, 800, 5)}) {
    std::size_t prev = 0;
    for (double gamma : {1.0, 5.0, 10.0}) {
      auto k = louvain(g, gamma, 0).num_clusters();
      EXPECT_GE(k, prev);
      prev = k;
    }
  }
}

TEST(Louvain, RejectsNonPositiveResolution) {
  EXPECT_THROW(louvain(two_triangles(), 0.0, 0), ParameterError);
}

TEST(Clustering, CsvAndFromLabels) {
  auto c = from({7, 7, 3, 9, 3});
  EXPECT_EQ(c.assignment, (std::vector<ClusterId>{0, 0, 1, 2, 1}));
  EXPECT_EQ(c.sizes, (std::vector<std::size_t>{2, 2, 1}));
  std::ostringstream out;
  write_clustering_csv(c, out);
  EXPECT_EQ(out.str(), "node_id,cluster_id\n0,0\n1,0\n2,1\n3,2\n4,1\n");
  auto m = c.members();
  EXPECT_EQ(m[1], (std::vector<NodeId>{2, 4}));
}

}  // namespace
}  // namespace rampmerge
