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
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "rampmerge/errors.hpp"
#include "rampmerge/graph.hpp"
#include "rampmerge/rng.hpp"

namespace rampmerge {

using ClusterId = std::uint32_t;

// Partition of the nodes into dense cluster ids 0..K-1.
struct Clustering {
  std::vector<ClusterId> assignment;
  std::vector<std::size_t> sizes;
  double resolution = 1.0;
  std::uint64_t seed = 0;

  std::size_t num_clusters() const { return sizes.size(); }
  std::size_t num_nodes() const { return assignment.size(); }

  // Node lists per cluster, ascending.
  std::vector<std::vector<NodeId>> members() const {
    std::vector<std::vector<NodeId>> out(sizes.size());
    for (NodeId i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
    return out;
  }

  // Relabels arbitrary ids to 0..K-1 in order of first appearance.
  static Clustering from_labels(std::span<const std::uint64_t> labels, double resolution = 1.0,
                                std::uint64_t seed = 0) {
    Clustering c;
    c.resolution = resolution;
    c.seed = seed;
    c.assignment.resize(labels.size());
    std::vector<std::uint64_t> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<ClusterId> dense(sorted.size(), ClusterId(-1));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto pos = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), labels[i]) - sorted.begin());
      if (dense[pos] == ClusterId(-1)) {
        dense[pos] = static_cast<ClusterId>(c.sizes.size());
        c.sizes.push_back(0);
      }
      c.assignment[i] = dense[pos];
      ++c.sizes[dense[pos]];
    }
    return c;
  }
};

// Q = sum_c [ e_c / m - gamma (deg_c / 2m)^2 ].
inline double modularity(const Graph& g, const Clustering& c, double resolution) {
  if (c.num_nodes() != g.num_nodes()) {
    throw ParameterError("clustering covers " + std::to_string(c.num_nodes()) +
                         " nodes, graph has " + std::to_string(g.num_nodes()));
  }
  double m = static_cast<double>(g.num_edges());
  std::vector<double> internal(c.num_clusters(), 0.0), degree(c.num_clusters(), 0.0);
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    ClusterId ci = c.assignment[i];
    degree[ci] += static_cast<double>(g.degree(i));
    for (NodeId j : g.neighbors(i)) {
      if (i < j && c.assignment[j] == ci) internal[ci] += 1.0;
    }
  }
  double q = 0.0;
  for (std::size_t k = 0; k < c.num_clusters(); ++k) {
    double share = degree[k] / (2.0 * m);
    q += internal[k] / m - resolution * share * share;
  }
  return q;
}

namespace detail {

// Weighted graph for Louvain levels. self_[i] is twice the internal weight.
struct WeightedGraph {
  std::vector<std::size_t> ptr;
  std::vector<std::uint32_t> nbr;
  std::vector<double> w;
  std::vector<double> self;
  std::vector<double> strength;  // sum_j W_ij including self
  double total = 0.0;            // 2m

  std::uint32_t size() const { return static_cast<std::uint32_t>(self.size()); }
};

inline WeightedGraph to_weighted(const Graph& g) {
  WeightedGraph wg;
  auto offs = g.offsets();
  wg.ptr.assign(offs.begin(), offs.end());
  wg.nbr.assign(g.adjacency().begin(), g.adjacency().end());
  wg.w.assign(wg.nbr.size(), 1.0);
  wg.self.assign(g.num_nodes(), 0.0);
  wg.strength.resize(g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) wg.strength[i] = static_cast<double>(g.degree(i));
  wg.total = static_cast<double>(wg.nbr.size());
  return wg;
}

// One local-moving phase. Returns true if any node moved.
inline bool local_moving(const WeightedGraph& wg, double gamma, Philox4x32& rng,
                         std::vector<std::uint32_t>& community) {
  std::uint32_t n = wg.size();
  std::vector<double> tot(n, 0.0);
  for (std::uint32_t i = 0; i < n; ++i) tot[community[i]] += wg.strength[i];

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  for (std::uint32_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  std::vector<double> link(n, 0.0);
  std::vector<char> mark(n, 0);
  std::vector<std::uint32_t> touched;
  const double two_m = wg.total;
  constexpr double kEps = 1e-12;
  bool any = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::uint32_t i : order) {
      std::uint32_t own = community[i];
      double ki = wg.strength[i];
      touched.clear();
      for (auto k = wg.ptr[i]; k < wg.ptr[i + 1]; ++k) {
        std::uint32_t c = community[wg.nbr[k]];
        if (!mark[c]) {
          mark[c] = 1;
          touched.push_back(c);
        }
        link[c] += wg.w[k];
      }
      tot[own] -= ki;
      auto gain = [&](std::uint32_t c) { return link[c] - gamma * tot[c] * ki / two_m; };
      std::uint32_t best = own;
      double best_gain = gain(own);
      double own_gain = best_gain;
      for (std::uint32_t c : touched) {
        if (c == own) continue;
        double gc = gain(c);
        if (gc > own_gain + kEps &&
            (best == own || gc > best_gain + kEps || (gc >= best_gain - kEps && c < best))) {
          best = c;
          best_gain = gc;
        }
      }
      tot[best] += ki;
      if (best != own) {
        community[i] = best;
        moved = true;
        any = true;
      }
      for (std::uint32_t c : touched) {
        link[c] = 0.0;
        mark[c] = 0;
      }
      link[own] = 0.0;
    }
  }
  return any;
}

// Renumbers community ids densely in order of first appearance.
inline std::uint32_t renumber(std::vector<std::uint32_t>& community) {
  std::vector<std::uint32_t> map(community.size(), std::uint32_t(-1));
  std::uint32_t next = 0;
  for (auto& c : community) {
    if (map[c] == std::uint32_t(-1)) map[c] = next++;
    c = map[c];
  }
  return next;
}

inline WeightedGraph aggregate(const WeightedGraph& wg, const std::vector<std::uint32_t>& community,
                               std::uint32_t k) {
  WeightedGraph out;
  out.self.assign(k, 0.0);
  out.strength.assign(k, 0.0);
  out.total = wg.total;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(k);
  for (std::uint32_t i = 0; i < wg.size(); ++i) {
    std::uint32_t ci = community[i];
    out.self[ci] += wg.self[i];
    out.strength[ci] += wg.strength[i];
    for (auto e = wg.ptr[i]; e < wg.ptr[i + 1]; ++e) {
      std::uint32_t cj = community[wg.nbr[e]];
      if (cj == ci) {
        out.self[ci] += wg.w[e];
      } else {
        rows[ci].emplace_back(cj, wg.w[e]);
      }
    }
  }
  out.ptr.assign(static_cast<std::size_t>(k) + 1, 0);
  for (std::uint32_t c = 0; c < k; ++c) {
    auto& row = rows[c];
    std::sort(row.begin(), row.end());
    for (std::size_t a = 0; a < row.size();) {
      std::size_t b = a;
      double sum = 0.0;
      for (; b < row.size() && row[b].first == row[a].first; ++b) sum += row[b].second;
      out.nbr.push_back(row[a].first);
      out.w.push_back(sum);
      a = b;
    }
    out.ptr[c + 1] = out.nbr.size();
    std::vector<std::pair<std::uint32_t, double>>().swap(row);
  }
  return out;
}

}  // namespace detail

// Multi-level Louvain maximizing modularity at `resolution`. Node visiting
// order is shuffled from `seed`; ties in gain go to the lowest community id.
// Stops when no single-node move improves modularity. Deterministic in
// (g, resolution, seed).
inline Clustering louvain(const Graph& g, double resolution, std::uint64_t seed) {
  if (!(resolution > 0.0)) throw ParameterError("resolution must be positive");
  Philox4x32 rng(seed, stream::at(stream::kLouvain, 0));
  const auto base = detail::to_weighted(g);
  auto wg = base;
  std::vector<std::uint32_t> node_to_comm(g.num_nodes());
  std::iota(node_to_comm.begin(), node_to_comm.end(), 0u);

  for (;;) {
    while (true) {
      std::vector<std::uint32_t> community(wg.size());
      std::iota(community.begin(), community.end(), 0u);
      bool moved = detail::local_moving(wg, resolution, rng, community);
      std::uint32_t k = detail::renumber(community);
      for (auto& c : node_to_comm) c = community[c];
      if (!moved || k == wg.size()) break;
      wg = detail::aggregate(wg, community, k);
    }
    // Aggregated moves can leave single nodes misplaced; refine on the
    // original graph and go around again until nothing moves.
    if (!detail::local_moving(base, resolution, rng, node_to_comm)) break;
    std::uint32_t k = detail::renumber(node_to_comm);
    wg = detail::aggregate(base, node_to_comm, k);
  }

  std::vector<std::uint64_t> labels(node_to_comm.begin(), node_to_comm.end());
  return Clustering::from_labels(labels, resolution, seed);
}

// "node_id,cluster_id" rows with a header.
inline void write_clustering_csv(const Clustering& c, std::ostream& out) {
  out << "node_id,cluster_id\n";
  for (std::size_t i = 0; i < c.assignment.size(); ++i) out << i << ',' << c.assignment[i] << '\n';
}

}  // namespace rampmerge
