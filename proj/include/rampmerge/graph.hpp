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
#include <fstream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rampmerge/errors.hpp"
#include "rampmerge/rng.hpp"

namespace rampmerge {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

// Immutable simple undirected graph in CSR form. Every node has at least one
// neighbor; neighbor lists are sorted.
class Graph {
 public:
  Graph() = default;

  // Builds from an edge list over nodes 0..n-1. Duplicate and reversed pairs
  // collapse. Throws InvariantError on self-loops, out-of-range ids or
  // isolated nodes. `labels` (optional, size n) records the external id of
  // each node.
  static Graph from_edges(NodeId n, std::span<const Edge> edges,
                          std::vector<std::int64_t> labels = {}) {
    if (n == 0) throw InvariantError("graph must have at least one node");
    std::vector<std::uint64_t> keys;
    keys.reserve(edges.size());
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) {
        throw InvariantError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                             ") out of range for n=" + std::to_string(n));
      }
      if (u == v) throw InvariantError("self-loop at node " + std::to_string(u));
      if (u > v) std::swap(u, v);
      keys.push_back((static_cast<std::uint64_t>(u) << 32) | v);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    Graph g;
    g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (auto key : keys) {
      ++g.offsets_[(key >> 32) + 1];
      ++g.offsets_[(key & 0xffffffffu) + 1];
    }
    for (NodeId i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
    g.adjacency_.resize(g.offsets_[n]);
    std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
    for (auto key : keys) {
      auto u = static_cast<NodeId>(key >> 32);
      auto v = static_cast<NodeId>(key & 0xffffffffu);
      g.adjacency_[cursor[u]++] = v;
      g.adjacency_[cursor[v]++] = u;
    }
    for (NodeId i = 0; i < n; ++i) {
      if (g.offsets_[i] == g.offsets_[i + 1]) {
        std::string name = labels.empty() ? std::to_string(i) : std::to_string(labels[i]);
        throw InvariantError("isolated node " + name);
      }
      std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i]),
                g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[i + 1]));
    }
    if (labels.empty()) {
      labels.resize(n);
      std::iota(labels.begin(), labels.end(), std::int64_t{0});
    } else if (labels.size() != n) {
      throw InvariantError("label count does not match node count");
    }
    g.labels_ = std::move(labels);
    return g;
  }

  NodeId num_nodes() const { return static_cast<NodeId>(labels_.size()); }
  std::size_t num_edges() const { return adjacency_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId i) const {
    return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }
  double average_degree() const {
    return static_cast<double>(adjacency_.size()) / static_cast<double>(num_nodes());
  }

  bool has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  // Concatenated neighbor lists; node j appears deg_j times.
  std::span<const NodeId> adjacency() const { return adjacency_; }
  std::span<const std::size_t> offsets() const { return offsets_; }

  // External id of each node as read from the source file.
  std::span<const std::int64_t> labels() const { return labels_; }

  // Edges with u < v in lexicographic order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < num_nodes(); ++u) {
      for (NodeId v : neighbors(u)) {
        if (u < v) out.emplace_back(u, v);
      }
    }
    return out;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> adjacency_;
  std::vector<std::int64_t> labels_;
};

enum class EdgeListFormat { kPlain, kMatrixMarket };

namespace detail {

inline bool parse_int(const std::string& token, std::int64_t& out) {
  if (token.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(token, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == token.size();
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  std::string t;
  while (in >> t) tokens.push_back(t);
  return tokens;
}

}  // namespace detail

// Reads an edge list. Node ids are remapped to 0..n-1 in order of first
// appearance; the original ids are kept as labels.
//
// kPlain: one "u v" integer pair per line, blank lines ignored.
// kMatrixMarket: lines starting with '%' are comments; the first data line
// may be a "rows cols entries" header, in which case every id in 1..rows
// must occur. Ids are 1-indexed and a trailing weight column is ignored.
inline Graph read_edge_list(std::istream& in, EdgeListFormat format) {
  std::unordered_map<std::int64_t, NodeId> remap;
  std::vector<std::int64_t> labels;
  std::vector<Edge> edges;
  std::int64_t declared_nodes = -1;
  bool seen_data = false;

  auto intern = [&](std::int64_t id) {
    auto [it, inserted] = remap.try_emplace(id, static_cast<NodeId>(labels.size()));
    if (inserted) labels.push_back(id);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (format == EdgeListFormat::kMatrixMarket && !line.empty() && line[0] == '%') continue;
    auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;

    std::int64_t vals[3] = {0, 0, 0};
    if (format == EdgeListFormat::kMatrixMarket && !seen_data && tokens.size() == 3) {
      seen_data = true;
      for (int k = 0; k < 3; ++k) {
        if (!detail::parse_int(tokens[k], vals[k])) {
          throw ParseError("malformed dimensions line '" + line + "'", line_no);
        }
      }
      if (vals[0] != vals[1] || vals[0] <= 0) {
        throw ParseError("dimensions line must declare a square matrix", line_no);
      }
      declared_nodes = vals[0];
      continue;
    }
    seen_data = true;

    bool ok = format == EdgeListFormat::kPlain ? tokens.size() == 2
                                               : (tokens.size() == 2 || tokens.size() == 3);
    ok = ok && detail::parse_int(tokens[0], vals[0]) && detail::parse_int(tokens[1], vals[1]);
    if (!ok) throw ParseError("expected an integer pair, got '" + line + "'", line_no);
    if (format == EdgeListFormat::kMatrixMarket) {
      if (vals[0] < 1 || vals[1] < 1) throw ParseError("ids are 1-indexed", line_no);
      if (declared_nodes > 0 && (vals[0] > declared_nodes || vals[1] > declared_nodes)) {
        throw ParseError("id exceeds declared dimension", line_no);
      }
    }
    if (vals[0] == vals[1]) {
      throw ParseError("self-loop on node " + std::to_string(vals[0]), line_no);
    }
    NodeId u = intern(vals[0]);
    NodeId v = intern(vals[1]);
    edges.emplace_back(u, v);
  }

  if (declared_nodes > 0 && static_cast<std::int64_t>(labels.size()) < declared_nodes) {
    for (std::int64_t id = 1; id <= declared_nodes; ++id) {
      if (!remap.contains(id)) throw InvariantError("isolated node " + std::to_string(id));
    }
  }
  if (labels.empty()) throw ParseError("edge list contains no edges");
  auto n = static_cast<NodeId>(labels.size());
  return Graph::from_edges(n, edges, std::move(labels));
}

inline Graph load_edge_list(const std::string& path, EdgeListFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open edge list '" + path + "'");
  return read_edge_list(in, format);
}

// Picks the format from the extension: ".mtx" is MatrixMarket, else plain.
inline EdgeListFormat guess_format(const std::string& path) {
  auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".mtx") return EdgeListFormat::kMatrixMarket;
  return EdgeListFormat::kPlain;
}

// "u v" per line, 0-indexed, u < v, sorted.
inline void write_edge_list(const Graph& g, std::ostream& out, char sep = ' ') {
  for (auto [u, v] : g.edges()) out << u << sep << v << '\n';
}

enum class GraphKind { kRing, kPath, kComplete, kStar };

inline Graph synthetic_graph(GraphKind kind, NodeId n) {
  std::vector<Edge> edges;
  switch (kind) {
    case GraphKind::kRing:
      if (n < 3) throw ParameterError("ring needs n >= 3");
      for (NodeId i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
      break;
    case GraphKind::kPath:
      if (n < 2) throw ParameterError("path needs n >= 2");
      for (NodeId i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      break;
    case GraphKind::kComplete:
      if (n < 3) throw ParameterError("complete graph needs n >= 3");
      for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      }
      break;
    case GraphKind::kStar:
      if (n < 2) throw ParameterError("star needs n >= 2");
      for (NodeId i = 1; i < n; ++i) edges.emplace_back(0, i);
      break;
  }
  return Graph::from_edges(n, edges);
}

inline GraphKind parse_graph_kind(const std::string& name) {
  if (name == "ring") return GraphKind::kRing;
  if (name == "path") return GraphKind::kPath;
  if (name == "complete") return GraphKind::kComplete;
  if (name == "star") return GraphKind::kStar;
  throw ParameterError("unknown graph kind '" + name + "'");
}

// The ceil(n/2) highest-degree nodes; ties go to the lower id.
inline std::vector<NodeId> top_half_by_degree(const Graph& g) {
  std::vector<NodeId> order(g.num_nodes());
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return g.degree(a) > g.degree(b); });
  order.resize((static_cast<std::size_t>(g.num_nodes()) + 1) / 2);
  return order;
}

// One pass of preferential-attachment growth. Each node in the top half by
// degree draws `samples` targets with replacement, j chosen with probability
// deg_j / sum_k deg_k under the degrees at the start of the pass. Draws that
// would create a self-loop or repeat an edge (original or added earlier in
// the pass) are discarded.
inline Graph evolve_graph(const Graph& g, std::uint64_t seed, int samples = 5) {
  Philox4x32 rng(seed, stream::at(stream::kEvolution, 0));
  auto endpoints = g.adjacency();
  std::vector<Edge> edges = g.edges();
  std::unordered_set<std::uint64_t> added;
  for (NodeId i : top_half_by_degree(g)) {
    for (int s = 0; s < samples; ++s) {
      NodeId j = endpoints[rng.below(endpoints.size())];
      if (j == i || g.has_edge(i, j)) continue;
      NodeId lo = std::min(i, j), hi = std::max(i, j);
      if (!added.insert((static_cast<std::uint64_t>(lo) << 32) | hi).second) continue;
      edges.emplace_back(lo, hi);
    }
  }
  auto labels = g.labels();
  return Graph::from_edges(g.num_nodes(), edges,
                           std::vector<std::int64_t>(labels.begin(), labels.end()));
}

}  // namespace rampmerge
