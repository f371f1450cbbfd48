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
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "rampmerge/errors.hpp"
#include "rampmerge/graph.hpp"

namespace rampmerge {

struct Triplet {
  NodeId row;
  NodeId col;
  double value;
};

// Sparse n x n interference weights B in CSR form with B_ii = 0. Row sums,
// column sums and the grand total are cached at construction.
class InterferenceMatrix {
 public:
  InterferenceMatrix() = default;

  // Duplicate (row, col) entries are summed. Nonzero diagonal entries are
  // rejected.
  static InterferenceMatrix from_triplets(NodeId n, std::vector<Triplet> entries) {
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    InterferenceMatrix m;
    m.n_ = n;
    m.row_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (std::size_t k = 0; k < entries.size();) {
      const auto& e = entries[k];
      if (e.row >= n || e.col >= n) throw InvariantError("entry out of range");
      double v = 0.0;
      std::size_t k2 = k;
      for (; k2 < entries.size() && entries[k2].row == e.row && entries[k2].col == e.col; ++k2) {
        v += entries[k2].value;
      }
      if (e.row == e.col && v != 0.0) {
        throw InvariantError("nonzero diagonal entry at " + std::to_string(e.row));
      }
      if (v != 0.0) {
        m.cols_.push_back(e.col);
        m.vals_.push_back(v);
        ++m.row_ptr_[e.row + 1];
      }
      k = k2;
    }
    for (NodeId i = 0; i < n; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    m.finish();
    return m;
  }

  // Takes ownership of CSR arrays with sorted, unique columns per row.
  static InterferenceMatrix from_csr(NodeId n, std::vector<std::size_t> row_ptr,
                                     std::vector<NodeId> cols, std::vector<double> vals) {
    InterferenceMatrix m;
    m.n_ = n;
    m.row_ptr_ = std::move(row_ptr);
    m.cols_ = std::move(cols);
    m.vals_ = std::move(vals);
    for (NodeId i = 0; i < n; ++i) {
      for (auto k = m.row_ptr_[i]; k < m.row_ptr_[i + 1]; ++k) {
        if (m.cols_[k] == i && m.vals_[k] != 0.0) {
          throw InvariantError("nonzero diagonal entry at " + std::to_string(i));
        }
      }
    }
    m.finish();
    return m;
  }

  NodeId size() const { return n_; }
  std::size_t nonzeros() const { return vals_.size(); }

  std::span<const NodeId> row_cols(NodeId i) const {
    return {cols_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> row_vals(NodeId i) const {
    return {vals_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  double at(NodeId i, NodeId j) const {
    auto c = row_cols(i);
    auto it = std::lower_bound(c.begin(), c.end(), j);
    if (it == c.end() || *it != j) return 0.0;
    return vals_[row_ptr_[i] + static_cast<std::size_t>(it - c.begin())];
  }

  std::span<const double> row_sums() const { return row_sums_; }
  std::span<const double> col_sums() const { return col_sums_; }
  double total_sum() const { return total_; }

  // out = B z
  void apply(std::span<const double> z, std::span<double> out) const {
    for (NodeId i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += vals_[k] * z[cols_[k]];
      out[i] = acc;
    }
  }

  InterferenceMatrix transpose() const {
    std::vector<std::size_t> ptr(static_cast<std::size_t>(n_) + 1, 0);
    for (NodeId c : cols_) ++ptr[c + 1];
    for (NodeId i = 0; i < n_; ++i) ptr[i + 1] += ptr[i];
    std::vector<NodeId> cols(cols_.size());
    std::vector<double> vals(vals_.size());
    std::vector<std::size_t> cursor(ptr.begin(), ptr.end() - 1);
    for (NodeId i = 0; i < n_; ++i) {
      for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        auto dst = cursor[cols_[k]]++;
        cols[dst] = i;
        vals[dst] = vals_[k];
      }
    }
    return from_csr(n_, std::move(ptr), std::move(cols), std::move(vals));
  }

 private:
  void finish() {
    row_sums_.assign(n_, 0.0);
    col_sums_.assign(n_, 0.0);
    total_ = 0.0;
    for (NodeId i = 0; i < n_; ++i) {
      for (auto k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        row_sums_[i] += vals_[k];
        col_sums_[cols_[k]] += vals_[k];
      }
      total_ += row_sums_[i];
    }
  }

  NodeId n_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<NodeId> cols_;
  std::vector<double> vals_;
  std::vector<double> row_sums_;
  std::vector<double> col_sums_;
  double total_ = 0.0;
};

// B = r D^{-1} A.
inline InterferenceMatrix build_onehop_B(const Graph& g, double r) {
  NodeId n = g.num_nodes();
  if (r == 0.0) return InterferenceMatrix::from_csr(n, std::vector<std::size_t>(n + 1, 0), {}, {});
  auto offs = g.offsets();
  std::vector<std::size_t> ptr(offs.begin(), offs.end());
  std::vector<NodeId> cols(g.adjacency().begin(), g.adjacency().end());
  std::vector<double> vals(cols.size());
  for (NodeId i = 0; i < n; ++i) {
    double w = r / static_cast<double>(g.degree(i));
    std::fill(vals.begin() + static_cast<std::ptrdiff_t>(ptr[i]),
              vals.begin() + static_cast<std::ptrdiff_t>(ptr[i + 1]), w);
  }
  return InterferenceMatrix::from_csr(n, std::move(ptr), std::move(cols), std::move(vals));
}

inline void check_multihop_weights(std::span<const double> r) {
  if (r.empty()) throw ParameterError("multihop weights must be nonempty");
  for (std::size_t m = 0; m < r.size(); ++m) {
    if (!(r[m] > 0.0)) throw ParameterError("multihop weights must be positive");
    if (m > 0 && r[m] > r[m - 1]) throw ParameterError("multihop weights must be nonincreasing");
  }
}

// Default cap on stored nonzeros of any power (P^m) during densification.
inline constexpr std::size_t kDefaultMultihopBudget = std::size_t{40'000'000};

// B = (11' - I) .* sum_m r_m (D^{-1}A)^m by explicit sparse-sparse products.
// Throws ResourceError when a power exceeds `max_nonzeros`.
inline InterferenceMatrix build_multihop_B(const Graph& g, std::span<const double> r,
                                           std::size_t max_nonzeros = kDefaultMultihopBudget) {
  check_multihop_weights(r);
  NodeId n = g.num_nodes();
  auto P = build_onehop_B(g, 1.0);

  // power holds P^m row by row; sum accumulates r_m P^m.
  std::vector<std::size_t> pow_ptr(P.size() + 1, 0);
  std::vector<NodeId> pow_cols;
  std::vector<double> pow_vals;
  for (NodeId i = 0; i < n; ++i) {
    auto c = P.row_cols(i);
    auto v = P.row_vals(i);
    pow_cols.insert(pow_cols.end(), c.begin(), c.end());
    pow_vals.insert(pow_vals.end(), v.begin(), v.end());
    pow_ptr[i + 1] = pow_cols.size();
  }
  std::vector<std::vector<std::pair<NodeId, double>>> acc_rows(n);
  auto add_power = [&](double weight) {
    std::vector<double> dense(n, 0.0);
    std::vector<char> mark(n, 0);
    std::vector<NodeId> touched;
    for (NodeId i = 0; i < n; ++i) {
      touched.clear();
      for (auto [c, v] : acc_rows[i]) {
        dense[c] = v;
        mark[c] = 1;
        touched.push_back(c);
      }
      for (auto k = pow_ptr[i]; k < pow_ptr[i + 1]; ++k) {
        NodeId c = pow_cols[k];
        if (!mark[c]) {
          mark[c] = 1;
          touched.push_back(c);
        }
        dense[c] += weight * pow_vals[k];
      }
      std::sort(touched.begin(), touched.end());
      acc_rows[i].clear();
      for (NodeId c : touched) {
        acc_rows[i].emplace_back(c, dense[c]);
        dense[c] = 0.0;
        mark[c] = 0;
      }
    }
  };
  add_power(r[0]);

  for (std::size_t m = 1; m < r.size(); ++m) {
    std::vector<std::size_t> next_ptr(static_cast<std::size_t>(n) + 1, 0);
    std::vector<NodeId> next_cols;
    std::vector<double> next_vals;
    std::vector<double> dense(n, 0.0);
    std::vector<char> mark(n, 0);
    std::vector<NodeId> touched;
    for (NodeId i = 0; i < n; ++i) {
      touched.clear();
      for (auto k = pow_ptr[i]; k < pow_ptr[i + 1]; ++k) {
        NodeId mid = pow_cols[k];
        double a = pow_vals[k];
        auto c = P.row_cols(mid);
        auto v = P.row_vals(mid);
        for (std::size_t q = 0; q < c.size(); ++q) {
          if (!mark[c[q]]) {
            mark[c[q]] = 1;
            touched.push_back(c[q]);
          }
          dense[c[q]] += a * v[q];
        }
      }
      if (next_cols.size() + touched.size() > max_nonzeros) {
        throw ResourceError("multihop densification at power " + std::to_string(m + 1) +
                            " exceeds " + std::to_string(max_nonzeros) + " nonzeros");
      }
      std::sort(touched.begin(), touched.end());
      for (NodeId c : touched) {
        next_cols.push_back(c);
        next_vals.push_back(dense[c]);
        dense[c] = 0.0;
        mark[c] = 0;
      }
      next_ptr[i + 1] = next_cols.size();
    }
    pow_ptr = std::move(next_ptr);
    pow_cols = std::move(next_cols);
    pow_vals = std::move(next_vals);
    add_power(r[m]);
  }

  std::vector<std::size_t> ptr(static_cast<std::size_t>(n) + 1, 0);
  std::vector<NodeId> cols;
  std::vector<double> vals;
  for (NodeId i = 0; i < n; ++i) {
    for (auto [c, v] : acc_rows[i]) {
      if (c == i) continue;  // remove closed walks
      cols.push_back(c);
      vals.push_back(v);
    }
    ptr[i + 1] = cols.size();
    std::vector<std::pair<NodeId, double>>().swap(acc_rows[i]);
  }
  return InterferenceMatrix::from_csr(n, std::move(ptr), std::move(cols), std::move(vals));
}

// Matrix-free form of the multihop B: Bz = sum_m r_m P^m z - diag .* z with
// P = D^{-1}A. The diagonal of P^m equals that of S^m for the symmetric
// S = D^{-1/2} A D^{-1/2}, computed per node as <S^a e_i, S^b e_i>.
class MultihopOperator {
 public:
  MultihopOperator(std::shared_ptr<const Graph> graph, std::vector<double> r)
      : graph_(std::move(graph)), r_(std::move(r)) {
    check_multihop_weights(r_);
    const Graph& g = *graph_;
    NodeId n = g.num_nodes();
    diag_.assign(n, 0.0);
    inv_sqrt_deg_.resize(n);
    for (NodeId i = 0; i < n; ++i) inv_sqrt_deg_[i] = 1.0 / std::sqrt(double(g.degree(i)));
    if (r_.size() >= 2) compute_diagonal();

    double rsum = 0.0;
    for (double w : r_) rsum += w;
    row_sums_.resize(n);
    for (NodeId i = 0; i < n; ++i) row_sums_[i] = rsum - diag_[i];

    // Column sums: sum_m r_m ((P')^m 1) - diag.
    col_sums_.assign(n, 0.0);
    std::vector<double> v(n, 1.0), next(n);
    for (double w : r_) {
      for (NodeId j = 0; j < n; ++j) {
        double acc = 0.0;
        for (NodeId i : g.neighbors(j)) acc += v[i] / double(g.degree(i));
        next[j] = acc;
      }
      v.swap(next);
      for (NodeId j = 0; j < n; ++j) col_sums_[j] += w * v[j];
    }
    total_ = 0.0;
    for (NodeId j = 0; j < n; ++j) {
      col_sums_[j] -= diag_[j];
      total_ += row_sums_[j];
    }
  }

  NodeId size() const { return graph_->num_nodes(); }
  const Graph& graph() const { return *graph_; }
  std::span<const double> weights() const { return r_; }
  std::span<const double> diagonal() const { return diag_; }
  std::span<const double> row_sums() const { return row_sums_; }
  std::span<const double> col_sums() const { return col_sums_; }
  double total_sum() const { return total_; }

  void apply(std::span<const double> z, std::span<double> out) const {
    const Graph& g = *graph_;
    NodeId n = g.num_nodes();
    std::vector<double> v(z.begin(), z.end()), next(n);
    std::fill(out.begin(), out.end(), 0.0);
    for (double w : r_) {
      for (NodeId i = 0; i < n; ++i) {
        double acc = 0.0;
        for (NodeId j : g.neighbors(i)) acc += v[j];
        next[i] = acc / double(g.degree(i));
      }
      v.swap(next);
      for (NodeId i = 0; i < n; ++i) out[i] += w * v[i];
    }
    for (NodeId i = 0; i < n; ++i) out[i] -= diag_[i] * z[i];
  }

 private:
  void compute_diagonal() {
    const Graph& g = *graph_;
    NodeId n = g.num_nodes();
    std::size_t max_power = r_.size();
    std::vector<double> cur(n, 0.0), nxt(n, 0.0);
    std::vector<char> mark_nxt(n, 0);
    std::vector<NodeId> touched_nxt;
    // powers[p] holds the sparse vector S^p e_i.
    std::vector<std::vector<std::pair<NodeId, double>>> powers(max_power / 2 + 2);
    for (NodeId i = 0; i < n; ++i) {
      powers[0] = {{i, 1.0}};
      std::size_t need = (max_power + 1) / 2;
      for (std::size_t p = 1; p <= need; ++p) {
        touched_nxt.clear();
        for (auto [node, val] : powers[p - 1]) {
          double scaled = val * inv_sqrt_deg_[node];
          for (NodeId nb : g.neighbors(node)) {
            if (!mark_nxt[nb]) {
              mark_nxt[nb] = 1;
              touched_nxt.push_back(nb);
            }
            nxt[nb] += scaled * inv_sqrt_deg_[nb];
          }
        }
        std::sort(touched_nxt.begin(), touched_nxt.end());
        powers[p].clear();
        for (NodeId t : touched_nxt) {
          powers[p].emplace_back(t, nxt[t]);
          nxt[t] = 0.0;
          mark_nxt[t] = 0;
        }
      }
      double d = 0.0;
      for (std::size_t m = 2; m <= max_power; ++m) {
        std::size_t a = m / 2, b = m - a;
        // <S^a e_i, S^b e_i> via a dense scatter of S^b e_i.
        for (auto [node, val] : powers[b]) cur[node] = val;
        double dot = 0.0;
        for (auto [node, val] : powers[a]) dot += val * cur[node];
        for (auto [node, val] : powers[b]) cur[node] = 0.0;
        d += r_[m - 1] * dot;
      }
      diag_[i] = d;
    }
  }

  std::shared_ptr<const Graph> graph_;
  std::vector<double> r_;
  std::vector<double> diag_;
  std::vector<double> inv_sqrt_deg_;
  std::vector<double> row_sums_;
  std::vector<double> col_sums_;
  double total_ = 0.0;
};

// Either an explicit sparse B or the matrix-free multihop operator.
using Interference = std::variant<InterferenceMatrix, MultihopOperator>;

inline void apply(const Interference& b, std::span<const double> z, std::span<double> out) {
  std::visit([&](const auto& m) { m.apply(z, out); }, b);
}
inline double total_sum(const Interference& b) {
  return std::visit([](const auto& m) { return m.total_sum(); }, b);
}
inline NodeId size(const Interference& b) {
  return std::visit([](const auto& m) { return m.size(); }, b);
}

}  // namespace rampmerge
