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
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rampmerge/clustering.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/graph.hpp"
#include "rampmerge/rng.hpp"

namespace rampmerge {

enum class Level { kUnit, kCluster };
enum class Scheme { kBernoulli, kComplete };
enum class Temporal { kIndependent, kRollout, kRepeated };

inline Level parse_level(const std::string& s) {
  if (s == "unit") return Level::kUnit;
  if (s == "cluster") return Level::kCluster;
  throw ParameterError("unknown level '" + s + "'");
}
inline Scheme parse_scheme(const std::string& s) {
  if (s == "bernoulli") return Scheme::kBernoulli;
  if (s == "complete") return Scheme::kComplete;
  throw ParameterError("unknown scheme '" + s + "'");
}
inline Temporal parse_temporal(const std::string& s) {
  if (s == "independent") return Temporal::kIndependent;
  if (s == "rollout") return Temporal::kRollout;
  if (s == "repeated") return Temporal::kRepeated;
  throw ParameterError("unknown temporal mode '" + s + "'");
}
inline const char* to_string(Level v) { return v == Level::kUnit ? "unit" : "cluster"; }
inline const char* to_string(Scheme v) { return v == Scheme::kComplete ? "complete" : "bernoulli"; }
inline const char* to_string(Temporal v) {
  switch (v) {
    case Temporal::kIndependent: return "independent";
    case Temporal::kRollout: return "rollout";
    case Temporal::kRepeated: return "repeated";
  }
  return "?";
}

// d = round(c n), halves rounded up.
inline std::size_t treated_count(double c, std::size_t n) {
  return static_cast<std::size_t>(std::floor(c * static_cast<double>(n) + 0.5));
}

// A T-step randomization: who is randomized, how, and how steps couple.
struct DesignPlan {
  Level level = Level::kUnit;
  Scheme scheme = Scheme::kComplete;
  Temporal temporal = Temporal::kRollout;
  std::vector<double> proportions;
  std::shared_ptr<const Clustering> clustering;

  std::size_t steps() const { return proportions.size(); }

  void validate(std::size_t n) const {
    if (proportions.empty()) throw ParameterError("design needs at least one proportion");
    for (double c : proportions) {
      if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("proportions must lie in [0, 1]");
    }
    if (temporal == Temporal::kRollout) {
      for (std::size_t t = 1; t < proportions.size(); ++t) {
        if (!(proportions[t] > proportions[t - 1])) {
          throw ParameterError("rollout proportions must be strictly increasing");
        }
      }
    }
    if (temporal == Temporal::kRepeated) {
      for (double c : proportions) {
        if (c != proportions.front()) throw ParameterError("repeated design needs equal proportions");
      }
    }
    if (level == Level::kCluster) {
      if (!clustering) throw ConfigError("design.clustering", "cluster-level plan needs a clustering");
      if (clustering->num_nodes() != n) {
        throw ParameterError("clustering covers " + std::to_string(clustering->num_nodes()) +
                             " nodes, design has " + std::to_string(n));
      }
    }
  }

  // The last `t` steps, which is how merged training sets are formed.
  DesignPlan suffix(std::size_t t) const {
    DesignPlan p = *this;
    p.proportions.assign(proportions.end() - static_cast<std::ptrdiff_t>(t), proportions.end());
    return p;
  }
};

// Realized T x n binary treatment matrix.
struct AssignmentPanel {
  std::size_t n = 0;
  std::vector<std::uint8_t> z;              // row-major, step-by-step
  std::vector<std::size_t> realized_counts;  // treated units per step
  std::vector<std::size_t> target_counts;    // round(c_t n)
  std::uint64_t seed = 0;

  std::size_t steps() const { return realized_counts.size(); }
  std::span<const std::uint8_t> step(std::size_t t) const { return {z.data() + t * n, n}; }
  std::span<std::uint8_t> step(std::size_t t) { return {z.data() + t * n, n}; }
};

namespace detail {

inline std::vector<std::uint32_t> random_permutation(std::size_t k, Philox4x32& rng) {
  std::vector<std::uint32_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

// Units or clusters treated at proportion c, given one draw of randomness.
struct DrawState {
  std::vector<std::uint32_t> perm;
  std::vector<double> uniforms;
};

inline DrawState fresh_draw(const DesignPlan& plan, std::size_t units, Philox4x32& rng) {
  DrawState s;
  if (plan.scheme == Scheme::kComplete) {
    s.perm = random_permutation(units, rng);
  } else {
    s.uniforms.resize(units);
    for (auto& u : s.uniforms) u = rng.uniform();
  }
  return s;
}

inline void fill_step(const DesignPlan& plan, const DrawState& draw, double c, std::size_t n,
                      std::span<std::uint8_t> z) {
  std::fill(z.begin(), z.end(), std::uint8_t{0});
  std::size_t target = treated_count(c, n);
  if (plan.level == Level::kUnit) {
    if (plan.scheme == Scheme::kComplete) {
      for (std::size_t k = 0; k < target; ++k) z[draw.perm[k]] = 1;
    } else {
      for (std::size_t i = 0; i < n; ++i) z[i] = draw.uniforms[i] < c ? 1 : 0;
    }
    return;
  }
  const Clustering& cl = *plan.clustering;
  std::vector<std::uint8_t> treated(cl.num_clusters(), 0);
  if (plan.scheme == Scheme::kComplete) {
    std::size_t covered = 0;
    for (std::size_t k = 0; k < draw.perm.size() && covered < target; ++k) {
      treated[draw.perm[k]] = 1;
      covered += cl.sizes[draw.perm[k]];
    }
  } else {
    for (std::size_t k = 0; k < treated.size(); ++k) treated[k] = draw.uniforms[k] < c ? 1 : 0;
  }
  for (std::size_t i = 0; i < n; ++i) z[i] = treated[cl.assignment[i]];
}

}  // namespace detail

// Draws a panel. Complete+rollout treats growing prefixes of one permutation;
// Bernoulli+rollout thresholds one uniform per unit (or cluster) at c_t;
// independent and repeated plans redraw each step from its own stream.
// Cluster-level complete designs add whole clusters in permutation order until
// at least round(c_t n) units are covered.
inline AssignmentPanel assign(const DesignPlan& plan, std::size_t n, std::uint64_t seed) {
  plan.validate(n);
  AssignmentPanel panel;
  panel.n = n;
  panel.seed = seed;
  std::size_t T = plan.steps();
  panel.z.assign(T * n, 0);
  panel.realized_counts.resize(T);
  panel.target_counts.resize(T);
  std::size_t units = plan.level == Level::kUnit ? n : plan.clustering->num_clusters();

  detail::DrawState shared;
  if (plan.temporal == Temporal::kRollout) {
    Philox4x32 rng(seed, stream::at(stream::kAssignment, 0));
    shared = detail::fresh_draw(plan, units, rng);
  }
  for (std::size_t t = 0; t < T; ++t) {
    auto row = panel.step(t);
    if (plan.temporal == Temporal::kRollout) {
      detail::fill_step(plan, shared, plan.proportions[t], n, row);
    } else {
      Philox4x32 rng(seed, stream::at(stream::kAssignment, t + 1));
      detail::fill_step(plan, detail::fresh_draw(plan, units, rng), plan.proportions[t], n, row);
    }
    panel.realized_counts[t] = static_cast<std::size_t>(std::count(row.begin(), row.end(), 1));
    panel.target_counts[t] = treated_count(plan.proportions[t], n);
  }
  return panel;
}

// "step,unit,z" rows with a header; steps are 1-based.
inline void write_panel_csv(const AssignmentPanel& p, std::ostream& out) {
  out << "step,unit,z\n";
  for (std::size_t t = 0; t < p.steps(); ++t) {
    auto row = p.step(t);
    for (std::size_t i = 0; i < p.n; ++i) out << t + 1 << ',' << i << ',' << int(row[i]) << '\n';
  }
}

// e_i = (sum_{j in N(i)} z_j) / deg_i
inline std::vector<double> exposure_onehop(const Graph& g, std::span<const std::uint8_t> z) {
  std::vector<double> e(g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    std::size_t treated = 0;
    for (NodeId j : g.neighbors(i)) treated += z[j];
    e[i] = static_cast<double>(treated) / static_cast<double>(g.degree(i));
  }
  return e;
}

}  // namespace rampmerge
