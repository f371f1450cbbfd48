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

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rampmerge/design.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/graph.hpp"
#include "rampmerge/interference.hpp"
#include "rampmerge/rng.hpp"

namespace rampmerge {

enum class ModelKind { kGeneralLinear, kOnehopLinear, kMultihopLinear, kMultiplicative, kQuadratic, kSqrt };

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "general-linear") return ModelKind::kGeneralLinear;
  if (s == "onehop-linear" || s == "onehop") return ModelKind::kOnehopLinear;
  if (s == "multihop-linear" || s == "multihop") return ModelKind::kMultihopLinear;
  if (s == "multiplicative") return ModelKind::kMultiplicative;
  if (s == "quadratic") return ModelKind::kQuadratic;
  if (s == "sqrt") return ModelKind::kSqrt;
  throw ParameterError("unknown model kind '" + s + "'");
}

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kGeneralLinear: return "general-linear";
    case ModelKind::kOnehopLinear: return "onehop-linear";
    case ModelKind::kMultihopLinear: return "multihop-linear";
    case ModelKind::kMultiplicative: return "multiplicative";
    case ModelKind::kQuadratic: return "quadratic";
    case ModelKind::kSqrt: return "sqrt";
  }
  return "?";
}

// Potential-outcome generator. `r` is the exposure scale for the one-hop
// family; `hop_weights` are r_1..r_M for the multihop model; `B` is the
// user-supplied matrix of the general linear model.
struct OutcomeModel {
  ModelKind kind = ModelKind::kOnehopLinear;
  double beta0 = 1.0;
  double beta1 = 1.0;
  double r = 1.0;
  double sigma_e = 0.0;
  std::vector<double> hop_weights;
  std::shared_ptr<const InterferenceMatrix> B;

  void validate() const {
    if (!(sigma_e >= 0.0)) throw ParameterError("sigma_e must be nonnegative");
    if (kind == ModelKind::kMultihopLinear) check_multihop_weights(hop_weights);
    if (kind == ModelKind::kGeneralLinear && !B) {
      throw ParameterError("general-linear model needs an interference matrix");
    }
  }

  bool is_linear() const {
    return kind == ModelKind::kGeneralLinear || kind == ModelKind::kOnehopLinear ||
           kind == ModelKind::kMultihopLinear;
  }
};

// Interference operator the model applies on graph `g`.
inline Interference model_interference(const OutcomeModel& model,
                                       const std::shared_ptr<const Graph>& g) {
  switch (model.kind) {
    case ModelKind::kGeneralLinear: return *model.B;
    case ModelKind::kOnehopLinear: return build_onehop_B(*g, model.r);
    case ModelKind::kMultihopLinear: return MultihopOperator(g, model.hop_weights);
    default: throw ParameterError(std::string(to_string(model.kind)) + " is not a linear model");
  }
}

namespace detail {

inline std::vector<double> noise(const OutcomeModel& model, std::size_t n, std::uint64_t seed,
                                 std::uint64_t step) {
  std::vector<double> eps(n, 0.0);
  if (model.sigma_e == 0.0) return eps;
  NormalSampler normal(Philox4x32(seed, stream::at(stream::kNoise, step)));
  for (auto& e : eps) e = model.sigma_e * normal();
  return eps;
}

// Noise-free outcome plus eps for every model kind. `interference` is only
// read by the general-linear and multihop kinds.
inline std::vector<double> outcomes_with_noise(const OutcomeModel& model, const Graph& g,
                                               const Interference* interference,
                                               std::span<const std::uint8_t> z,
                                               std::span<const double> eps) {
  NodeId n = g.num_nodes();
  if (z.size() != n) throw ParameterError("treatment vector length does not match graph");
  std::vector<double> y(n);
  if (model.kind == ModelKind::kGeneralLinear || model.kind == ModelKind::kMultihopLinear) {
    std::vector<double> zd(z.begin(), z.end());
    if (size(*interference) != n) throw ParameterError("interference matrix size mismatch");
    apply(*interference, zd, y);
    for (NodeId i = 0; i < n; ++i) y[i] += model.beta0 + model.beta1 * z[i] + eps[i];
    return y;
  }
  auto e = exposure_onehop(g, z);
  double avg_deg = g.average_degree();
  for (NodeId i = 0; i < n; ++i) {
    switch (model.kind) {
      case ModelKind::kOnehopLinear:
        y[i] = model.beta0 + model.beta1 * z[i] + model.r * e[i] + eps[i];
        break;
      case ModelKind::kQuadratic:
        y[i] = model.beta0 + model.beta1 * z[i] + model.r * e[i] * e[i] + eps[i];
        break;
      case ModelKind::kSqrt:
        y[i] = model.beta0 + model.beta1 * z[i] + model.r * std::sqrt(e[i]) + eps[i];
        break;
      case ModelKind::kMultiplicative:
        y[i] = (model.beta0 + eps[i]) * (static_cast<double>(g.degree(i)) / avg_deg) *
               (1.0 + model.beta1 * z[i] + model.r * e[i]);
        break;
      default:
        break;
    }
  }
  return y;
}

}  // namespace detail

// Outcomes for one realized treatment vector. Noise is drawn from the
// (seed, step) stream, so each step of a merged experiment gets fresh noise.
inline std::vector<double> generate_outcomes(const OutcomeModel& model,
                                             const std::shared_ptr<const Graph>& g,
                                             std::span<const std::uint8_t> z, std::uint64_t seed,
                                             std::uint64_t step = 0) {
  model.validate();
  auto eps = detail::noise(model, g->num_nodes(), seed, step);
  std::optional<Interference> b;
  if (model.kind == ModelKind::kGeneralLinear || model.kind == ModelKind::kMultihopLinear) {
    b = model_interference(model, g);
  }
  return detail::outcomes_with_noise(model, *g, b ? &*b : nullptr, z, eps);
}

// GATE: mean of Y(1) - Y(0) with the noise at its mean.
inline double true_gate(const OutcomeModel& model, const std::shared_ptr<const Graph>& g) {
  model.validate();
  switch (model.kind) {
    case ModelKind::kOnehopLinear:
    case ModelKind::kQuadratic:
    case ModelKind::kSqrt:
      return model.beta1 + model.r;
    case ModelKind::kMultiplicative:
      return model.beta0 * (model.beta1 + model.r);
    case ModelKind::kGeneralLinear:
    case ModelKind::kMultihopLinear: {
      auto b = model_interference(model, g);
      return model.beta1 + total_sum(b) / static_cast<double>(size(b));
    }
  }
  return 0.0;
}

// Pooled records of a T-step experiment: z and y are T x n row-major.
struct MergedDataset {
  std::size_t n = 0;
  std::vector<double> proportions;
  std::vector<std::uint8_t> z;
  std::vector<double> y;
  std::vector<std::shared_ptr<const Graph>> graphs;  // one per step
  DesignPlan plan;
  ModelKind model_kind = ModelKind::kOnehopLinear;
  double true_gate = 0.0;

  std::size_t steps() const { return proportions.size(); }
  std::size_t records() const { return z.size(); }
  std::span<const std::uint8_t> z_step(std::size_t t) const { return {z.data() + t * n, n}; }
  std::span<const double> y_step(std::size_t t) const { return {y.data() + t * n, n}; }

  // The last `t` steps.
  MergedDataset suffix(std::size_t t) const {
    if (t == 0 || t > steps()) throw ParameterError("merge depth out of range");
    return slice(steps() - t, t);
  }

  // Step t alone.
  MergedDataset step(std::size_t t) const {
    if (t >= steps()) throw ParameterError("step out of range");
    return slice(t, 1);
  }

  // Steps [first, first + count).
  MergedDataset slice(std::size_t first, std::size_t count) const {
    auto b = static_cast<std::ptrdiff_t>(first), e = static_cast<std::ptrdiff_t>(first + count);
    auto bn = static_cast<std::ptrdiff_t>(first * n), en = static_cast<std::ptrdiff_t>((first + count) * n);
    MergedDataset d;
    d.n = n;
    d.proportions.assign(proportions.begin() + b, proportions.begin() + e);
    d.z.assign(z.begin() + bn, z.begin() + en);
    d.y.assign(y.begin() + bn, y.begin() + en);
    d.graphs.assign(graphs.begin() + b, graphs.begin() + e);
    d.plan = plan;
    d.plan.proportions = d.proportions;
    d.model_kind = model_kind;
    d.true_gate = true_gate;
    return d;
  }
};

// Draws the panel, then evaluates each step's outcomes on that step's graph.
inline MergedDataset run_experiment(const OutcomeModel& model, const DesignPlan& plan,
                                    const std::vector<std::shared_ptr<const Graph>>& graphs,
                                    std::uint64_t seed) {
  if (graphs.size() != plan.steps()) throw ParameterError("need one graph per step");
  std::size_t n = graphs.front()->num_nodes();
  for (const auto& g : graphs) {
    if (g->num_nodes() != n) throw ParameterError("step graphs must share the node set");
  }
  model.validate();
  auto panel = assign(plan, n, seed);

  MergedDataset d;
  d.n = n;
  d.proportions = plan.proportions;
  d.z = panel.z;
  d.y.resize(panel.z.size());
  d.graphs = graphs;
  d.plan = plan;
  d.model_kind = model.kind;
  d.true_gate = true_gate(model, graphs.back());

  std::optional<Interference> b;
  const Graph* b_graph = nullptr;
  for (std::size_t t = 0; t < plan.steps(); ++t) {
    const auto& g = graphs[t];
    if ((model.kind == ModelKind::kGeneralLinear || model.kind == ModelKind::kMultihopLinear) &&
        b_graph != g.get()) {
      b = model_interference(model, g);
      b_graph = g.get();
    }
    auto eps = detail::noise(model, n, seed, t);
    auto y = detail::outcomes_with_noise(model, *g, b ? &*b : nullptr, panel.step(t), eps);
    std::copy(y.begin(), y.end(), d.y.begin() + static_cast<std::ptrdiff_t>(t * n));
  }
  return d;
}

// "step,unit,z,y" rows with a header; steps are 1-based.
inline void write_dataset_csv(const MergedDataset& d, std::ostream& out) {
  out << "step,unit,z,y\n";
  out.precision(17);
  for (std::size_t t = 0; t < d.steps(); ++t) {
    auto z = d.z_step(t);
    auto y = d.y_step(t);
    for (std::size_t i = 0; i < d.n; ++i) {
      out << t + 1 << ',' << i << ',' << int(z[i]) << ',' << y[i] << '\n';
    }
  }
}

}  // namespace rampmerge
