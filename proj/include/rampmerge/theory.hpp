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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rampmerge/clustering.hpp"
#include "rampmerge/design.hpp"
#include "rampmerge/errors.hpp"
#include "rampmerge/interference.hpp"

namespace rampmerge {

// Index-set sums of an interference matrix. s_row_col = sum_i rowsum_i colsum_i
// covers the (i = l) and (j = k) coincidence patterns.
struct BSums {
  double s_total = 0.0;
  double s_sq = 0.0;
  double s_cross_ji = 0.0;
  double s_row = 0.0;
  double s_col = 0.0;
  double s_row_col = 0.0;
};

inline BSums bsums(const InterferenceMatrix& B) {
  BSums s;
  s.s_total = B.total_sum();
  auto rows = B.row_sums();
  auto cols = B.col_sums();
  for (NodeId i = 0; i < B.size(); ++i) {
    s.s_row += rows[i] * rows[i];
    s.s_col += cols[i] * cols[i];
    s.s_row_col += rows[i] * cols[i];
    for (double v : B.row_vals(i)) s.s_sq += v * v;
  }
  // sum_ij B_ij B_ji: merge row i of B with row i of B^T.
  InterferenceMatrix Bt = B.transpose();
  for (NodeId i = 0; i < B.size(); ++i) {
    auto ca = B.row_cols(i), cb = Bt.row_cols(i);
    auto va = B.row_vals(i), vb = Bt.row_vals(i);
    std::size_t a = 0, b = 0;
    while (a < ca.size() && b < cb.size()) {
      if (ca[a] < cb[b]) {
        ++a;
      } else if (cb[b] < ca[a]) {
        ++b;
      } else {
        s.s_cross_ji += va[a++] * vb[b++];
      }
    }
  }
  return s;
}

// Single-step complete randomization, OLS: E[tau_hat] - tau.
inline double bias_T1(double s_total, std::size_t n) {
  if (n < 2) throw ParameterError("n must be at least 2");
  double nn = static_cast<double>(n);
  return -(s_total / nn) * (1.0 + 1.0 / (nn - 1.0));
}

// Pooled OLS over T complete-randomization steps with d_t = round(c_t n):
// -(S/n)(1 - n R), R = Tn/(D(Tn - D)) (sum d_t(d_t-1)/(n(n-1)) - D^2/(T n^2)).
inline double bias_T(double s_total, std::size_t n, std::span<const double> proportions) {
  if (proportions.empty()) throw ParameterError("need at least one proportion");
  if (n < 2) throw ParameterError("n must be at least 2");
  double nn = static_cast<double>(n);
  double T = static_cast<double>(proportions.size());
  double D = 0.0, pairs = 0.0;
  for (double c : proportions) {
    if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("proportions must lie in [0, 1]");
    double d = static_cast<double>(treated_count(c, n));
    D += d;
    pairs += d * (d - 1.0);
  }
  if (D == 0.0 || D == T * nn) throw DegenerateError("all records share one treatment arm");
  double R = T * nn / (D * (T * nn - D)) * (pairs / (nn * (nn - 1.0)) - D * D / (T * nn * nn));
  return -(s_total / nn) * (1.0 - nn * R);
}

inline double bias_T2(double s_total, std::size_t n, double c1, double c2) {
  if (c1 == c2) {
    double cs[] = {c1, c2};
    return bias_T(s_total, n, cs);
  }
  double nn = static_cast<double>(n);
  double sum = c1 + c2;
  double num = (nn - 1.0) * (c1 - c2) * (c1 - c2) + 2.0 * (c1 * c1 + c2 * c2) - 2.0 * sum;
  double den = (nn - 1.0) * sum * (2.0 - sum);
  if (den == 0.0) throw DegenerateError("all records share one treatment arm");
  return -(s_total / nn) * (1.0 - num / den);
}

// Exact Var(tau_hat) for OLS under single-step complete randomization with
// d = round(c n) treated units; c is replaced by d/n throughout.
inline double variance_T1_exact(const BSums& bs, std::size_t n, double c, double sigma_e) {
  if (n < 4) throw ParameterError("exact variance needs n >= 4");
  std::size_t d = treated_count(c, n);
  if (d == 0 || d == n) throw DegenerateError("all units share one treatment arm");
  double nn = static_cast<double>(n), dd = static_cast<double>(d);
  double cc = dd / nn;
  // p_k = P(k given units all treated)
  double p1 = dd / nn;
  double p2 = p1 * (dd - 1.0) / (nn - 1.0);
  double p3 = p2 * (dd - 2.0) / (nn - 2.0);
  double p4 = p3 * (dd - 3.0) / (nn - 3.0);

  double e_f = (1.0 - 2.0 * cc) * p2 + cc * cc * p1;
  double e_g = (1.0 - cc) * (1.0 - cc) * p2;
  double e_b = (1.0 - 2.0 * cc) * p3 + cc * cc * p2;
  double e_c = p3 - 2.0 * cc * p2 + cc * cc * p1;
  double e_de = (1.0 - cc) * (p3 - cc * p2);
  double e_a = p4 - 2.0 * cc * p3 + cc * cc * p2;

  double sum_a = bs.s_total * bs.s_total - bs.s_row - bs.s_col - 2.0 * bs.s_row_col + bs.s_sq +
                 bs.s_cross_ji;
  double second = bs.s_sq * e_f + bs.s_cross_ji * e_g + (bs.s_row - bs.s_sq) * e_b +
                  (bs.s_col - bs.s_sq) * e_c + 2.0 * (bs.s_row_col - bs.s_cross_ji) * e_de +
                  sum_a * e_a;
  double first = -cc * (1.0 - cc) * bs.s_total / (nn - 1.0);
  double scale = nn * cc * (1.0 - cc);
  return (second - first * first) / (scale * scale) + sigma_e * sigma_e / scale;
}

struct Improvement {
  bool improves = false;
  double lhs = 0.0;
};

namespace detail {

struct Cor2Coefficients {
  double a, b, c;
};

inline Cor2Coefficients cor2_coefficients(std::span<const double> proportions) {
  double T = static_cast<double>(proportions.size());
  double C1 = 0.0, C2 = 0.0;
  for (double c : proportions) {
    C1 += c;
    C2 += c * c;
  }
  return {T * T * C1 - (T + 1.0) * C1 * C1 + T * C2,
          -((T - 1.0) * C1 * C1 - 2.0 * T * C1 * C2 + T * (T + 1.0) * C2),
          C1 * C1 * C1 - C1 * C1 * C2};
}

}  // namespace detail

// Whether adding a step with proportion x to the merged data shrinks the
// leading-order bias magnitude: improves iff lhs > 0.
inline Improvement corollary2_improvement(std::span<const double> proportions, double x) {
  if (proportions.empty()) throw ParameterError("need at least one proportion");
  if (!(x >= 0.0 && x <= 1.0)) throw ParameterError("x must lie in [0, 1]");
  auto k = detail::cor2_coefficients(proportions);
  double lhs = (k.a * x + k.b) * x + k.c;
  return {lhs > 0.0, lhs};
}

// Real roots of the improvement quadratic, ascending.
inline std::vector<double> corollary2_roots(std::span<const double> proportions) {
  auto k = detail::cor2_coefficients(proportions);
  std::vector<double> roots;
  if (k.a == 0.0) {
    if (k.b != 0.0) roots.push_back(-k.c / k.b);
    return roots;
  }
  double disc = k.b * k.b - 4.0 * k.a * k.c;
  double tol = 1e-12 * std::max({1.0, k.b * k.b, std::abs(4.0 * k.a * k.c)});
  if (disc < -tol) return roots;
  if (disc <= tol) {
    roots.push_back(-k.b / (2.0 * k.a));
    return roots;
  }
  double q = -0.5 * (k.b + std::copysign(std::sqrt(disc), k.b));
  roots.push_back(q / k.a);
  roots.push_back(k.c / q);
  std::sort(roots.begin(), roots.end());
  return roots;
}

// Leading-order relative bias reduction rho = (T C2 - C1^2) / (C1 (T - C1)),
// so that bias ~ -(S/n)(1 - rho).
inline double relative_bias_reduction(std::span<const double> proportions) {
  double T = static_cast<double>(proportions.size());
  double C1 = 0.0, C2 = 0.0;
  for (double c : proportions) {
    C1 += c;
    C2 += c * c;
  }
  if (C1 == 0.0 || C1 == T) throw DegenerateError("all records share one treatment arm");
  return (T * C2 - C1 * C1) / (C1 * (T - C1));
}

// trace(B^T B Cov[z]) for a single step at proportion c. Cluster-level complete
// randomization has no closed-form covariance.
inline std::optional<double> exposure_trace(const InterferenceMatrix& B, Level level, Scheme scheme,
                                            double c, const Clustering* clustering = nullptr) {
  double v = c * (1.0 - c);
  double s_sq = 0.0, s_row = 0.0;
  for (NodeId i = 0; i < B.size(); ++i) {
    for (double x : B.row_vals(i)) s_sq += x * x;
    s_row += B.row_sums()[i] * B.row_sums()[i];
  }
  if (level == Level::kUnit) {
    if (scheme == Scheme::kBernoulli) return v * s_sq;
    double n = static_cast<double>(B.size());
    return v * (n / (n - 1.0) * s_sq - s_row / (n - 1.0));
  }
  if (scheme == Scheme::kComplete || clustering == nullptr) return std::nullopt;
  // sum_C ||B 1_C||^2
  double total = 0.0;
  std::vector<double> acc(clustering->num_clusters(), 0.0);
  std::vector<ClusterId> touched;
  for (NodeId i = 0; i < B.size(); ++i) {
    auto cols = B.row_cols(i);
    auto vals = B.row_vals(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      ClusterId cl = clustering->assignment[cols[k]];
      if (acc[cl] == 0.0) touched.push_back(cl);
      acc[cl] += vals[k];
    }
    for (ClusterId cl : touched) {
      total += acc[cl] * acc[cl];
      acc[cl] = 0.0;
    }
    touched.clear();
  }
  return v * total;
}

// Closed-form bias for pooled OLS over `proportions`, plus the exact
// single-step variance when T = 1.
struct TheoryPrediction {
  double bias = 0.0;
  std::optional<double> variance;
  std::map<std::string, double> components;
};

inline TheoryPrediction predict(const InterferenceMatrix& B, std::span<const double> proportions,
                                double sigma_e) {
  TheoryPrediction p;
  std::size_t n = B.size();
  p.bias = bias_T(B.total_sum(), n, proportions);
  BSums bs = bsums(B);
  p.components = {{"s_total", bs.s_total}, {"s_sq", bs.s_sq},   {"s_cross_ji", bs.s_cross_ji},
                  {"s_row", bs.s_row},     {"s_col", bs.s_col}, {"s_row_col", bs.s_row_col}};
  if (proportions.size() == 1 && n >= 4) {
    double c = static_cast<double>(treated_count(proportions[0], n)) / static_cast<double>(n);
    double noise = sigma_e * sigma_e / (static_cast<double>(n) * c * (1.0 - c));
    p.variance = variance_T1_exact(bs, n, proportions[0], sigma_e);
    p.components["noise_term"] = noise;
    p.components["interference_term"] = *p.variance - noise;
  }
  return p;
}

struct AssumptionDiagnostics {
  double max_abs_row_sum = 0.0;
  double total_over_n = 0.0;
  double col_sq_over_n = 0.0;
};

inline AssumptionDiagnostics assumption_diagnostics(const InterferenceMatrix& B) {
  AssumptionDiagnostics a;
  double n = static_cast<double>(B.size());
  for (NodeId i = 0; i < B.size(); ++i) {
    double row = 0.0;
    for (double v : B.row_vals(i)) row += std::abs(v);
    a.max_abs_row_sum = std::max(a.max_abs_row_sum, row);
    a.col_sq_over_n += B.col_sums()[i] * B.col_sums()[i];
  }
  a.total_over_n = B.total_sum() / n;
  a.col_sq_over_n /= n;
  return a;
}

}  // namespace rampmerge
