// Copyright 2026 The n3pc Authors. All Rights Reserved.
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
// =============================================================================
//
// Finite-sum problem oracles. Device i holds
//
//   logistic regression: f_i(x) = 1/m sum_j log(1 + exp(-b_j a_j^T x)) + lambda/2 |x|^2
//   softmax:             f_i(x) = sigma log sum_j exp((a_j^T x - b_j)/sigma) + lambda/2 |x|^2
//
// and f = 1/n sum_i f_i. Global quantities are reduced in ascending device
// order so they are bit-reproducible.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "n3pc/error.hpp"
#include "n3pc/matcore.hpp"
#include "n3pc/rng.hpp"

namespace n3pc {

struct DeviceData {
  Matrix features;  // m x d, row j = a_j
  Vector labels;    // m
  [[nodiscard]] Eigen::Index rows() const { return features.rows(); }
};

enum class ProblemKind { LogReg, Softmax };

struct Problem {
  ProblemKind kind = ProblemKind::LogReg;
  double lambda = 0.0;
  double sigma = 1.0;  // softmax smoothing
  std::vector<DeviceData> devices;

  [[nodiscard]] Eigen::Index dim() const { return devices.empty() ? 0 : devices.front().features.cols(); }
  [[nodiscard]] int n() const { return static_cast<int>(devices.size()); }
};

struct ProblemConstants {
  double mu = 0.0;
  double cubic_M = 1.0;
};

namespace detail {

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// 1 / (1 + exp(-z)).
inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline const DeviceData& device_at(const Problem& p, int i) {
  if (i < 0 || i >= p.n()) throw Error("device index " + std::to_string(i) + " out of range");
  return p.devices[static_cast<std::size_t>(i)];
}

inline void check_dim(const Problem& p, const Vector& x) {
  if (x.size() != p.dim()) throw Error("point dimension does not match problem");
}

// Softmax weights w = softmax((A x - b) / sigma) and the log-sum-exp value.
inline Vector softmax_weights(const DeviceData& dd, double sigma, const Vector& x, double* lse = nullptr) {
  Vector u = (dd.features * x - dd.labels) / sigma;
  const double umax = u.maxCoeff();
  Vector w = (u.array() - umax).exp();
  const double z = w.sum();
  if (lse) *lse = umax + std::log(z);
  return w / z;
}

// Symmetric A^T diag(c) A, with the upper triangle mirrored from the lower
// one so the result is exactly symmetric.
inline Matrix weighted_gram(const Matrix& a, const Vector& c) {
  const Eigen::Index d = a.cols();
  Matrix h = Matrix::Zero(d, d);
  const Matrix scaled = a.transpose() * c.asDiagonal();
  h.noalias() = scaled * a;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index l = j + 1; l < d; ++l) h(j, l) = h(l, j);
  return h;
}

}  // namespace detail

inline double local_value(const Problem& p, int i, const Vector& x) {
  const auto& dd = detail::device_at(p, i);
  detail::check_dim(p, x);
  const double reg = 0.5 * p.lambda * x.squaredNorm();
  if (p.kind == ProblemKind::LogReg) {
    const Vector t = (dd.features * x).cwiseProduct(dd.labels);
    double s = 0.0;
    for (Eigen::Index j = 0; j < t.size(); ++j) s += detail::softplus(-t(j));
    return s / static_cast<double>(dd.rows()) + reg;
  }
  double lse = 0.0;
  detail::softmax_weights(dd, p.sigma, x, &lse);
  return p.sigma * lse + reg;
}

inline Vector local_grad(const Problem& p, int i, const Vector& x) {
  const auto& dd = detail::device_at(p, i);
  detail::check_dim(p, x);
  if (p.kind == ProblemKind::LogReg) {
    const Vector t = (dd.features * x).cwiseProduct(dd.labels);
    Vector c(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) c(j) = -detail::logistic(-t(j)) * dd.labels(j);
    Vector g = dd.features.transpose() * c / static_cast<double>(dd.rows());
    g += p.lambda * x;
    return g;
  }
  const Vector w = detail::softmax_weights(dd, p.sigma, x);
  Vector g = dd.features.transpose() * w;
  g += p.lambda * x;
  return g;
}

inline Matrix local_hess(const Problem& p, int i, const Vector& x) {
  const auto& dd = detail::device_at(p, i);
  detail::check_dim(p, x);
  const Eigen::Index d = p.dim();
  Matrix h;
  if (p.kind == ProblemKind::LogReg) {
    const Vector t = (dd.features * x).cwiseProduct(dd.labels);
    Vector c(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const double s = detail::logistic(t(j));
      c(j) = s * (1.0 - s) / static_cast<double>(dd.rows());
    }
    h = detail::weighted_gram(dd.features, c);
  } else {
    const Vector w = detail::softmax_weights(dd, p.sigma, x);
    const Vector mean = dd.features.transpose() * w;
    h = detail::weighted_gram(dd.features, w);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index l = 0; l <= j; ++l) {
        const double v = (h(j, l) - mean(j) * mean(l)) / p.sigma;
        h(j, l) = v;
        h(l, j) = v;
      }
  }
  h.diagonal().array() += p.lambda;
  return h;
}

inline double global_value(const Problem& p, const Vector& x) {
  double s = 0.0;
  for (int i = 0; i < p.n(); ++i) s += local_value(p, i, x);
  return s / static_cast<double>(p.n());
}

inline Vector global_grad(const Problem& p, const Vector& x) {
  Vector s = Vector::Zero(p.dim());
  for (int i = 0; i < p.n(); ++i) s += local_grad(p, i, x);
  return s / static_cast<double>(p.n());
}

inline Matrix global_hess(const Problem& p, const Vector& x) {
  Matrix s = Matrix::Zero(p.dim(), p.dim());
  for (int i = 0; i < p.n(); ++i) s += local_hess(p, i, x);
  return s / static_cast<double>(p.n());
}

/// Replaces every a_ij by a_ij - grad f~_i(0), where f~_i is the unshifted,
/// unregularized local softmax. Afterwards grad f(0) = 0 because softmax
/// weights sum to one.
inline Problem shift_softmax_data(const Problem& p) {
  if (p.kind != ProblemKind::Softmax) throw Error("shift_softmax_data: softmax problem required");
  Problem out = p;
  const Vector zero = Vector::Zero(p.dim());
  for (auto& dd : out.devices) {
    const Vector w = detail::softmax_weights(dd, p.sigma, zero);
    const Vector g0 = dd.features.transpose() * w;
    dd.features.rowwise() -= g0.transpose();
  }
  return out;
}

/// Synthetic heterogeneous logistic regression. Per device: mean shift
/// c_i ~ N(0, beta I), model v_i = v0 + N(0, alpha I) with shared
/// v0 ~ N(0, I); features a ~ N(c_i, I); labels sign(a^T v_i), each flipped
/// with probability 0.05.
inline Problem gen_synthetic(double alpha_h, double beta_h, int d, int n, int m, std::uint64_t seed,
                             double lambda = 1e-3) {
  if (d < 1 || n < 1 || m < 1) throw Error("gen_synthetic: sizes must be >= 1");
  if (alpha_h < 0 || beta_h < 0) throw Error("gen_synthetic: heterogeneity knobs must be nonnegative");
  RngStream root(seed);
  RngStream shared = root.split("synthetic-shared");
  Vector v0(d);
  for (int k = 0; k < d; ++k) v0(k) = shared.normal();
  Problem p;
  p.kind = ProblemKind::LogReg;
  p.lambda = lambda;
  const double sa = std::sqrt(alpha_h), sb = std::sqrt(beta_h);
  for (int i = 0; i < n; ++i) {
    RngStream rs = root.split("synthetic-device", static_cast<std::uint64_t>(i));
    Vector c(d), v(d);
    for (int k = 0; k < d; ++k) c(k) = sb * rs.normal();
    for (int k = 0; k < d; ++k) v(k) = v0(k) + sa * rs.normal();
    DeviceData dd;
    dd.features.resize(m, d);
    dd.labels.resize(m);
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < d; ++k) dd.features(j, k) = c(k) + rs.normal();
      double b = dd.features.row(j).dot(v) >= 0 ? 1.0 : -1.0;
      if (rs.uniform() < 0.05) b = -b;
      dd.labels(j) = b;
    }
    p.devices.push_back(std::move(dd));
  }
  return p;
}

}  // namespace n3pc
