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
// Randomized harnesses checking compressors against their stated constants:
//
//   contractive:  E|C(X) - X|_F^2 <= (1 - alpha) |X|_F^2
//   3PC:          E|C_{H,Y}(X) - X|_F^2 <= (1 - A)|H - Y|_F^2 + B|X - Y|_F^2
//
// Deterministic mechanisms are checked exactly (up to 1e-12 relative
// rounding slack); randomized ones by Monte-Carlo means with a 5-sigma band.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "n3pc/compressors.hpp"

namespace n3pc {

struct ContractiveReport {
  double max_ratio = 0.0;   // max over trials of |C(X)-X|^2 / |X|^2
  double mean_ratio = 0.0;
  double bound = 0.0;       // 1 - alpha (or the variance factor for scaled Rand-K)
  double band = 0.0;        // 5-sigma half-width used for randomized kinds
  bool passed = false;
  std::string detail;
};

struct ThreePCReport {
  double worst_slack = std::numeric_limits<double>::infinity();  // min over triples of (RHS - LHS)/max(RHS,tiny)
  double A = 0.0;
  double B = 0.0;
  int triples = 0;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < rows; ++j)
    for (Eigen::Index l = 0; l < cols; ++l) m(j, l) = rng.normal();
  return m;
}

// Half the draws are symmetric (Hessian-like), half general.
inline Matrix test_matrix(Eigen::Index d, int trial, RngStream& rng) {
  Matrix g = gaussian(d, d, rng);
  if (trial % 2 == 0) g = symmetrize(g);
  return g;
}

inline double log_uniform_scale(RngStream& rng, double lo, double hi) {
  return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform());
}

}  // namespace detail

/// Checks a contractive compressor on `trials` random d x d matrices.
/// Scaled Rand-K is checked for unbiasedness and its variance factor
/// size/K - 1 instead, since it is not contractive.
inline ContractiveReport verify_contractive(const ContractiveSpec& spec, Eigen::Index d, int trials, RngStream& rng) {
  ContractiveReport rep;
  if (trials < 1) throw Error("verify_contractive: trials must be >= 1");
  const Shape shape{d, d};
  validate(spec, shape);

  if (const auto* rk = std::get_if<RandK>(&spec); rk && rk->scaled) {
    const double omega = static_cast<double>(shape.size()) / rk->k - 1.0;
    rep.bound = omega;
    const Matrix x = detail::test_matrix(d, 1, rng);
    const double xx = x.squaredNorm();
    Matrix sum = Matrix::Zero(d, d), sum_sq = Matrix::Zero(d, d);
    double r_sum = 0, r_sq = 0;
    for (int t = 0; t < trials; ++t) {
      const Matrix c = contract(spec, x, rng).value;
      sum += c;
      sum_sq += c.cwiseProduct(c);
      const double r = (c - x).squaredNorm() / xx;
      r_sum += r;
      r_sq += r * r;
      rep.max_ratio = std::max(rep.max_ratio, r);
    }
    const double nt = trials;
    rep.mean_ratio = r_sum / nt;
    const double r_sd = std::sqrt(std::max(0.0, r_sq / nt - rep.mean_ratio * rep.mean_ratio));
    rep.band = 5.0 * r_sd / std::sqrt(nt);
    bool unbiased = true;
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index l = 0; l < d; ++l) {
        const double mean = sum(j, l) / nt;
        const double sd = std::sqrt(std::max(0.0, sum_sq(j, l) / nt - mean * mean));
        if (std::abs(mean - x(j, l)) > 5.0 * sd / std::sqrt(nt) + 1e-12 * std::abs(x(j, l))) unbiased = false;
      }
    const bool variance_ok = std::abs(rep.mean_ratio - omega) <= rep.band + 1e-12;
    rep.passed = unbiased && variance_ok;
    rep.detail = std::string(unbiased ? "unbiased" : "BIASED") + ", mean error factor " +
                 std::to_string(rep.mean_ratio) + " vs omega " + std::to_string(omega);
    return rep;
  }

  const double alpha = contraction_alpha(spec, shape);
  rep.bound = 1.0 - alpha;
  double r_sum = 0, r_sq = 0;
  for (int t = 0; t < trials; ++t) {
    const Matrix x = detail::test_matrix(d, t, rng);
    const double r = (contract(spec, x, rng).value - x).squaredNorm() / x.squaredNorm();
    rep.max_ratio = std::max(rep.max_ratio, r);
    r_sum += r;
    r_sq += r * r;
  }
  const double nt = trials;
  rep.mean_ratio = r_sum / nt;
  if (is_randomized(spec)) {
    const double sd = std::sqrt(std::max(0.0, r_sq / nt - rep.mean_ratio * rep.mean_ratio));
    rep.band = 5.0 * sd / std::sqrt(nt);
    rep.passed = rep.mean_ratio <= rep.bound + rep.band + 1e-12;
    rep.detail = "mean ratio " + std::to_string(rep.mean_ratio) + " vs 1-alpha " + std::to_string(rep.bound);
  } else {
    rep.passed = rep.max_ratio <= rep.bound * (1.0 + 1e-12) + 1e-15;
    rep.detail = "max ratio " + std::to_string(rep.max_ratio) + " vs 1-alpha " + std::to_string(rep.bound);
  }
  return rep;
}

/// Checks the 3PC inequality on `trials` random (H, Y, X) triples. Triples
/// mix scales over four decades so that lazy triggers fire on some and skip
/// on others. Randomized mechanisms average `resamples` draws per triple.
inline ThreePCReport verify_3pc(const ThreePCSpec& spec, Eigen::Index d, int trials, RngStream& rng,
                                int resamples = 200) {
  ThreePCReport rep;
  if (trials < 1) throw Error("verify_3pc: trials must be >= 1");
  const Shape shape{d, d};
  validate(spec, shape);
  const ThreePCConstants c = constants(spec, shape);
  rep.A = c.A;
  rep.B = c.B;
  const bool randomized = is_randomized(spec);
  const int draws = randomized ? std::max(2, resamples) : 1;
  bool ok = true;
  for (int t = 0; t < trials; ++t) {
    const Matrix y = detail::test_matrix(d, t, rng);
    const Matrix h = y + detail::log_uniform_scale(rng, 1e-2, 1e2) * detail::test_matrix(d, t, rng);
    const Matrix x = y + detail::log_uniform_scale(rng, 1e-2, 1e2) * detail::test_matrix(d, t, rng);
    const double rhs = (1.0 - c.A) * (h - y).squaredNorm() + c.B * (x - y).squaredNorm();
    double sum = 0, sum_sq = 0;
    for (int r = 0; r < draws; ++r) {
      const double e = (three_pc(spec, h, y, x, rng).value - x).squaredNorm();
      sum += e;
      sum_sq += e * e;
    }
    const double mean = sum / draws;
    double band = 0.0;
    if (randomized) {
      const double sd = std::sqrt(std::max(0.0, sum_sq / draws - mean * mean));
      band = 5.0 * sd / std::sqrt(static_cast<double>(draws));
    }
    const double slack = (rhs + band - mean) / std::max(rhs, 1e-300);
    rep.worst_slack = std::min(rep.worst_slack, slack);
    if (mean > rhs + band + 1e-12 * std::max(rhs, mean)) ok = false;
    ++rep.triples;
  }
  rep.passed = ok;
  rep.detail = describe(spec) + ": A=" + std::to_string(c.A) + " B=" + std::to_string(c.B) +
               " worst relative slack " + std::to_string(rep.worst_slack);
  return rep;
}

}  // namespace n3pc
