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
// Dense matrix utilities shared by the compressors and the solvers: norms,
// symmetrization, projection onto {M = M^T, M >= mu I}, SPD solves and the
// cubic-regularized step.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "n3pc/error.hpp"

namespace n3pc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace tol {
inline constexpr double kEig = 1e-10;
inline constexpr double kLinear = 1e-10;
inline constexpr double kCubic = 1e-8;
inline constexpr int kRootMaxIter = 200;
}  // namespace tol

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw Error(std::string(what) + ": expected a non-empty square matrix");
  }
}

/// (A + A^T) / 2. Symmetric inputs come back bit-for-bit unchanged.
inline Matrix symmetrize(const Matrix& a) {
  require_square(a, "symmetrize");
  Matrix out = (a + a.transpose()) * 0.5;
  return out;
}

inline bool is_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    for (Eigen::Index l = 0; l < j; ++l)
      if (a(j, l) != a(l, j)) return false;
  return true;
}

inline double frob_norm(const Matrix& a) { return a.norm(); }

inline double inf_norm(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Largest singular value.
inline double spec_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  if (is_symmetric(a)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

inline double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("min_eigenvalue: eigensolver failed");
  return es.eigenvalues()(0);
}

/// Projection onto the cone {M = M^T, M >= mu I}: symmetrize, then clamp
/// every eigenvalue below mu up to mu. When nothing needs clamping the
/// symmetrized input is returned as is.
inline Matrix project_psd_mu(const Matrix& a, double mu) {
  require_square(a, "project_psd_mu");
  if (!(mu > 0)) throw Error("project_psd_mu: mu must be positive");
  if (!all_finite(a)) throw NumericalError("project_psd_mu: non-finite entries");
  Matrix s = symmetrize(a);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) throw NumericalError("project_psd_mu: eigendecomposition failed");
  if (es.eigenvalues()(0) >= mu) return s;
  Vector clamped = es.eigenvalues().cwiseMax(mu);
  const Matrix& q = es.eigenvectors();
  Matrix out = q * clamped.asDiagonal() * q.transpose();
  return symmetrize(out);
}

/// Solves A h = b for symmetric positive definite A (lower triangle is read).
inline Vector solve_linear(const Matrix& a, const Vector& b) {
  require_square(a, "solve_linear");
  if (a.rows() != b.size()) throw Error("solve_linear: dimension mismatch");
  if (!all_finite(a) || !b.allFinite()) throw NumericalError("solve_linear: non-finite input");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("solve_linear: matrix is not positive definite");
  const Vector diag = llt.matrixLLT().diagonal();
  const double dmax = diag.cwiseAbs().maxCoeff();
  const double dmin = diag.cwiseAbs().minCoeff();
  // pivot threshold on the squared Cholesky diagonal (~ eigenvalue scale)
  if (dmin * dmin <= 1e-15 * dmax * dmax) throw NumericalError("solve_linear: numerically singular matrix");
  return llt.solve(b);
}

/// Model value <g,h> + 1/2 <Bh,h> + M/6 |h|^3.
inline double cubic_model(const Vector& g, const Matrix& b, double m, const Vector& h) {
  const double r = h.norm();
  return g.dot(h) + 0.5 * h.dot(b * h) + m / 6.0 * r * r * r;
}

inline Vector cubic_model_grad(const Vector& g, const Matrix& b, double m, const Vector& h) {
  return g + b * h + (0.5 * m * h.norm()) * h;
}

/// Global minimizer of the cubic model <g,h> + 1/2 <Bh,h> + M/6 |h|^3.
///
/// Works in the eigenbasis of B. The minimizer has the form
/// h(r) = -(B + (M r / 2) I)^{-1} g with r = |h(r)| and B + (M r/2) I >= 0;
/// r is the root of phi(r) = |h(r)| - r, which is strictly decreasing on
/// (r_lo, inf) with r_lo = max(0, -2 lambda_min / M). The root is found with
/// Newton steps safeguarded by bisection. When phi(r_lo+) <= 0 and B is
/// indefinite (the "hard case") the step is completed along the bottom
/// eigenvector.
inline Vector solve_cubic_step(const Vector& g, const Matrix& b, double m) {
  require_square(b, "solve_cubic_step");
  if (b.rows() != g.size()) throw Error("solve_cubic_step: dimension mismatch");
  if (!(m > 0)) throw Error("solve_cubic_step: cubic constant must be positive");
  if (!all_finite(b) || !g.allFinite()) throw NumericalError("solve_cubic_step: non-finite input");

  const Eigen::Index d = g.size();
  const double gnorm = g.norm();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(b));
  if (es.info() != Eigen::Success) throw NumericalError("solve_cubic_step: eigendecomposition failed");
  const Vector& lam = es.eigenvalues();
  const Matrix& q = es.eigenvectors();
  const Vector gh = q.transpose() * g;
  const double lam_min = lam(0);

  if (gnorm == 0.0 && lam_min >= 0.0) return Vector::Zero(d);

  auto step_norm = [&](double r) {
    const double shift = 0.5 * m * r;
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (gh(j) == 0.0) continue;
      const double den = lam(j) + shift;
      s += gh(j) * gh(j) / (den * den);
    }
    return std::sqrt(s);
  };
  auto step_at = [&](double r) {
    const double shift = 0.5 * m * r;
    Vector c(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double den = lam(j) + shift;
      c(j) = (gh(j) != 0.0 && den > 0) ? -gh(j) / den : 0.0;
    }
    return Vector(q * c);
  };

  const double r_lo = std::max(0.0, -2.0 * lam_min / m);
  // |h(r)| <= |g| / (lam_min + M r / 2) <= r at the positive root below.
  double r_hi = (-lam_min + std::sqrt(lam_min * lam_min + 2.0 * m * gnorm)) / m;
  r_hi = std::max(r_hi, r_lo) * (1.0 + 1e-12) + 1e-300;

  // Hard case: the secular function never crosses zero above r_lo.
  if (lam_min < 0.0) {
    const double probe = r_lo * (1.0 + 1e-14) + 1e-300;
    const double hn = step_norm(probe);
    if (!(hn > probe)) {
      // h = h(r_lo) + t u_min with |h| = r_lo.
      Vector c = Vector::Zero(d);
      const double shift = 0.5 * m * r_lo;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double den = lam(j) + shift;
        if (den > 1e-14 * std::max(1.0, std::abs(lam(j)))) c(j) = -gh(j) / den;
      }
      const double rem = r_lo * r_lo - c.squaredNorm();
      c(0) += std::sqrt(std::max(0.0, rem));
      return q * c;
    }
  }

  constexpr double kBracket = 4.0 * std::numeric_limits<double>::epsilon();
  double lo = r_lo, hi = r_hi;
  double r = hi;
  double last_phi = 0.0;
  for (int it = 0; it < tol::kRootMaxIter; ++it) {
    const double hn = step_norm(r);
    const double phi = hn - r;
    last_phi = phi;
    if (phi > 0) lo = r; else hi = r;
    if (std::abs(phi) <= 1e-15 * std::max(1.0, r) || hi - lo <= kBracket * std::max(1.0, hi)) {
      Vector h = step_at(r);
      double res = cubic_model_grad(g, b, m, h).norm();
      // Near the hard case phi is too steep to resolve r to working
      // precision; pinning |h| = r through the bottom component fixes that.
      Vector c = q.transpose() * h;
      const double rest = c.tail(d - 1).squaredNorm();
      if (r * r > rest) {
        c(0) = std::copysign(std::sqrt(r * r - rest), c(0) != 0.0 ? c(0) : -gh(0));
        const Vector hp = q * c;
        const double res_p = cubic_model_grad(g, b, m, hp).norm();
        if (res_p < res) {
          h = hp;
          res = res_p;
        }
      }
      if (res <= tol::kCubic * std::max(1.0, gnorm)) return h;
      if (hi - lo <= kBracket * std::max(1.0, hi)) {
        throw NumericalError("solve_cubic_step: stalled with model-gradient residual " + std::to_string(res));
      }
    }
    // d|h|/dr = -(M/2) sum gh^2/den^3 / |h|
    const double shift = 0.5 * m * r;
    double s3 = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (gh(j) == 0.0) continue;
      const double den = lam(j) + shift;
      s3 += gh(j) * gh(j) / (den * den * den);
    }
    const double dphi = (hn > 0 ? -0.5 * m * s3 / hn : 0.0) - 1.0;
    double next = r - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    r = next;
  }
  throw NumericalError("solve_cubic_step: root finder did not converge, last residual " +
                       std::to_string(last_phi));
}

}  // namespace n3pc
