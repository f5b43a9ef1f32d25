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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"

namespace n3pc {
namespace {

using testing::random_matrix;
using testing::random_spd;
using testing::random_symmetric;
using testing::random_vector;

TEST(Symmetrize, SymmetricInputUnchanged) {
  RngStream rng(1);
  const Matrix a = random_symmetric(6, rng);
  EXPECT_EQ(symmetrize(a), a);
}

TEST(Symmetrize, HandExample) {
  Matrix a(2, 2);
  a << 0, 2, 0, 0;
  Matrix want(2, 2);
  want << 0, 1, 1, 0;
  EXPECT_EQ(symmetrize(a), want);
}

TEST(Symmetrize, Idempotent) {
  RngStream rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = symmetrize(random_matrix(5, 5, rng));
    EXPECT_EQ(symmetrize(s), s);
    EXPECT_TRUE(is_symmetric(s));
  }
}

TEST(Symmetrize, RejectsNonSquare) { EXPECT_THROW(symmetrize(Matrix::Zero(2, 3)), Error); }

TEST(Norms, Identity) {
  const Matrix i = Matrix::Identity(3, 3);
  EXPECT_DOUBLE_EQ(frob_norm(i), std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(spec_norm(i), 1.0);
  EXPECT_DOUBLE_EQ(inf_norm(i), 1.0);
}

TEST(Norms, ThreeFourFive) {
  Matrix a(2, 2);
  a << 3, 4, 0, 0;
  EXPECT_DOUBLE_EQ(frob_norm(a), 5.0);
  EXPECT_NEAR(spec_norm(a), 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(inf_norm(a), 4.0);
}

TEST(Norms, RankOneSpectral) {
  // eigenvalue of u u^T is |u|^2
  RngStream rng(3);
  Vector u = random_vector(7, rng);
  u *= 2.0 / u.norm();
  const Matrix a = u * u.transpose();
  EXPECT_NEAR(spec_norm(a), 4.0, 1e-12);
}

TEST(ProjectPsd, ClampsDiagonal) {
  const Matrix a = Vector{{3.0, 0.5}}.asDiagonal();
  const Matrix p = project_psd_mu(a, 1.0);
  Matrix want = Matrix::Zero(2, 2);
  want(0, 0) = 3.0;
  want(1, 1) = 1.0;
  EXPECT_NEAR((p - want).norm(), 0.0, 1e-12);
}

TEST(ProjectPsd, ZeroGoesToIdentity) {
  EXPECT_NEAR((project_psd_mu(Matrix::Zero(4, 4), 1.0) - Matrix::Identity(4, 4)).norm(), 0.0, 1e-12);
}

TEST(ProjectPsd, FeasibleInputReturnedExactly) {
  RngStream rng(4);
  for (int t = 0; t < 50; ++t) {
    const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(6, 6, rng)).householderQ();
    Vector lam(6);
    for (int j = 0; j < 6; ++j) lam(j) = 0.5 + 3.0 * rng.uniform();
    const Matrix a = symmetrize(q * lam.asDiagonal() * q.transpose());
    EXPECT_EQ(project_psd_mu(a, 0.25), a);
  }
}

TEST(ProjectPsd, IdempotentWithFloorOnRandomInputs) {
  RngStream rng(5);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(7));
    const Matrix a = random_symmetric(d, rng);
    const double mu = 0.1 + rng.uniform();
    const Matrix p = project_psd_mu(a, mu);
    ASSERT_TRUE(is_symmetric(p));
    ASSERT_GE(min_eigenvalue(p), mu - tol::kEig * std::max(1.0, a.norm()));
    ASSERT_LE((project_psd_mu(p, mu) - p).norm(), 1e-10 * std::max(1.0, p.norm()));
  }
}

TEST(ProjectPsd, RejectsBadMu) { EXPECT_THROW(project_psd_mu(Matrix::Identity(2, 2), 0.0), Error); }

TEST(SolveLinear, IdentityAndScaled) {
  RngStream rng(6);
  const Vector b = random_vector(5, rng);
  EXPECT_EQ(solve_linear(Matrix::Identity(5, 5), b), b);
  EXPECT_NEAR((solve_linear(2.0 * Matrix::Identity(5, 5), b) - b / 2.0).norm(), 0.0, 1e-15);
}

TEST(SolveLinear, RandomSpdResidual) {
  RngStream rng(7);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_spd(10, rng);
    const Vector b = random_vector(10, rng);
    const Vector h = solve_linear(a, b);
    EXPECT_LE((a * h - b).norm() / b.norm(), tol::kLinear);
  }
}

TEST(SolveLinear, IndefiniteThrows) {
  Matrix a = Matrix::Identity(3, 3);
  a(2, 2) = -1.0;
  EXPECT_THROW(solve_linear(a, Vector::Ones(3)), NumericalError);
}

TEST(SolveLinear, NonFiniteThrows) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(solve_linear(a, Vector::Ones(2)), NumericalError);
}

TEST(CubicStep, ZeroGradient) {
  RngStream rng(8);
  EXPECT_EQ(solve_cubic_step(Vector::Zero(4), random_spd(4, rng), 1.0), Vector::Zero(4));
}

TEST(CubicStep, SmallMApproachesNewton) {
  const Vector g = Vector{{1.0, 0.0}};
  const Vector h = solve_cubic_step(g, Matrix::Identity(2, 2), 1e-9);
  EXPECT_NEAR(h(0), -1.0, 1e-6);
  EXPECT_NEAR(h(1), 0.0, 1e-12);
}

TEST(CubicStep, ScalarClosedForm) {
  // 1 + 3 h |h| = 0  =>  h = -1/sqrt(3)
  const Vector h = solve_cubic_step(Vector::Ones(1), Matrix::Zero(1, 1), 6.0);
  EXPECT_NEAR(h(0), -1.0 / std::sqrt(3.0), 1e-12);
}

TEST(CubicStep, StationarityResidual) {
  RngStream rng(9);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(8));
    const Vector g = random_vector(d, rng) * std::exp(3.0 * rng.normal());
    const Matrix b = random_symmetric(d, rng);  // indefinite allowed
    const double m = std::exp(2.0 * rng.normal());
    const Vector h = solve_cubic_step(g, b, m);
    EXPECT_LE(cubic_model_grad(g, b, m, h).norm(), tol::kCubic * std::max(1.0, g.norm()));
  }
}

TEST(CubicStep, HardCase) {
  // g orthogonal to the bottom eigenvector of an indefinite B
  Matrix b = Matrix::Zero(2, 2);
  b(0, 0) = -1.0;
  b(1, 1) = 2.0;
  const Vector g = Vector{{0.0, 1e-3}};
  const Vector h = solve_cubic_step(g, b, 1.0);
  EXPECT_LE(cubic_model_grad(g, b, 1.0, h).norm(), tol::kCubic);
  EXPECT_LT(cubic_model(g, b, 1.0, h), 0.0);
}

TEST(CubicStep, BeatsBruteForceGrid) {
  RngStream rng(10);
  constexpr double step = 1e-3;
  constexpr int half = 3000;  // grid over [-3, 3]^2
  for (int t = 0; t < 20; ++t) {
    const Vector g = random_vector(2, rng);
    const Matrix b = random_symmetric(2, rng);
    const double m = 0.5 + 2.0 * rng.uniform();
    double best = std::numeric_limits<double>::infinity();
    for (int i = -half; i <= half; ++i) {
      const double x = i * step;
      for (int j = -half; j <= half; ++j) {
        const double y = j * step;
        const double r = std::sqrt(x * x + y * y);
        const double v = g(0) * x + g(1) * y + 0.5 * (b(0, 0) * x * x + 2 * b(0, 1) * x * y + b(1, 1) * y * y) +
                         m / 6.0 * r * r * r;
        best = std::min(best, v);
      }
    }
    const Vector h = solve_cubic_step(g, b, m);
    EXPECT_LE(cubic_model(g, b, m, h), best + 1e-4) << "instance " << t;
  }
}

}  // namespace
}  // namespace n3pc
