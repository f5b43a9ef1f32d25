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

#include "test_util.hpp"

namespace n3pc {
namespace {

using testing::random_vector;

// Central differences with step 1e-5 (1 + |x|).
double grad_fd_error(const Problem& p, int i, const Vector& x) {
  const double h = 1e-5 * (1.0 + x.norm());
  const Vector g = local_grad(p, i, x);
  Vector fd(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    fd(k) = (local_value(p, i, a) - local_value(p, i, b)) / (2 * h);
  }
  return (fd - g).norm() / std::max(g.norm(), 1e-3);
}

double hess_fd_error(const Problem& p, int i, const Vector& x) {
  const double h = 1e-5 * (1.0 + x.norm());
  const Matrix hs = local_hess(p, i, x);
  Matrix fd(x.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    fd.col(k) = (local_grad(p, i, a) - local_grad(p, i, b)) / (2 * h);
  }
  return (fd - hs).norm() / hs.norm();
}

TEST(LogReg, ValueAtZeroIsLogTwo) {
  const Problem p = testing::small_logreg(6, 3, 20, 1, 0.3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(local_value(p, i, Vector::Zero(6)), std::log(2.0), 1e-15);
}

TEST(LogReg, HessianAtZero) {
  const Problem p = testing::small_logreg(6, 3, 20, 2, 0.3);
  for (int i = 0; i < 3; ++i) {
    const Matrix& a = p.devices[static_cast<std::size_t>(i)].features;
    Matrix want = a.transpose() * a / (4.0 * static_cast<double>(a.rows()));
    want.diagonal().array() += 0.3;
    EXPECT_LE((local_hess(p, i, Vector::Zero(6)) - want).norm(), 1e-13 * want.norm());
  }
}

TEST(Oracles, FiniteDifferencesBothKinds) {
  RngStream rng(3);
  double worst_g = 0, worst_h = 0;
  for (int probe = 0; probe < 50; ++probe) {
    const auto seed = static_cast<std::uint64_t>(100 + probe);
    const Problem lr = testing::small_logreg(5, 2, 15, seed, 1e-2);
    const Problem sm = testing::small_softmax(5, 2, 15, seed, 1e-2, 0.3 + rng.uniform());
    const Vector x = random_vector(5, rng);
    for (const Problem* p : {&lr, &sm}) {
      worst_g = std::max(worst_g, grad_fd_error(*p, probe % 2, x));
      worst_h = std::max(worst_h, hess_fd_error(*p, probe % 2, x));
    }
  }
  EXPECT_LE(worst_g, 1e-5);
  EXPECT_LE(worst_h, 1e-5);
}

TEST(Oracles, HessianSymmetricWithFloor) {
  RngStream rng(4);
  const Problem lr = testing::small_logreg(7, 3, 30, 5, 0.05);
  const Problem sm = testing::small_softmax(7, 3, 30, 5, 0.05, 0.8);
  for (int t = 0; t < 20; ++t) {
    const Vector x = 3.0 * random_vector(7, rng);
    for (const Problem* p : {&lr, &sm}) {
      const Matrix h = local_hess(*p, t % 3, x);
      ASSERT_TRUE(is_symmetric(h));
      ASSERT_GE(min_eigenvalue(h), 0.05 - 1e-12);
    }
  }
}

TEST(Oracles, PureRegularizerWhenFeaturesVanish) {
  for (ProblemKind kind : {ProblemKind::LogReg, ProblemKind::Softmax}) {
    Problem p;
    p.kind = kind;
    p.lambda = 0.7;
    p.devices.push_back({Matrix::Zero(1, 4), Vector::Ones(1)});
    const Vector x = Vector{{1.0, -2.0, 0.5, 3.0}};
    const double offset = kind == ProblemKind::LogReg ? std::log(2.0) : -1.0;  // sigma * (-b / sigma)
    EXPECT_NEAR(local_value(p, 0, x) - offset, 0.35 * x.squaredNorm(), 1e-14);
    EXPECT_LE((local_grad(p, 0, x) - 0.7 * x).norm(), 1e-15);
    EXPECT_LE((local_hess(p, 0, x) - 0.7 * Matrix::Identity(4, 4)).norm(), 1e-15);
  }
}

TEST(Global, SingleDeviceEqualsLocal) {
  const Problem p = testing::small_logreg(5, 1, 25, 6);
  RngStream rng(6);
  const Vector x = random_vector(5, rng);
  EXPECT_EQ(global_value(p, x), local_value(p, 0, x));
  EXPECT_EQ(global_grad(p, x), local_grad(p, 0, x));
  EXPECT_EQ(global_hess(p, x), local_hess(p, 0, x));
}

TEST(Global, DuplicatedDevicesEqualOne) {
  Problem one = testing::small_logreg(5, 1, 25, 7);
  Problem many = one;
  many.devices = {one.devices[0], one.devices[0], one.devices[0], one.devices[0]};
  RngStream rng(7);
  const Vector x = random_vector(5, rng);
  EXPECT_NEAR(global_value(many, x), global_value(one, x), 1e-15);
  EXPECT_LE((global_grad(many, x) - global_grad(one, x)).norm(), 1e-15);
  EXPECT_LE((global_hess(many, x) - global_hess(one, x)).norm(), 1e-14);
}

TEST(Global, GradientIsMeanOfLocals) {
  const Problem p = testing::small_logreg(6, 5, 10, 8);
  RngStream rng(8);
  const Vector x = random_vector(6, rng);
  Vector s = Vector::Zero(6);
  for (int i = 0; i < 5; ++i) s += local_grad(p, i, x);
  EXPECT_EQ(global_grad(p, x), Vector(s / 5.0));
}

TEST(Softmax, ShiftZeroesGradientAtOrigin) {
  for (double sigma : {0.1, 0.5, 1.0, 3.0}) {
    const Problem p = shift_softmax_data(testing::small_softmax(6, 4, 12, 9, 1e-3, sigma));
    EXPECT_LE(global_grad(p, Vector::Zero(6)).norm(), 1e-10);
    for (int i = 0; i < 4; ++i) EXPECT_LE(local_grad(p, i, Vector::Zero(6)).norm(), 1e-10);
  }
}

TEST(Softmax, ShiftIsIdempotent) {
  const Problem once = shift_softmax_data(testing::small_softmax(5, 3, 10, 10));
  const Problem twice = shift_softmax_data(once);
  for (int i = 0; i < 3; ++i)
    EXPECT_LE((once.devices[static_cast<std::size_t>(i)].features - twice.devices[static_cast<std::size_t>(i)].features)
                  .norm(),
              1e-12);
}

TEST(Softmax, SinglePointShiftsToZero) {
  const Problem p = shift_softmax_data(testing::small_softmax(4, 3, 1, 11));
  for (const auto& dd : p.devices) EXPECT_LE(dd.features.norm(), 1e-15);
}

TEST(Softmax, LabelShiftMovesValueByConstant) {
  Problem p = testing::small_softmax(5, 2, 8, 12, 1e-2, 0.7);
  RngStream rng(12);
  const Vector x = random_vector(5, rng);
  const double before = local_value(p, 0, x);
  p.devices[0].labels.array() += 2.5;
  EXPECT_NEAR(local_value(p, 0, x), before - 2.5, 1e-12);
}

TEST(Softmax, ShiftRequiresSoftmax) {
  EXPECT_THROW(shift_softmax_data(testing::small_logreg(3, 1, 3, 1)), Error);
}

TEST(Synthetic, DeterministicAndBinaryLabels) {
  const Problem a = gen_synthetic(1.0, 2.0, 8, 5, 40, 99);
  const Problem b = gen_synthetic(1.0, 2.0, 8, 5, 40, 99);
  ASSERT_EQ(a.n(), 5);
  for (int i = 0; i < 5; ++i) {
    const auto& da = a.devices[static_cast<std::size_t>(i)];
    const auto& db = b.devices[static_cast<std::size_t>(i)];
    EXPECT_EQ(da.features, db.features);
    EXPECT_EQ(da.labels, db.labels);
    EXPECT_EQ(da.rows(), 40);
    for (Eigen::Index j = 0; j < da.labels.size(); ++j) EXPECT_TRUE(da.labels(j) == 1.0 || da.labels(j) == -1.0);
  }
}

TEST(Synthetic, NoHeterogeneityMeansIdenticalDistributions) {
  // alpha = beta = 0: every device samples from the same law, so per-device
  // feature means agree up to sampling noise.
  const Problem p = gen_synthetic(0.0, 0.0, 4, 3, 4000, 5);
  const Vector m0 = p.devices[0].features.colwise().mean();
  for (int i = 1; i < 3; ++i) {
    const Vector mi = p.devices[static_cast<std::size_t>(i)].features.colwise().mean();
    EXPECT_LE((mi - m0).lpNorm<Eigen::Infinity>(), 0.1);
  }
  const Problem q = gen_synthetic(0.0, 25.0, 4, 3, 4000, 5);
  double spread = 0;
  const Vector q0 = q.devices[0].features.colwise().mean();
  for (int i = 1; i < 3; ++i)
    spread = std::max(spread, (Vector(q.devices[static_cast<std::size_t>(i)].features.colwise().mean()) - q0)
                                  .lpNorm<Eigen::Infinity>());
  EXPECT_GT(spread, 1.0);
}

TEST(Synthetic, RejectsBadSizes) {
  EXPECT_THROW(gen_synthetic(0, 0, 0, 1, 1, 0), Error);
  EXPECT_THROW(gen_synthetic(-1, 0, 2, 1, 1, 0), Error);
}

}  // namespace
}  // namespace n3pc
