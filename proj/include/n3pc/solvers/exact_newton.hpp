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
// Damped exact Newton. Produces the reference optimum for every gap column
// and serves as the uncompressed baseline. Communication is metered as the
// naive protocol: each device uploads its dense gradient and Hessian, the
// server broadcasts the new model. Step-size trials are evaluated centrally.

#pragma once

#include <string>

#include "n3pc/solvers/common.hpp"

namespace n3pc {

struct ExactNewtonResult {
  Vector x;
  double f = 0.0;
  RunTrace trace;
  int iterations = 0;
  ByteMeter meter;
};

/// `iters` damped Newton steps from `x0`: the unit step is taken when the
/// Armijo condition (c1 = 1e-4) holds, otherwise it is halved until it does.
/// Stops early once the gradient is exactly zero or the step underflows.
/// Throws NumericalError when f increases on 5 consecutive iterations.
/// When `ref` is given, the trace gap columns are measured against it.
inline ExactNewtonResult run_exact_newton(const Problem& problem, const Vector& x0, int iters = 20,
                                          const Reference* ref = nullptr) {
  if (problem.n() < 1) throw Error("exact Newton: problem has no devices");
  if (x0.size() != problem.dim()) throw Error("exact Newton: x0 dimension does not match the problem");
  if (iters < 0) throw Error("exact Newton: iteration count must be >= 0");
  constexpr double kC1 = 1e-4;
  constexpr int kMaxHalvings = 60;

  const int n = problem.n();
  const Eigen::Index d = problem.dim();
  const Shape vshape{d, 1}, mshape{d, d};
  Network net(n);
  ExactNewtonResult out;
  std::uint64_t hessians = 0, grads = 0;

  auto gather = [&](const Vector& x, Vector& g, Matrix& h) {
    g = Vector::Zero(d);
    h = Matrix::Zero(d, d);
    for (int i = 0; i < n; ++i) {
      g += detail::vec(net.send_up(i, dense_of(local_grad(problem, i, x)), vshape, "gradient"));
      h += materialize(net.send_up(i, dense_of(local_hess(problem, i, x)), mshape, "hessian"), mshape);
      ++grads;
      ++hessians;
    }
    g /= static_cast<double>(n);
    h /= static_cast<double>(n);
  };
  auto row = [&](int iter, const Vector& x, double f) {
    TraceRow r;
    r.iter = iter;
    r.f_gap = ref ? f - ref->f_star : 0.0;
    r.dist_sq = ref && ref->x_star.size() == x.size() ? (x - ref->x_star).squaredNorm() : 0.0;
    r.bytes_up_cum = net.meter().uplink_total;
    r.bytes_down_cum = net.meter().downlink_total;
    r.hessians_computed_cum = hessians;
    r.grads_computed_cum = grads;
    r.participated = n;
    out.trace.rows.push_back(r);
  };

  Vector x = x0;
  double f = global_value(problem, x);
  Vector g;
  Matrix h;
  gather(x, g, h);
  row(0, x, f);
  int increases = 0;
  int k = 0;
  for (; k < iters; ++k) {
    if (g.isZero(0.0)) break;
    const Vector s = solve_linear(h, g);
    const double slope = g.dot(s);
    double t = 1.0;
    Vector trial = x - s;
    double f_trial = global_value(problem, trial);
    int halvings = 0;
    while (!(f_trial <= f - kC1 * t * slope) && halvings < kMaxHalvings) {
      t *= 0.5;
      trial = x - t * s;
      f_trial = global_value(problem, trial);
      ++halvings;
    }
    if (trial == x) break;  // step underflow: nothing left to gain
    increases = f_trial > f ? increases + 1 : 0;
    if (increases >= 5) throw NumericalError("exact Newton diverged: f increased on 5 consecutive iterations");
    x = detail::vec(net.broadcast(dense_of(trial), vshape, "model"));
    f = f_trial;
    gather(x, g, h);
    row(k + 1, x, f);
  }
  out.x = x;
  out.f = f;
  out.iterations = k;
  out.meter = net.meter();
  return out;
}

}  // namespace n3pc
