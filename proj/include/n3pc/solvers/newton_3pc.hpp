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
// Newton-3PC and its globalized variants. All three share the device round:
// each device evaluates its gradient at the new model, updates its Hessian
// estimate with the 3PC mechanism (Y = Hessian at the previous model,
// X = Hessian at the new one) and uploads the gradient, the 3PC message and,
// when the server step needs it, l_i = |H_i - Hessian_i|_F. They differ only
// in the server step:
//
//   option 1      x+ = x - [H]_mu^{-1} grad
//   option 2      x+ = x - (H + l I)^{-1} grad
//   cubic         x+ = x + argmin_h <grad,h> + 1/2 <(H + l I)h,h> + M/6 |h|^3
//   line search   x+ = x + gamma d, d = -(H + l I)^{-1} grad, Armijo over a grid

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "n3pc/solvers/common.hpp"

namespace n3pc {

namespace detail {

enum class ServerStep { Option1, Option2, Cubic, LineSearch };

inline bool step_needs_l(ServerStep s) { return s != ServerStep::Option1; }

inline RunResult run_newton_3pc_family(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                                       ServerStep step, const Observer& observer) {
  check_config(problem, cfg);
  const int n = problem.n();
  const Eigen::Index d = problem.dim();
  const Shape vshape{d, 1}, mshape{d, d}, sshape{1, 1};
  validate(cfg.hessian_3pc, mshape);
  if (step == ServerStep::Option1 && !(cfg.mu > 0)) throw Error("Newton-3PC option 1 requires mu > 0");
  if (step == ServerStep::Cubic && !(cfg.cubic_M > 0)) throw Error("Newton-3PC-CR requires cubic_M > 0");
  if (step == ServerStep::LineSearch) {
    if (cfg.ls_grid.empty()) throw Error("line search grid is empty");
    for (double g : cfg.ls_grid)
      if (!(g > 0 && g <= 1)) throw Error("line search grid values must lie in (0, 1]");
  }
  const bool need_l = step_needs_l(step);

  Network net(n);
  Recorder rec(problem, ref, cfg);
  RunResult result;
  RngStream root(cfg.seed);

  std::vector<LocalDevice> devices(static_cast<std::size_t>(n));
  ServerState server;
  server.x = cfg.x0;
  server.mirror.resize(static_cast<std::size_t>(n));
  Vector grad_sum = Vector::Zero(d);
  double l_sum = 0.0, value_sum = 0.0;

  // Initialization: every device computes its gradient and Hessian at x0 and
  // ships gradient, H_i^0 and (if used) l_i^0.
  for (int i = 0; i < n; ++i) {
    auto& dev = devices[static_cast<std::size_t>(i)];
    dev.rng = root.split("device", static_cast<std::uint64_t>(i));
    const Vector g = local_grad(problem, i, cfg.x0);
    const Matrix hx = local_hess(problem, i, cfg.x0);
    rec.grads++;
    rec.hessians++;
    dev.state.H = initial_estimate(cfg, i, hx);
    dev.state.l = (dev.state.H - hx).norm();
    dev.last_hess = hx;

    auto& mir = server.mirror[static_cast<std::size_t>(i)];
    grad_sum += vec(net.send_up(i, dense_of(g), vshape, "gradient"));
    mir.H = receive_initial(net.send_up(i, initial_message(dev.state.H), mshape, "hessian"), mshape);
    if (need_l) {
      mir.l = scalar(net.send_up(i, ScalarMsg{dev.state.l}, sshape, "scalar"));
      l_sum += mir.l;
    }
    if (step == ServerStep::LineSearch) {
      value_sum += scalar(net.send_up(i, ScalarMsg{local_value(problem, i, cfg.x0)}, sshape, "value"));
    }
  }
  server.grad = grad_sum / static_cast<double>(n);
  server.H = mean_of(server.mirror, d);
  server.l = l_sum / n;
  double server_f = value_sum / n;

  std::vector<WorkerState> worker_view(static_cast<std::size_t>(n));
  auto notify = [&](int iter, bool any_hess) {
    if (!observer) return;
    for (int i = 0; i < n; ++i) worker_view[static_cast<std::size_t>(i)] = devices[static_cast<std::size_t>(i)].state;
    observer(Snapshot{iter, problem, server, worker_view, net.all_devices(), any_hess});
  };

  double gap = rec.record(result.trace, 0, server.x, net.meter(), n, true);
  notify(0, true);
  int k = 0;
  for (; k < cfg.max_iter && !rec.reached(gap); ++k) {
    // ---- server step
    Vector x_next;
    std::optional<double> f_next;
    try {
      switch (step) {
        case ServerStep::Option1:
          x_next = server.x - solve_linear(project_psd_mu(server.H, cfg.mu), server.grad);
          break;
        case ServerStep::Option2: {
          Matrix reg = symmetrize(server.H);
          reg.diagonal().array() += server.l;
          x_next = server.x - solve_linear(reg, server.grad);
          break;
        }
        case ServerStep::Cubic: {
          Matrix reg = symmetrize(server.H);
          reg.diagonal().array() += server.l;
          x_next = server.x + solve_cubic_step(server.grad, reg, cfg.cubic_M);
          break;
        }
        case ServerStep::LineSearch: {
          Matrix reg = symmetrize(server.H);
          reg.diagonal().array() += server.l;
          const Vector dir = -solve_linear(reg, server.grad);
          const double slope = server.grad.dot(dir);
          const Vector dir_dev = vec(net.broadcast(dense_of(dir), vshape, "direction"));
          double gamma = cfg.ls_grid.back();
          double f_trial = 0.0;
          for (double cand : cfg.ls_grid) {
            const double gam = scalar(net.broadcast(ScalarMsg{cand}, sshape, "stepsize"));
            double fs = 0.0;
            for (int i = 0; i < n; ++i) {
              const Vector trial = server.x + gam * dir_dev;
              fs += scalar(net.send_up(i, ScalarMsg{local_value(problem, i, trial)}, sshape, "value"));
            }
            f_trial = fs / n;
            gamma = gam;
            if (f_trial <= server_f + cfg.ls_c1 * gam * slope) break;
          }
          x_next = server.x + gamma * dir_dev;
          f_next = f_trial;
          break;
        }
      }
    } catch (const Error& e) {
      result.ok = false;
      result.error = std::string("iteration ") + std::to_string(k) + ": " + e.what();
      break;
    }
    if (step != ServerStep::LineSearch) {
      x_next = vec(net.broadcast(dense_of(x_next), vshape, "model"));
    }

    // ---- device round
    grad_sum.setZero();
    l_sum = 0.0;
    bool any_hess = false;
    for (int i = 0; i < n; ++i) {
      auto& dev = devices[static_cast<std::size_t>(i)];
      const Vector g = local_grad(problem, i, x_next);
      rec.grads++;
      std::optional<Matrix> hx;
      auto eval_x = [&]() -> Matrix {
        hx = local_hess(problem, i, x_next);
        rec.hessians++;
        return *hx;
      };
      const Matrix& y = dev.last_hess ? *dev.last_hess : dev.state.H;
      ThreePCResult upd = three_pc(cfg.hessian_3pc, dev.state.H, y, eval_x, dev.rng);
      dev.state.H = std::move(upd.value);
      if (need_l) {
        if (!hx) eval_x();
        dev.state.l = (dev.state.H - *hx).norm();
      }
      if (hx) {
        dev.last_hess = std::move(*hx);
        any_hess = true;
      }

      auto& mir = server.mirror[static_cast<std::size_t>(i)];
      grad_sum += vec(net.send_up(i, dense_of(g), vshape, "gradient"));
      mir.H = apply_3pc(cfg.hessian_3pc, mir.H, net.send_up(i, upd.message, mshape, "hessian"));
      if (need_l) {
        mir.l = scalar(net.send_up(i, ScalarMsg{dev.state.l}, sshape, "scalar"));
        l_sum += mir.l;
      }
    }
    server.x = x_next;
    server.grad = grad_sum / static_cast<double>(n);
    server.H = mean_of(server.mirror, d);
    server.l = l_sum / n;
    if (f_next) server_f = *f_next;

    gap = rec.record(result.trace, k + 1, server.x, net.meter(), n);
    notify(k + 1, any_hess);
  }
  result.iterations = k;
  rec.record(result.trace, k, server.x, net.meter(), n, true);
  result.x = server.x;
  result.meter = net.meter();
  return result;
}

}  // namespace detail

/// Newton-3PC with the global update chosen by `cfg.option` (1 or 2).
inline RunResult run_newton_3pc(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                                const Observer& observer = {}) {
  if (cfg.option != 1 && cfg.option != 2) throw Error("Newton-3PC: option must be 1 or 2");
  return detail::run_newton_3pc_family(problem, cfg, ref,
                                       cfg.option == 1 ? detail::ServerStep::Option1 : detail::ServerStep::Option2,
                                       observer);
}

/// Newton-3PC with cubic regularization (constant `cfg.cubic_M`).
inline RunResult run_newton_3pc_cr(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                                   const Observer& observer = {}) {
  return detail::run_newton_3pc_family(problem, cfg, ref, detail::ServerStep::Cubic, observer);
}

/// Newton-3PC with Armijo backtracking over `cfg.ls_grid` (largest accepted
/// step, smallest grid value if none is accepted).
inline RunResult run_newton_3pc_ls(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                                   const Observer& observer = {}) {
  return detail::run_newton_3pc_family(problem, cfg, ref, detail::ServerStep::LineSearch, observer);
}

}  // namespace n3pc
