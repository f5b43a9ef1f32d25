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
// Newton-3PC with bidirectional compression. The server compresses the model
// stream with its own 3PC mechanism (z = model estimate held by all devices)
// and aggregates gradients only on rounds where a shared coin xi comes up 1;
// otherwise it extrapolates from the last aggregated gradient at w:
//
//   g = [H]_mu (z - w) + grad f(w)
//
// The coin is broadcast as a one-byte flag. When grad_p = 1 the coin is
// always 1, known to both sides, and is not transmitted.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "n3pc/solvers/common.hpp"

namespace n3pc {

inline RunResult run_newton_3pc_bc(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                                   const Observer& observer = {}) {
  detail::check_config(problem, cfg);
  const int n = problem.n();
  const Eigen::Index d = problem.dim();
  const Shape vshape{d, 1}, mshape{d, d};
  validate(cfg.hessian_3pc, mshape);
  validate(cfg.master_3pc, vshape);
  if (!(cfg.mu > 0)) throw Error("Newton-3PC-BC requires mu > 0");
  if (!(cfg.grad_p > 0 && cfg.grad_p <= 1)) throw Error("Newton-3PC-BC: grad_p must lie in (0, 1]");
  const bool send_coin = cfg.grad_p < 1.0;

  Network net(n);
  detail::Recorder rec(problem, ref, cfg);
  RunResult result;
  RngStream root(cfg.seed);
  RngStream server_rng = root.split("server");
  RngStream master_rng = root.split("master");

  std::vector<detail::LocalDevice> devices(static_cast<std::size_t>(n));
  ServerState server;
  server.x = cfg.x0;
  server.z = cfg.x0;
  server.w = cfg.x0;
  server.xi = true;
  server.mirror.resize(static_cast<std::size_t>(n));
  Vector grad_sum = Vector::Zero(d);

  for (int i = 0; i < n; ++i) {
    auto& dev = devices[static_cast<std::size_t>(i)];
    dev.rng = root.split("device", static_cast<std::uint64_t>(i));
    const Vector g = local_grad(problem, i, cfg.x0);
    const Matrix hx = local_hess(problem, i, cfg.x0);
    rec.grads++;
    rec.hessians++;
    dev.state.H = detail::initial_estimate(cfg, i, hx);
    dev.state.l = (dev.state.H - hx).norm();
    dev.state.z = cfg.x0;
    dev.state.w = cfg.x0;
    dev.last_hess = hx;

    auto& mir = server.mirror[static_cast<std::size_t>(i)];
    grad_sum += detail::vec(net.send_up(i, dense_of(g), vshape, "gradient"));
    mir.H = detail::receive_initial(net.send_up(i, detail::initial_message(dev.state.H), mshape, "hessian"), mshape);
  }
  // grad f(w) for the current stale point w
  Vector grad_at_w = grad_sum / static_cast<double>(n);
  server.grad = grad_at_w;
  server.H = detail::mean_of(server.mirror, d);

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
    // ---- server: model step, master compression, coin
    Vector x_next;
    try {
      x_next = server.z - solve_linear(project_psd_mu(server.H, cfg.mu), server.grad);
    } catch (const Error& e) {
      result.ok = false;
      result.error = std::string("iteration ") + std::to_string(k) + ": " + e.what();
      break;
    }
    const Matrix z_mat = server.z;
    const Matrix x_mat = server.x;
    ThreePCResult master = three_pc(cfg.master_3pc, z_mat, x_mat, Matrix(x_next), master_rng);
    const Message model_msg = net.broadcast(master.message, vshape, "model");
    const bool xi = send_coin ? net.send_flag_down(net.all_devices(), server_rng.bernoulli(cfg.grad_p), "coin")
                              : true;

    // ---- devices
    grad_sum.setZero();
    bool any_hess = false;
    for (int i = 0; i < n; ++i) {
      auto& dev = devices[static_cast<std::size_t>(i)];
      dev.state.z = apply_3pc(cfg.master_3pc, Matrix(dev.state.z), model_msg);
      const Vector& z_dev = dev.state.z;
      if (xi) {
        dev.state.w = z_dev;
        const Vector g = local_grad(problem, i, z_dev);
        rec.grads++;
        grad_sum += detail::vec(net.send_up(i, dense_of(g), vshape, "gradient"));
      }
      std::optional<Matrix> hx;
      auto eval_x = [&]() -> Matrix {
        hx = local_hess(problem, i, z_dev);
        rec.hessians++;
        return *hx;
      };
      const Matrix& y = dev.last_hess ? *dev.last_hess : dev.state.H;
      ThreePCResult upd = three_pc(cfg.hessian_3pc, dev.state.H, y, eval_x, dev.rng);
      dev.state.H = std::move(upd.value);
      if (hx) {
        dev.state.l = (dev.state.H - *hx).norm();
        dev.last_hess = std::move(*hx);
        any_hess = true;
      }
      auto& mir = server.mirror[static_cast<std::size_t>(i)];
      mir.H = apply_3pc(cfg.hessian_3pc, mir.H, net.send_up(i, upd.message, mshape, "hessian"));
    }

    // ---- server aggregation
    server.x = x_next;
    server.z = std::move(master.value);
    server.H = detail::mean_of(server.mirror, d);
    server.xi = xi;
    if (xi) {
      server.w = server.z;
      grad_at_w = grad_sum / static_cast<double>(n);
      server.grad = grad_at_w;
    } else {
      try {
        server.grad = project_psd_mu(server.H, cfg.mu) * (server.z - server.w) + grad_at_w;
      } catch (const Error& e) {
        result.ok = false;
        result.error = std::string("iteration ") + std::to_string(k) + ": " + e.what();
        ++k;
        rec.record(result.trace, k, server.x, net.meter(), n, true);
        break;
      }
    }

    gap = rec.record(result.trace, k + 1, server.x, net.meter(), n);
    notify(k + 1, any_hess);
  }
  result.iterations = k;
  rec.record(result.trace, k, server.x, net.meter(), n, true);
  result.x = server.x;
  result.meter = net.meter();
  return result;
}

}  // namespace n3pc
