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
// Newton-3PC with bidirectional compression and partial participation.
//
// Each device keeps its own model estimate z_i, a stale point w_i and an
// estimator g_i tied to them by
//
//   g_i = ([H_i]_s + l_i I) w_i - grad f_i(w_i)
//
// so that the server's step x+ = ([H]_s + l I)^{-1} g is a stochastic-Newton
// step. Per round only a tau-subset of devices talks to the server; the rest
// keep their state frozen. A participating device flips its own coin xi_i:
// on xi_i = 1 it moves w_i to z_i and uploads the change of g_i, otherwise
// the server rebuilds that change from the Hessian and l updates alone.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "n3pc/solvers/common.hpp"

namespace n3pc {

namespace detail {

struct PartialDevice {
  WorkerState state;
  Vector grad_at_w;  // grad f_i(w_i), kept so xi_i = 0 rounds need no gradient
  std::optional<Matrix> last_hess;
  RngStream rng;
};

/// ([H]_s + l I) w - grad, the key-relation right-hand side.
inline Vector key_relation_rhs(const Matrix& h, double l, const Vector& w, const Vector& grad) {
  return symmetrize(h) * w + l * w - grad;
}

}  // namespace detail

inline RunResult run_newton_3pc_bc_pp(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                                      const Observer& observer = {}) {
  detail::check_config(problem, cfg);
  const int n = problem.n();
  const int tau = cfg.tau == 0 ? n : cfg.tau;
  const Eigen::Index d = problem.dim();
  const Shape vshape{d, 1}, mshape{d, d}, sshape{1, 1};
  validate(cfg.hessian_3pc, mshape);
  validate(cfg.master_3pc, vshape);
  if (!(cfg.mu > 0)) throw Error("Newton-3PC-BC-PP requires mu > 0");
  if (tau < 1 || tau > n) throw Error("Newton-3PC-BC-PP: tau must lie in [1, n]");
  if (!(cfg.grad_p > 0 && cfg.grad_p <= 1)) throw Error("Newton-3PC-BC-PP: grad_p must lie in (0, 1]");
  const bool send_coin = cfg.grad_p < 1.0;

  Network net(n);
  detail::Recorder rec(problem, ref, cfg);
  RunResult result;
  RngStream root(cfg.seed);
  RngStream sampler = root.split("participation");

  std::vector<detail::PartialDevice> devices(static_cast<std::size_t>(n));
  std::vector<RngStream> master_rng;
  ServerState server;
  server.x = cfg.x0;
  server.mirror.resize(static_cast<std::size_t>(n));
  Vector g_sum = Vector::Zero(d);
  double l_sum = 0.0;

  for (int i = 0; i < n; ++i) {
    auto& dev = devices[static_cast<std::size_t>(i)];
    dev.rng = root.split("device", static_cast<std::uint64_t>(i));
    master_rng.push_back(root.split("master", static_cast<std::uint64_t>(i)));
    const Vector grad = local_grad(problem, i, cfg.x0);
    const Matrix hx = local_hess(problem, i, cfg.x0);
    rec.grads++;
    rec.hessians++;
    dev.state.H = detail::initial_estimate(cfg, i, hx);
    dev.state.l = (symmetrize(dev.state.H) - hx).norm();
    dev.state.z = cfg.x0;
    dev.state.w = cfg.x0;
    dev.grad_at_w = grad;
    dev.state.g = detail::key_relation_rhs(dev.state.H, dev.state.l, dev.state.w, grad);
    dev.last_hess = hx;

    auto& mir = server.mirror[static_cast<std::size_t>(i)];
    mir.H = detail::receive_initial(net.send_up(i, detail::initial_message(dev.state.H), mshape, "hessian"), mshape);
    mir.l = detail::scalar(net.send_up(i, ScalarMsg{dev.state.l}, sshape, "scalar"));
    mir.g = detail::vec(net.send_up(i, dense_of(dev.state.g), vshape, "gradient"));
    mir.z = cfg.x0;
    mir.w = cfg.x0;
    g_sum += mir.g;
    l_sum += mir.l;
  }
  server.H = detail::mean_of(server.mirror, d);
  server.l = l_sum / n;
  server.grad = g_sum / static_cast<double>(n);

  std::vector<WorkerState> worker_view(static_cast<std::size_t>(n));
  std::vector<int> participants(net.all_devices().begin(), net.all_devices().end());
  auto notify = [&](int iter, bool any_hess) {
    if (!observer) return;
    for (int i = 0; i < n; ++i) worker_view[static_cast<std::size_t>(i)] = devices[static_cast<std::size_t>(i)].state;
    observer(Snapshot{iter, problem, server, worker_view, participants, any_hess});
  };

  double gap = rec.record(result.trace, 0, server.x, net.meter(), n, true);
  notify(0, true);
  int k = 0;
  for (; k < cfg.max_iter && !rec.reached(gap); ++k) {
    Vector x_next;
    try {
      Matrix reg = symmetrize(server.H);
      reg.diagonal().array() += server.l;
      x_next = solve_linear(reg, server.grad);
    } catch (const Error& e) {
      result.ok = false;
      result.error = std::string("iteration ") + std::to_string(k) + ": " + e.what();
      break;
    }
    participants = sample_subset(n, tau, sampler);
    const Matrix x_prev = server.x;
    const Matrix x_next_mat = x_next;

    Vector g_delta = Vector::Zero(d);
    double l_delta = 0.0;
    bool any_hess = false;
    for (int i : participants) {
      auto& dev = devices[static_cast<std::size_t>(i)];
      auto& mir = server.mirror[static_cast<std::size_t>(i)];
      const int one[] = {i};

      // server -> device i: compressed model
      ThreePCResult master =
          three_pc(cfg.master_3pc, Matrix(mir.z), x_prev, x_next_mat, master_rng[static_cast<std::size_t>(i)]);
      const Message model_msg = net.send_down(one, master.message, vshape, "model");
      mir.z = master.value;

      // device i
      dev.state.z = apply_3pc(cfg.master_3pc, Matrix(dev.state.z), model_msg);
      const Vector& z_dev = dev.state.z;
      std::optional<Matrix> hx;
      auto eval_x = [&]() -> Matrix {
        hx = local_hess(problem, i, z_dev);
        rec.hessians++;
        return *hx;
      };
      const Matrix& y = dev.last_hess ? *dev.last_hess : dev.state.H;
      ThreePCResult upd = three_pc(cfg.hessian_3pc, dev.state.H, y, eval_x, dev.rng);
      if (!hx) eval_x();  // l_i is always measured against the fresh Hessian
      any_hess = true;
      const double l_old = dev.state.l;
      const Vector g_old = dev.state.g;
      dev.state.H = std::move(upd.value);
      dev.state.l = (symmetrize(dev.state.H) - *hx).norm();
      dev.last_hess = std::move(*hx);
      const bool xi = dev.rng.bernoulli(cfg.grad_p);
      if (xi) {
        dev.state.w = z_dev;
        dev.grad_at_w = local_grad(problem, i, z_dev);
        rec.grads++;
      }
      dev.state.g = detail::key_relation_rhs(dev.state.H, dev.state.l, dev.state.w, dev.grad_at_w);

      // device i -> server
      const Matrix h_mir_old = mir.H;
      mir.H = apply_3pc(cfg.hessian_3pc, mir.H, net.send_up(i, upd.message, mshape, "hessian"));
      const double dl = detail::scalar(net.send_up(i, ScalarMsg{dev.state.l - l_old}, sshape, "scalar"));
      const bool xi_srv = send_coin ? net.send_flag_up(i, xi, "coin") : true;
      Vector dg;
      if (xi_srv) {
        mir.w = mir.z;
        dg = detail::vec(net.send_up(i, dense_of(Vector(dev.state.g - g_old)), vshape, "gradient"));
      } else {
        dg = symmetrize(mir.H - h_mir_old) * mir.w + dl * mir.w;
      }
      mir.l += dl;
      mir.g += dg;
      g_delta += dg;
      l_delta += dl;
    }

    server.x = x_next;
    server.grad += g_delta / static_cast<double>(n);
    server.l += l_delta / n;
    server.H = detail::mean_of(server.mirror, d);

    gap = rec.record(result.trace, k + 1, server.x, net.meter(), tau);
    notify(k + 1, any_hess);
  }
  result.iterations = k;
  rec.record(result.trace, k, server.x, net.meter(), k == 0 ? n : tau, true);
  result.x = server.x;
  result.meter = net.meter();
  return result;
}

}  // namespace n3pc
