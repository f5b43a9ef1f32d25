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

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "n3pc/compressors.hpp"
#include "n3pc/matcore.hpp"
#include "n3pc/objectives.hpp"
#include "n3pc/rng.hpp"
#include "n3pc/simnet.hpp"
#include "n3pc/trace.hpp"

namespace n3pc {

enum class SolverKind { N3PC, N3PC_BC, N3PC_BC_PP, N3PC_CR, N3PC_LS, ExactNewton };
enum class H0Mode { ExactAtX0, Zero, Custom };

inline std::vector<double> default_ls_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 10; ++k) g.push_back(std::ldexp(1.0, -k));
  return g;
}

struct SolverConfig {
  SolverKind kind = SolverKind::N3PC;
  int option = 1;  // N3PC global update: 1 = projection [H]_mu, 2 = H + l I
  ThreePCSpec hessian_3pc = Identity3PC{};
  ThreePCSpec master_3pc = Identity3PC{};  // BC / PP model compression
  double grad_p = 1.0;                     // BC / PP gradient aggregation probability
  int tau = 0;                             // PP participants per round; 0 means n
  double mu = 0.0;
  double cubic_M = 1.0;
  std::vector<double> ls_grid = default_ls_grid();
  double ls_c1 = 1e-4;
  int max_iter = 100;
  Vector x0;
  H0Mode h0_mode = H0Mode::ExactAtX0;
  std::vector<Matrix> h0_custom;
  std::optional<double> gap_target;  // stop once f(x) - f* <= target
  int record_every = 1;
  std::uint64_t seed = 0;
};

/// Reference optimum used for the gap columns.
struct Reference {
  Vector x_star;
  double f_star = 0.0;
};

/// Per-device algorithm state. The server keeps a mirror of the same record
/// per device, rebuilt only from decoded messages.
struct WorkerState {
  Matrix H;     // local Hessian estimate H_i
  double l = 0; // compression error
  Vector w;     // stale model (BC / PP)
  Vector z;     // model estimate (PP)
  Vector g;     // gradient-style estimator (PP)
};

struct ServerState {
  Vector x;
  Matrix H;
  double l = 0.0;
  Vector grad;  // aggregated gradient at x (N3PC family) or g^k (BC / PP)
  Vector z;
  Vector w;
  bool xi = true;
  std::vector<WorkerState> mirror;
};

struct Snapshot {
  int iter = 0;
  const Problem& problem;
  const ServerState& server;
  std::span<const WorkerState> workers;
  std::span<const int> participants;
  bool hessian_computed_any = false;
};

using Observer = std::function<void(const Snapshot&)>;

struct RunResult {
  RunTrace trace;
  Vector x;
  int iterations = 0;
  bool ok = true;
  std::string error;
  ByteMeter meter;
};

namespace detail {

struct LocalDevice {
  WorkerState state;
  std::optional<Matrix> last_hess;  // exact local Hessian at the latest point it was computed for
  RngStream rng;
};

inline void check_config(const Problem& p, const SolverConfig& c) {
  if (p.n() < 1) throw Error("solver: problem has no devices");
  if (c.x0.size() != p.dim()) throw Error("solver: x0 dimension does not match the problem");
  if (c.max_iter < 0) throw Error("solver: max_iter must be >= 0");
  if (c.record_every < 1) throw Error("solver: record_every must be >= 1");
  if (c.h0_mode == H0Mode::Custom && static_cast<int>(c.h0_custom.size()) != p.n())
    throw Error("solver: custom H0 needs one matrix per device");
}

/// Builds trace rows from the running counters.
class Recorder {
 public:
  Recorder(const Problem& p, const Reference& ref, const SolverConfig& cfg) : p_(p), ref_(ref), cfg_(cfg) {}

  std::uint64_t hessians = 0;
  std::uint64_t grads = 0;

  /// Records row `iter` (subject to thinning unless `force`). Returns the
  /// current gap.
  double record(RunTrace& t, int iter, const Vector& x, const ByteMeter& m, int participated, bool force = false) {
    const double gap = global_value(p_, x) - ref_.f_star;
    if (force || iter % cfg_.record_every == 0) {
      TraceRow r;
      r.iter = iter;
      r.f_gap = gap;
      r.dist_sq = ref_.x_star.size() == x.size() ? (x - ref_.x_star).squaredNorm() : 0.0;
      r.bytes_up_cum = m.uplink_total;
      r.bytes_down_cum = m.downlink_total;
      r.hessians_computed_cum = hessians;
      r.grads_computed_cum = grads;
      r.participated = participated;
      if (t.rows.empty() || t.rows.back().iter != iter) t.rows.push_back(r);
    }
    return gap;
  }

  [[nodiscard]] bool reached(double gap) const { return cfg_.gap_target && gap <= *cfg_.gap_target; }

 private:
  const Problem& p_;
  const Reference& ref_;
  const SolverConfig& cfg_;
};

inline Matrix mean_of(std::span<const WorkerState> ws, Eigen::Index d) {
  Matrix s = Matrix::Zero(d, d);
  for (const auto& w : ws) s += w.H;
  return s / static_cast<double>(ws.size());
}

inline Matrix initial_estimate(const SolverConfig& cfg, int i, const Matrix& exact) {
  switch (cfg.h0_mode) {
    case H0Mode::ExactAtX0:
      return exact;
    case H0Mode::Zero:
      return Matrix::Zero(exact.rows(), exact.cols());
    case H0Mode::Custom:
      return cfg.h0_custom[static_cast<std::size_t>(i)];
  }
  return exact;
}

/// Initial estimate as sent on the wire: dense unless it is all zeros.
inline Message initial_message(const Matrix& h) {
  if (h.isZero(0.0)) return SkipMsg{};
  return dense_of(h);
}

inline Matrix receive_initial(const Message& m, Shape shape) {
  return materialize(m, shape);
}

inline Vector vec(const Message& m) { return vector_of(std::get<DenseMsg>(m)); }
inline double scalar(const Message& m) { return std::get<ScalarMsg>(m).value; }

}  // namespace detail
}  // namespace n3pc
