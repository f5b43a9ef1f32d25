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

#include <string>

#include "n3pc/solvers/bidirectional.hpp"
#include "n3pc/solvers/common.hpp"
#include "n3pc/solvers/exact_newton.hpp"
#include "n3pc/solvers/newton_3pc.hpp"
#include "n3pc/solvers/partial.hpp"

namespace n3pc {

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::N3PC: return "n3pc";
    case SolverKind::N3PC_BC: return "n3pc_bc";
    case SolverKind::N3PC_BC_PP: return "n3pc_bc_pp";
    case SolverKind::N3PC_CR: return "n3pc_cr";
    case SolverKind::N3PC_LS: return "n3pc_ls";
    case SolverKind::ExactNewton: return "exact_newton";
  }
  return "unknown";
}

/// Runs the solver selected by `cfg.kind`. Exact Newton uses `cfg.max_iter`
/// iterations and ignores the compression settings.
inline RunResult run_solver(const Problem& problem, const SolverConfig& cfg, const Reference& ref,
                            const Observer& observer = {}) {
  switch (cfg.kind) {
    case SolverKind::N3PC: return run_newton_3pc(problem, cfg, ref, observer);
    case SolverKind::N3PC_BC: return run_newton_3pc_bc(problem, cfg, ref, observer);
    case SolverKind::N3PC_BC_PP: return run_newton_3pc_bc_pp(problem, cfg, ref, observer);
    case SolverKind::N3PC_CR: return run_newton_3pc_cr(problem, cfg, ref, observer);
    case SolverKind::N3PC_LS: return run_newton_3pc_ls(problem, cfg, ref, observer);
    case SolverKind::ExactNewton: {
      RunResult r;
      try {
        ExactNewtonResult e = run_exact_newton(problem, cfg.x0, cfg.max_iter, &ref);
        r.trace = std::move(e.trace);
        r.x = std::move(e.x);
        r.iterations = e.iterations;
        r.meter = std::move(e.meter);
      } catch (const NumericalError& err) {
        r.ok = false;
        r.error = err.what();
        r.x = cfg.x0;
      }
      return r;
    }
  }
  throw Error("run_solver: unknown solver kind");
}

}  // namespace n3pc
