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
// Command line front end.
//
//   n3pc_cli run <config.json> [--seed N] [--out DIR]
//   n3pc_cli compare <trace.csv>...
//   n3pc_cli verify-compressors [--trials N]
//   n3pc_cli selftest
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "n3pc/n3pc.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

int cmd_run(const std::string& path, const std::optional<std::uint64_t>& seed, const std::string& out) {
  n3pc::ExperimentConfig cfg;
  try {
    cfg = n3pc::load_config(path);
  } catch (const n3pc::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kInvalid;
  } catch (const n3pc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output = out;
  try {
    const n3pc::ExperimentResult r = n3pc::run_experiment(cfg);
    std::cout << r.summary;
    if (!r.run.ok) return kRuntime;
  } catch (const n3pc::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

int cmd_compare(const std::vector<std::string>& files) {
  std::vector<std::pair<std::string, n3pc::RunTrace>> traces;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) {
      std::cerr << "error: cannot open '" << f << "'\n";
      return kInvalid;
    }
    try {
      traces.emplace_back(f, n3pc::read_csv(in));
    } catch (const n3pc::Error& e) {
      std::cerr << "error: " << f << ": " << e.what() << '\n';
      return kInvalid;
    }
  }
  n3pc::print_comparison(std::cout, n3pc::compare_runs(traces));
  return kOk;
}

int cmd_verify(int trials) {
  using namespace n3pc;
  RngStream root(20240601);
  bool all = true;
  auto line = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << '\n';
    all = all && ok;
  };
  for (Eigen::Index d : {3, 10}) {
    const auto dd = static_cast<std::uint32_t>(d);
    const std::vector<ContractiveSpec> cs{TopK{dd}, RankR{1}, RandK{dd, false}, RandK{dd, true},
                                          AdaptiveThreshold{0.5}};
    for (const auto& c : cs) {
      RngStream rng = root.split(describe(c), static_cast<std::uint64_t>(d));
      const ContractiveReport rep = verify_contractive(c, d, trials, rng);
      line(rep.passed, "d=" + std::to_string(d) + " " + describe(c) + ": " + rep.detail);
    }
    const std::vector<ThreePCSpec> ms{
        EF21{TopK{dd}},
        LAG{1.0},
        CLAG{TopK{dd}, 0.0},
        CLAG{TopK{dd}, 1.0},
        CLAG{TopK{dd}, 2.0},
        CBAG{TopK{dd}, 0.25},
        CBAG{TopK{dd}, 0.75},
        CBAG{TopK{dd}, 1.0},
        AdaptiveTopK{1},
        Rotation{TopK{dd}, std::make_shared<const Matrix>(random_orthogonal(d, root))},
    };
    for (const auto& m : ms) {
      RngStream rng = root.split(describe(m), static_cast<std::uint64_t>(d));
      const ThreePCReport rep = verify_3pc(m, d, std::max(1, trials / 10), rng);
      line(rep.passed, "d=" + std::to_string(d) + " " + rep.detail);
    }
  }
  return all ? kOk : kRuntime;
}

// Central differences of the global objective, relative to the oracle.
double fd_grad_error(const n3pc::Problem& p, const n3pc::Vector& x) {
  const double h = 1e-6;
  const n3pc::Vector g = n3pc::global_grad(p, x);
  n3pc::Vector fd(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    n3pc::Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    fd(k) = (n3pc::global_value(p, a) - n3pc::global_value(p, b)) / (2 * h);
  }
  return (fd - g).norm() / std::max(1.0, g.norm());
}

double fd_hess_error(const n3pc::Problem& p, const n3pc::Vector& x) {
  const double h = 1e-5;
  const n3pc::Matrix hs = n3pc::global_hess(p, x);
  n3pc::Matrix fd(x.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    n3pc::Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    fd.col(k) = (n3pc::global_grad(p, a) - n3pc::global_grad(p, b)) / (2 * h);
  }
  return (fd - hs).norm() / std::max(1.0, hs.norm());
}

int cmd_selftest() {
  using namespace n3pc;
  bool all = true;
  auto line = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << '\n';
    all = all && ok;
  };
  try {
    Problem lr = gen_synthetic(0.5, 0.5, 8, 4, 30, 11, 1e-3);
    Problem sm = lr;
    sm.kind = ProblemKind::Softmax;
    sm.sigma = 0.7;
    sm = shift_softmax_data(sm);
    RngStream rng(5);
    double ge = 0, he = 0;
    for (int t = 0; t < 5; ++t) {
      Vector x(8);
      for (Eigen::Index k = 0; k < 8; ++k) x(k) = rng.normal();
      for (const Problem* p : {&lr, &sm}) {
        ge = std::max(ge, fd_grad_error(*p, x));
        he = std::max(he, fd_hess_error(*p, x));
      }
    }
    line(ge <= 1e-5, "gradient vs central differences, max rel error " + sci(ge));
    line(he <= 1e-5, "Hessian vs central differences, max rel error " + sci(he));
    const double g0 = global_grad(sm, Vector::Zero(8)).norm();
    line(g0 <= 1e-10, "shifted softmax gradient at 0: " + sci(g0));

    const ExactNewtonResult en = run_exact_newton(lr, Vector::Zero(8), 8);
    const Reference ref{en.x, en.f};
    SolverConfig cfg;
    cfg.x0 = Vector::Zero(8);
    cfg.mu = 1e-8;
    cfg.max_iter = 8;
    const RunResult n3 = run_newton_3pc(lr, cfg, ref);
    double dev = 0;
    {
      const ExactNewtonResult e = run_exact_newton(lr, cfg.x0, 8);
      dev = (e.x - n3.x).lpNorm<Eigen::Infinity>();
    }
    line(n3.ok && dev <= 1e-10, "identity 3PC matches exact Newton, max deviation " + sci(dev));

    cfg.hessian_3pc = EF21{RankR{1}};
    cfg.max_iter = 10;
    SolverConfig bc_cfg = cfg;
    bc_cfg.kind = SolverKind::N3PC_BC;
    const RunResult a = run_newton_3pc(lr, cfg, ref);
    const RunResult b = run_newton_3pc_bc(lr, bc_cfg, ref);
    line(to_csv(a.trace) == to_csv(b.trace), "BC with identity master and grad_p=1 reproduces the base trace");

    SolverConfig pp = cfg;
    pp.kind = SolverKind::N3PC_BC_PP;
    pp.mu = 1e-3;
    pp.tau = 2;
    pp.grad_p = 0.75;
    pp.master_3pc = EF21{TopK{4}};
    pp.seed = 3;
    double worst = 0;
    run_newton_3pc_bc_pp(lr, pp, ref, [&](const Snapshot& s) {
      for (int i = 0; i < lr.n(); ++i) {
        const auto& w = s.workers[static_cast<std::size_t>(i)];
        const Vector rhs = detail::key_relation_rhs(w.H, w.l, w.w, local_grad(lr, i, w.w));
        worst = std::max(worst, (w.g - rhs).lpNorm<Eigen::Infinity>() / std::max(1.0, rhs.lpNorm<Eigen::Infinity>()));
      }
    });
    line(worst <= 1e-12, "partial participation key relation, max deviation " + sci(worst));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return all ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Newton-3PC experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Config file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");

  std::vector<std::string> csvs;
  auto* compare = app.add_subcommand("compare", "Bytes to gap levels 1e-4..1e-10 for each trace");
  compare->add_option("csv", csvs, "Trace CSV files")->required();

  int trials = 1000;
  auto* verify = app.add_subcommand("verify-compressors", "Check compressors against their constants");
  verify->add_option("--trials", trials, "Random trials per compressor")->check(CLI::PositiveNumber);

  auto* selftest = app.add_subcommand("selftest", "Finite-difference and solver equivalence checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  if (*run) return cmd_run(config_path, *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt, out_dir);
  if (*compare) return cmd_compare(csvs);
  if (*verify) return cmd_verify(trials);
  if (*selftest) return cmd_selftest();
  return kInvalid;
}
