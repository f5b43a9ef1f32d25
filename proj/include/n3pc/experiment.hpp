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
// Config-driven experiments: JSON config -> problem + solver -> trace CSV and
// a summary. Validation collects every problem with its JSON path before
// anything runs. Sizes that depend on the problem dimension ("d", "d/2") are
// resolved once the problem is built.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "n3pc/dataio.hpp"
#include "n3pc/solvers.hpp"

namespace n3pc {

/// All validation problems of a config, each prefixed with its JSON path.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> issues) : Error(join(issues)), issues_(std::move(issues)) {}
  [[nodiscard]] const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid config:";
    for (const auto& i : v) s += "\n  " + i;
    return s;
  }
  std::vector<std::string> issues_;
};

/// Built-in dataset name that selects the census-shaped surrogate.
inline constexpr const char* kBuiltinCensus = "builtin:census_like";

struct SyntheticSpec {
  double alpha = 0.0;
  double beta = 0.0;
  int d = 0;
  int m = 0;
  std::uint64_t seed = 0;
};

struct ProblemSpec {
  std::optional<std::string> dataset;
  std::optional<SyntheticSpec> synthetic;
  ProblemKind kind = ProblemKind::LogReg;
  double lambda = 0.0;
  double sigma = 1.0;
  int n = 0;
  std::optional<std::uint32_t> dim;
  std::uint64_t split_seed = 0;
  bool shift = true;
};

/// A raw JSON 3PC or compressor description, checked structurally at parse
/// time and turned into a spec once the dimension is known.
struct MechanismText {
  nlohmann::json body;
  std::string path;
};

struct ExperimentConfig {
  ProblemSpec problem;
  SolverKind kind = SolverKind::N3PC;
  int option = 1;
  MechanismText hessian_3pc{nlohmann::json{{"type", "identity"}}, "solver.hessian_3pc"};
  MechanismText master_3pc{nlohmann::json{{"type", "identity"}}, "solver.master_3pc"};
  double grad_p = 1.0;
  std::optional<int> tau;
  std::optional<double> mu;
  double cubic_M = 1.0;
  std::vector<double> ls_grid = default_ls_grid();
  double ls_c1 = 1e-4;
  int max_iter = 100;
  nlohmann::json x0 = "zeros";
  H0Mode h0_mode = H0Mode::ExactAtX0;
  std::uint64_t seed = 0;
  std::string output;
  std::optional<double> gap_target;
  int record_every = 1;
  int reference_iters = 20;
  std::string cache_dir = ".n3pc-cache";
};

namespace detail {

class Checker {
 public:
  std::vector<std::string> issues;

  void fail(const std::string& path, const std::string& msg) { issues.push_back(path + ": " + msg); }

  void only_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) fail(join(path, it.key()), "unknown key");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  const nlohmann::json* object(const nlohmann::json& parent, const std::string& path, const char* key,
                               bool required) {
    if (!parent.contains(key)) {
      if (required) fail(join(path, key), "missing required field");
      return nullptr;
    }
    const auto& v = parent.at(key);
    if (!v.is_object()) {
      fail(join(path, key), "expected an object");
      return nullptr;
    }
    return &v;
  }

  std::optional<double> number(const nlohmann::json& parent, const std::string& path, const char* key, bool required) {
    if (!parent.contains(key)) {
      if (required) fail(join(path, key), "missing required field");
      return std::nullopt;
    }
    const auto& v = parent.at(key);
    if (!v.is_number()) {
      fail(join(path, key), "expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<std::int64_t> integer(const nlohmann::json& parent, const std::string& path, const char* key,
                                      bool required) {
    if (!parent.contains(key)) {
      if (required) fail(join(path, key), "missing required field");
      return std::nullopt;
    }
    const auto& v = parent.at(key);
    if (!v.is_number_integer()) {
      fail(join(path, key), "expected an integer");
      return std::nullopt;
    }
    return v.get<std::int64_t>();
  }

  std::optional<std::string> string(const nlohmann::json& parent, const std::string& path, const char* key,
                                    bool required) {
    if (!parent.contains(key)) {
      if (required) fail(join(path, key), "missing required field");
      return std::nullopt;
    }
    const auto& v = parent.at(key);
    if (!v.is_string()) {
      fail(join(path, key), "expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<bool> boolean(const nlohmann::json& parent, const std::string& path, const char* key) {
    if (!parent.contains(key)) return std::nullopt;
    const auto& v = parent.at(key);
    if (!v.is_boolean()) {
      fail(join(path, key), "expected true or false");
      return std::nullopt;
    }
    return v.get<bool>();
  }

  /// A size: positive integer, "d" or "d/2".
  void size_field(const nlohmann::json& parent, const std::string& path, const char* key) {
    if (!parent.contains(key)) {
      fail(join(path, key), "missing required field");
      return;
    }
    const auto& v = parent.at(key);
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 1) fail(join(path, key), "must be >= 1");
    } else if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s != "d" && s != "d/2") fail(join(path, key), "expected a positive integer, \"d\" or \"d/2\"");
    } else {
      fail(join(path, key), "expected a positive integer, \"d\" or \"d/2\"");
    }
  }

  void compressor(const nlohmann::json& c, const std::string& path) {
    if (!c.is_object()) {
      fail(path, "expected an object");
      return;
    }
    const auto type = string(c, path, "type", true);
    if (!type) return;
    if (*type == "topk") {
      only_keys(c, path, {"type", "k"});
      size_field(c, path, "k");
    } else if (*type == "rankr") {
      only_keys(c, path, {"type", "r"});
      size_field(c, path, "r");
    } else if (*type == "randk") {
      only_keys(c, path, {"type", "k", "scaled"});
      size_field(c, path, "k");
      if (boolean(c, path, "scaled").value_or(false))
        fail(join(path, "scaled"), "scaled Rand-K is not contractive and cannot drive a 3PC mechanism");
    } else if (*type == "threshold") {
      only_keys(c, path, {"type", "lambda"});
      if (auto l = number(c, path, "lambda", true); l && !(*l > 0 && *l <= 1)) fail(join(path, "lambda"), "must lie in (0, 1]");
    } else if (*type == "identity") {
      only_keys(c, path, {"type"});
    } else {
      fail(join(path, "type"), "unknown compressor '" + *type + "' (topk, rankr, randk, threshold, identity)");
    }
  }

  void mechanism(const nlohmann::json& m, const std::string& path) {
    if (!m.is_object()) {
      fail(path, "expected an object");
      return;
    }
    const auto type = string(m, path, "type", true);
    if (!type) return;
    auto inner = [&] {
      if (!m.contains("compressor")) fail(join(path, "compressor"), "missing required field");
      else compressor(m.at("compressor"), join(path, "compressor"));
    };
    if (*type == "ef21") {
      only_keys(m, path, {"type", "compressor"});
      inner();
    } else if (*type == "lag") {
      only_keys(m, path, {"type", "zeta"});
      if (auto z = number(m, path, "zeta", true); z && *z < 0) fail(join(path, "zeta"), "must be >= 0");
    } else if (*type == "clag") {
      only_keys(m, path, {"type", "compressor", "zeta"});
      inner();
      if (auto z = number(m, path, "zeta", true); z && *z < 0) fail(join(path, "zeta"), "must be >= 0");
    } else if (*type == "cbag") {
      only_keys(m, path, {"type", "compressor", "p"});
      inner();
      if (auto p = number(m, path, "p", true); p && !(*p > 0 && *p <= 1)) fail(join(path, "p"), "must lie in (0, 1]");
    } else if (*type == "adaptive_topk") {
      only_keys(m, path, {"type", "d0"});
      size_field(m, path, "d0");
    } else if (*type == "rotation") {
      only_keys(m, path, {"type", "compressor", "basis", "basis_seed"});
      inner();
      if (auto b = string(m, path, "basis", false); b && *b != "identity" && *b != "random")
        fail(join(path, "basis"), "expected \"identity\" or \"random\"");
      integer(m, path, "basis_seed", false);
    } else if (*type == "identity") {
      only_keys(m, path, {"type"});
    } else {
      fail(join(path, "type"),
           "unknown 3PC mechanism '" + *type + "' (ef21, lag, clag, cbag, adaptive_topk, rotation, identity)");
    }
  }
};

inline std::uint32_t resolve_size(const nlohmann::json& v, Eigen::Index d) {
  if (v.is_string()) return static_cast<std::uint32_t>(v.get<std::string>() == "d" ? d : std::max<Eigen::Index>(1, d / 2));
  return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

inline ContractiveSpec resolve_compressor(const nlohmann::json& c, Eigen::Index d) {
  const auto type = c.at("type").get<std::string>();
  if (type == "topk") return TopK{resolve_size(c.at("k"), d)};
  if (type == "rankr") return RankR{resolve_size(c.at("r"), d)};
  if (type == "randk") return RandK{resolve_size(c.at("k"), d), false};
  if (type == "threshold") return AdaptiveThreshold{c.at("lambda").get<double>()};
  return IdentityCompressor{};
}

inline ThreePCSpec resolve_mechanism(const nlohmann::json& m, Eigen::Index d, Eigen::Index basis_dim,
                                     std::uint64_t seed) {
  const auto type = m.at("type").get<std::string>();
  auto inner = [&] { return resolve_compressor(m.at("compressor"), d); };
  if (type == "ef21") return EF21{inner()};
  if (type == "lag") return LAG{m.at("zeta").get<double>()};
  if (type == "clag") return CLAG{inner(), m.at("zeta").get<double>()};
  if (type == "cbag") return CBAG{inner(), m.at("p").get<double>()};
  if (type == "adaptive_topk") return AdaptiveTopK{resolve_size(m.at("d0"), d)};
  if (type == "rotation") {
    const std::string basis = m.value("basis", std::string("identity"));
    std::shared_ptr<const Matrix> q;
    if (basis == "random") {
      RngStream rng = RngStream(m.value("basis_seed", static_cast<std::int64_t>(seed))).split("rotation");
      q = std::make_shared<const Matrix>(random_orthogonal(basis_dim, rng));
    } else {
      q = std::make_shared<const Matrix>(Matrix::Identity(basis_dim, basis_dim));
    }
    return Rotation{inner(), q};
  }
  return Identity3PC{};
}

inline std::optional<SolverKind> parse_kind(const std::string& s) {
  for (SolverKind k : {SolverKind::N3PC, SolverKind::N3PC_BC, SolverKind::N3PC_BC_PP, SolverKind::N3PC_CR,
                       SolverKind::N3PC_LS, SolverKind::ExactNewton})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

}  // namespace detail

/// Parses and validates a JSON config. Throws ConfigError listing every
/// problem found.
inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("<root>: malformed JSON: ") + e.what()});
  }
  detail::Checker ck;
  ExperimentConfig cfg;
  if (!root.is_object()) throw ConfigError({"<root>: expected an object"});
  ck.only_keys(root, "",
               {"problem", "solver", "seed", "output", "gap_target", "record_every", "reference_iters", "cache_dir"});

  if (const auto* p = ck.object(root, "", "problem", true)) {
    ck.only_keys(*p, "problem", {"dataset", "synthetic", "kind", "lambda", "sigma", "n", "dim", "split_seed", "shift"});
    auto& ps = cfg.problem;
    const bool has_ds = p->contains("dataset"), has_syn = p->contains("synthetic");
    if (has_ds == has_syn) ck.fail("problem", "exactly one of 'dataset' and 'synthetic' must be given");
    ps.dataset = ck.string(*p, "problem", "dataset", false);
    if (const auto* s = ck.object(*p, "problem", "synthetic", false)) {
      ck.only_keys(*s, "problem.synthetic", {"alpha", "beta", "d", "m", "seed"});
      SyntheticSpec syn;
      syn.alpha = ck.number(*s, "problem.synthetic", "alpha", true).value_or(0.0);
      syn.beta = ck.number(*s, "problem.synthetic", "beta", true).value_or(0.0);
      syn.d = static_cast<int>(ck.integer(*s, "problem.synthetic", "d", true).value_or(1));
      syn.m = static_cast<int>(ck.integer(*s, "problem.synthetic", "m", true).value_or(1));
      syn.seed = static_cast<std::uint64_t>(ck.integer(*s, "problem.synthetic", "seed", false).value_or(0));
      if (syn.alpha < 0) ck.fail("problem.synthetic.alpha", "must be >= 0");
      if (syn.beta < 0) ck.fail("problem.synthetic.beta", "must be >= 0");
      if (syn.d < 1) ck.fail("problem.synthetic.d", "must be >= 1");
      if (syn.m < 1) ck.fail("problem.synthetic.m", "must be >= 1");
      ps.synthetic = syn;
    }
    if (auto k = ck.string(*p, "problem", "kind", false)) {
      if (*k == "logreg") ps.kind = ProblemKind::LogReg;
      else if (*k == "softmax") ps.kind = ProblemKind::Softmax;
      else ck.fail("problem.kind", "expected \"logreg\" or \"softmax\"");
    }
    if (auto l = ck.number(*p, "problem", "lambda", true)) {
      ps.lambda = *l;
      if (!(*l > 0)) ck.fail("problem.lambda", "must be > 0");
    }
    if (auto s = ck.number(*p, "problem", "sigma", false)) {
      ps.sigma = *s;
      if (!(*s > 0)) ck.fail("problem.sigma", "must be > 0");
    }
    if (auto n = ck.integer(*p, "problem", "n", true)) {
      ps.n = static_cast<int>(*n);
      if (*n < 1) ck.fail("problem.n", "must be >= 1");
    }
    if (auto d = ck.integer(*p, "problem", "dim", false)) {
      if (*d < 1) ck.fail("problem.dim", "must be >= 1");
      else ps.dim = static_cast<std::uint32_t>(*d);
    }
    ps.split_seed = static_cast<std::uint64_t>(ck.integer(*p, "problem", "split_seed", false).value_or(0));
    ps.shift = ck.boolean(*p, "problem", "shift").value_or(true);
  }

  if (const auto* s = ck.object(root, "", "solver", true)) {
    ck.only_keys(*s, "solver",
                 {"kind", "option", "hessian_3pc", "master_3pc", "grad_p", "tau", "mu", "cubic_M", "ls_grid", "ls_c1",
                  "max_iter", "x0", "h0"});
    if (auto k = ck.string(*s, "solver", "kind", true)) {
      if (auto kind = detail::parse_kind(*k)) cfg.kind = *kind;
      else ck.fail("solver.kind", "unknown solver '" + *k + "' (n3pc, n3pc_bc, n3pc_bc_pp, n3pc_cr, n3pc_ls, exact_newton)");
    }
    if (auto o = ck.integer(*s, "solver", "option", false)) {
      cfg.option = static_cast<int>(*o);
      if (*o != 1 && *o != 2) ck.fail("solver.option", "must be 1 or 2");
    }
    if (s->contains("hessian_3pc")) {
      cfg.hessian_3pc.body = s->at("hessian_3pc");
      ck.mechanism(cfg.hessian_3pc.body, "solver.hessian_3pc");
    }
    if (s->contains("master_3pc")) {
      cfg.master_3pc.body = s->at("master_3pc");
      ck.mechanism(cfg.master_3pc.body, "solver.master_3pc");
      if (cfg.master_3pc.body.is_object() && cfg.master_3pc.body.value("type", "") == "rankr")
        ck.fail("solver.master_3pc", "rank compression does not apply to the model vector");
    }
    if (auto p = ck.number(*s, "solver", "grad_p", false)) {
      cfg.grad_p = *p;
      if (!(*p > 0 && *p <= 1)) ck.fail("solver.grad_p", "must lie in (0, 1]");
    }
    if (auto t = ck.integer(*s, "solver", "tau", false)) {
      cfg.tau = static_cast<int>(*t);
      if (*t < 1 || *t > cfg.problem.n) ck.fail("solver.tau", "must lie in [1, problem.n]");
    }
    if (auto mu = ck.number(*s, "solver", "mu", false)) {
      cfg.mu = *mu;
      if (!(*mu > 0)) ck.fail("solver.mu", "must be > 0");
    }
    if (auto m = ck.number(*s, "solver", "cubic_M", false)) {
      cfg.cubic_M = *m;
      if (!(*m > 0)) ck.fail("solver.cubic_M", "must be > 0");
    }
    if (s->contains("ls_grid")) {
      const auto& g = s->at("ls_grid");
      if (!g.is_array() || g.empty()) {
        ck.fail("solver.ls_grid", "expected a nonempty array of numbers");
      } else {
        cfg.ls_grid.clear();
        for (std::size_t k = 0; k < g.size(); ++k) {
          const std::string path = "solver.ls_grid[" + std::to_string(k) + "]";
          if (!g[k].is_number()) {
            ck.fail(path, "expected a number");
            continue;
          }
          const double v = g[k].get<double>();
          if (!(v > 0 && v <= 1)) ck.fail(path, "must lie in (0, 1]");
          cfg.ls_grid.push_back(v);
        }
      }
    }
    if (auto c1 = ck.number(*s, "solver", "ls_c1", false)) {
      cfg.ls_c1 = *c1;
      if (!(*c1 > 0 && *c1 < 1)) ck.fail("solver.ls_c1", "must lie in (0, 1)");
    }
    if (auto mi = ck.integer(*s, "solver", "max_iter", false)) {
      cfg.max_iter = static_cast<int>(*mi);
      if (*mi < 0) ck.fail("solver.max_iter", "must be >= 0");
    }
    if (s->contains("x0")) {
      const auto& x = s->at("x0");
      const bool ok = (x.is_string() && (x == "zeros" || x == "ones")) || x.is_number() ||
                      (x.is_array() && std::all_of(x.begin(), x.end(), [](const auto& e) { return e.is_number(); }));
      if (!ok) ck.fail("solver.x0", "expected \"zeros\", \"ones\", a number or an array of numbers");
      cfg.x0 = x;
    }
    if (auto h = ck.string(*s, "solver", "h0", false)) {
      if (*h == "exact") cfg.h0_mode = H0Mode::ExactAtX0;
      else if (*h == "zero") cfg.h0_mode = H0Mode::Zero;
      else ck.fail("solver.h0", "expected \"exact\" or \"zero\"");
    }
  }

  cfg.seed = static_cast<std::uint64_t>(ck.integer(root, "", "seed", false).value_or(0));
  cfg.output = ck.string(root, "", "output", false).value_or("");
  if (auto g = ck.number(root, "", "gap_target", false)) {
    cfg.gap_target = *g;
    if (!(*g > 0)) ck.fail("gap_target", "must be > 0");
  }
  if (auto r = ck.integer(root, "", "record_every", false)) {
    cfg.record_every = static_cast<int>(*r);
    if (*r < 1) ck.fail("record_every", "must be >= 1");
  }
  if (auto r = ck.integer(root, "", "reference_iters", false)) {
    cfg.reference_iters = static_cast<int>(*r);
    if (*r < 1) ck.fail("reference_iters", "must be >= 1");
  }
  if (auto c = ck.string(root, "", "cache_dir", false)) cfg.cache_dir = *c;

  if (!ck.issues.empty()) throw ConfigError(std::move(ck.issues));
  return cfg;
}

/// Same as parse_config; named for the validation step of the CLI.
inline ExperimentConfig validate_config(const std::string& text) { return parse_config(text); }

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Builds the problem described by `spec`. Dataset files that cannot be read
/// raise Error; malformed contents raise FormatError.
inline Problem build_problem(const ProblemSpec& spec) {
  Problem p;
  p.kind = spec.kind;
  p.lambda = spec.lambda;
  p.sigma = spec.sigma;
  if (spec.synthetic) {
    const auto& s = *spec.synthetic;
    Problem syn = gen_synthetic(s.alpha, s.beta, s.d, spec.n, s.m, s.seed, spec.lambda);
    p.devices = std::move(syn.devices);
  } else {
    RawDataset raw;
    if (*spec.dataset == kBuiltinCensus) {
      raw = parse_libsvm(census_like_libsvm(), spec.dim.value_or(123));
    } else {
      std::ifstream in(*spec.dataset);
      if (!in) throw Error("cannot open dataset '" + *spec.dataset + "'");
      raw = parse_libsvm(in, spec.dim);
    }
    if (raw.dim == 0) throw FormatError("dataset '" + *spec.dataset + "' has no features");
    p.devices = shuffle_split(raw, spec.n, spec.split_seed, spec.kind == ProblemKind::LogReg);
  }
  if (p.kind == ProblemKind::Softmax && spec.shift) p = shift_softmax_data(p);
  return p;
}

/// Turns a validated config into solver settings for `problem`. Throws
/// ConfigError for settings that only fail against the actual dimension.
inline SolverConfig resolve_solver(const ExperimentConfig& cfg, const Problem& problem) {
  const Eigen::Index d = problem.dim();
  SolverConfig sc;
  sc.kind = cfg.kind;
  sc.option = cfg.option;
  sc.grad_p = cfg.grad_p;
  sc.tau = cfg.tau.value_or(problem.n());
  sc.mu = cfg.mu.value_or(problem.lambda);
  sc.cubic_M = cfg.cubic_M;
  sc.ls_grid = cfg.ls_grid;
  sc.ls_c1 = cfg.ls_c1;
  sc.max_iter = cfg.max_iter;
  sc.h0_mode = cfg.h0_mode;
  sc.gap_target = cfg.gap_target;
  sc.record_every = cfg.record_every;
  sc.seed = cfg.seed;

  std::vector<std::string> issues;
  if (cfg.x0.is_string()) {
    sc.x0 = cfg.x0 == "ones" ? Vector::Ones(d) : Vector::Zero(d);
  } else if (cfg.x0.is_number()) {
    sc.x0 = Vector::Constant(d, cfg.x0.get<double>());
  } else {
    if (static_cast<Eigen::Index>(cfg.x0.size()) != d) {
      issues.push_back("solver.x0: has " + std::to_string(cfg.x0.size()) + " entries, problem dimension is " +
                       std::to_string(d));
      sc.x0 = Vector::Zero(d);
    } else {
      sc.x0.resize(d);
      for (Eigen::Index k = 0; k < d; ++k) sc.x0(k) = cfg.x0[static_cast<std::size_t>(k)].get<double>();
    }
  }
  auto mech = [&](const MechanismText& t, Shape shape) -> ThreePCSpec {
    ThreePCSpec spec = detail::resolve_mechanism(t.body, d, shape.rows, cfg.seed);
    try {
      validate(spec, shape);
    } catch (const Error& e) {
      issues.push_back(t.path + ": " + e.what());
    }
    return spec;
  };
  sc.hessian_3pc = mech(cfg.hessian_3pc, Shape{d, d});
  sc.master_3pc = mech(cfg.master_3pc, Shape{d, 1});
  if (sc.tau > problem.n()) issues.push_back("solver.tau: exceeds the number of devices");
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return sc;
}

// ---------------------------------------------------------------------------
// Reference optimum cache

namespace detail {

inline std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

/// Content hash of everything the reference optimum depends on.
inline std::uint64_t problem_hash(const Problem& p, int reference_iters) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  const int kind = static_cast<int>(p.kind);
  h = detail::fnv_bytes(h, &kind, sizeof kind);
  h = detail::fnv_bytes(h, &p.lambda, sizeof p.lambda);
  h = detail::fnv_bytes(h, &p.sigma, sizeof p.sigma);
  h = detail::fnv_bytes(h, &reference_iters, sizeof reference_iters);
  for (const auto& dd : p.devices) {
    const Eigen::Index shape[2] = {dd.features.rows(), dd.features.cols()};
    h = detail::fnv_bytes(h, shape, sizeof shape);
    h = detail::fnv_bytes(h, dd.features.data(), sizeof(double) * static_cast<std::size_t>(dd.features.size()));
    h = detail::fnv_bytes(h, dd.labels.data(), sizeof(double) * static_cast<std::size_t>(dd.labels.size()));
  }
  return h;
}

/// Reference optimum from exact Newton started at 0, cached under
/// `cache_dir` (empty = no cache) by problem content hash.
inline Reference compute_reference(const Problem& p, int reference_iters, const std::filesystem::path& cache_dir) {
  namespace fs = std::filesystem;
  const std::uint64_t key = problem_hash(p, reference_iters);
  char name[64];
  std::snprintf(name, sizeof name, "xstar-%016llx.bin", static_cast<unsigned long long>(key));
  const fs::path file = cache_dir.empty() ? fs::path{} : cache_dir / name;
  static constexpr char kMagic[8] = {'N', '3', 'P', 'C', 'X', 'S', '1', '\0'};

  if (!file.empty() && fs::exists(file)) {
    std::ifstream in(file, std::ios::binary);
    char magic[8];
    std::uint64_t stored_key = 0, dim = 0;
    Reference ref;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&stored_key), 8);
    in.read(reinterpret_cast<char*>(&dim), 8);
    in.read(reinterpret_cast<char*>(&ref.f_star), 8);
    if (in && std::equal(magic, magic + 8, kMagic) && stored_key == key &&
        dim == static_cast<std::uint64_t>(p.dim())) {
      ref.x_star.resize(p.dim());
      in.read(reinterpret_cast<char*>(ref.x_star.data()), static_cast<std::streamsize>(8 * dim));
      if (in) return ref;
    }
  }
  const ExactNewtonResult en = run_exact_newton(p, Vector::Zero(p.dim()), reference_iters);
  Reference ref{en.x, en.f};
  if (!file.empty()) {
    std::error_code ec;
    fs::create_directories(cache_dir, ec);
    const fs::path tmp = file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      const std::uint64_t dim = static_cast<std::uint64_t>(p.dim());
      out.write(kMagic, 8);
      out.write(reinterpret_cast<const char*>(&key), 8);
      out.write(reinterpret_cast<const char*>(&dim), 8);
      out.write(reinterpret_cast<const char*>(&ref.f_star), 8);
      out.write(reinterpret_cast<const char*>(ref.x_star.data()), static_cast<std::streamsize>(8 * dim));
    }
    fs::rename(tmp, file, ec);  // a failed cache write only costs a recomputation
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentResult {
  RunResult run;
  Reference reference;
  int devices = 0;
  std::string summary;
};

inline std::string make_summary(const ExperimentConfig& cfg, const SolverConfig& sc, const ExperimentResult& r) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "solver: " << to_string(sc.kind);
  if (sc.kind == SolverKind::N3PC) s << " (option " << sc.option << ")";
  s << '\n';
  if (sc.kind != SolverKind::ExactNewton) {
    s << "hessian_3pc: " << describe(sc.hessian_3pc) << '\n';
    if (sc.kind == SolverKind::N3PC_BC || sc.kind == SolverKind::N3PC_BC_PP)
      s << "master_3pc: " << describe(sc.master_3pc) << '\n';
  }
  s << "seed: " << sc.seed << '\n';
  s << "devices: " << r.devices << '\n';
  s << "f_star: " << r.reference.f_star << '\n';
  s << "iterations: " << r.run.iterations << '\n';
  s << "status: " << (r.run.ok ? "ok" : "error: " + r.run.error) << '\n';
  if (!r.run.trace.rows.empty()) {
    const auto& last = r.run.trace.rows.back();
    s << "final_gap: " << last.f_gap << '\n';
    s << "bytes_up: " << last.bytes_up_cum << '\n';
    s << "bytes_down: " << last.bytes_down_cum << '\n';
  }
  for (const auto& [kind, bytes] : r.run.meter.per_kind) s << "bytes[" << kind << "]: " << bytes << '\n';
  if (cfg.gap_target) {
    s << "gap_target: " << *cfg.gap_target << '\n';
    if (auto b = bytes_to_gap(r.run.trace, *cfg.gap_target))
      s << "bytes_to_target_per_device: " << static_cast<double>(*b) / r.devices << '\n';
    else
      s << "bytes_to_target_per_device: not reached\n";
  }
  return s.str();
}

/// Builds the problem, computes (or loads) the reference optimum, runs the
/// solver and, when an output directory is configured, writes trace.csv and
/// summary.txt there. Solver failures are reported in the result (and the
/// summary) with the partial trace kept.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const Problem problem = build_problem(cfg.problem);
  const SolverConfig sc = resolve_solver(cfg, problem);
  ExperimentResult r;
  r.devices = problem.n();
  r.reference = compute_reference(problem, cfg.reference_iters, cfg.cache_dir);
  try {
    r.run = run_solver(problem, sc, r.reference);
  } catch (const ConfigError&) {
    throw;
  } catch (const NumericalError& e) {
    r.run.ok = false;
    r.run.error = e.what();
  }
  r.summary = make_summary(cfg, sc, r);
  if (!cfg.output.empty()) {
    std::filesystem::create_directories(cfg.output);
    std::ofstream csv(std::filesystem::path(cfg.output) / "trace.csv", std::ios::binary | std::ios::trunc);
    write_csv(csv, r.run.trace);
    std::ofstream sum(std::filesystem::path(cfg.output) / "summary.txt", std::ios::binary | std::ios::trunc);
    sum << r.summary;
    if (!csv || !sum) throw Error("cannot write results to '" + cfg.output + "'");
  }
  return r;
}

}  // namespace n3pc
