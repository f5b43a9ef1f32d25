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
// Contractive compressors and three point compressors (3PC) acting on dense
// matrices. Vectors are handled as rows x 1 matrices, which is how the
// server-side model compression in the bidirectional solvers uses them.
//
// Every compressor produces a wire Message together with the compressed
// value, and the value is always rebuilt from the message (materialize /
// apply_3pc), so a sender and a receiver that decode the same bytes hold
// bit-identical estimates.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "n3pc/error.hpp"
#include "n3pc/matcore.hpp"
#include "n3pc/rng.hpp"
#include "n3pc/wire.hpp"

namespace n3pc {

// ---------------------------------------------------------------------------
// Contractive compressors

struct TopK {
  std::uint32_t k = 1;
};
struct RankR {
  std::uint32_t r = 1;
};
/// K entries chosen uniformly without replacement. Unscaled it is
/// contractive with alpha = K/size; scaled by size/K it is unbiased instead.
struct RandK {
  std::uint32_t k = 1;
  bool scaled = false;
};
/// Keeps entries with |X_jl| >= lambda * max|X|.
struct AdaptiveThreshold {
  double lambda = 0.5;
};
struct IdentityCompressor {};

using ContractiveSpec = std::variant<TopK, RankR, RandK, AdaptiveThreshold, IdentityCompressor>;

inline bool is_randomized(const ContractiveSpec& c) { return std::holds_alternative<RandK>(c); }
inline bool is_identity(const ContractiveSpec& c) { return std::holds_alternative<IdentityCompressor>(c); }

/// Contraction parameter alpha of `c` on inputs of the given shape. For a
/// square d x d input, size = d^2 and the adaptive-threshold bound uses d.
inline double contraction_alpha(const ContractiveSpec& c, Shape shape) {
  const double size = static_cast<double>(shape.size());
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, TopK>) {
          return static_cast<double>(s.k) / size;
        } else if constexpr (std::is_same_v<T, RankR>) {
          return static_cast<double>(s.r) / static_cast<double>(std::min(shape.rows, shape.cols));
        } else if constexpr (std::is_same_v<T, RandK>) {
          if (s.scaled) throw Error("scaled Rand-K is unbiased, not contractive");
          return static_cast<double>(s.k) / size;
        } else if constexpr (std::is_same_v<T, AdaptiveThreshold>) {
          // d*lambda generalizes to sqrt(size)*lambda for non-square shapes
          const double dl2 = size * s.lambda * s.lambda;
          return std::max(1.0 - dl2, 1.0 / size);
        } else {
          return 1.0;
        }
      },
      c);
}

inline void validate(const ContractiveSpec& c, Shape shape) {
  const auto size = shape.size();
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, TopK>) {
          if (s.k < 1 || s.k > size) throw Error("Top-K: K must lie in [1, " + std::to_string(size) + "]");
        } else if constexpr (std::is_same_v<T, RankR>) {
          const auto mx = static_cast<std::uint32_t>(std::min(shape.rows, shape.cols));
          if (s.r < 1 || s.r > mx) throw Error("Rank-R: R must lie in [1, " + std::to_string(mx) + "]");
        } else if constexpr (std::is_same_v<T, RandK>) {
          if (s.k < 1 || s.k > size) throw Error("Rand-K: K must lie in [1, " + std::to_string(size) + "]");
        } else if constexpr (std::is_same_v<T, AdaptiveThreshold>) {
          if (!(s.lambda > 0.0 && s.lambda <= 1.0)) throw Error("adaptive threshold: lambda must lie in (0, 1]");
        }
      },
      c);
}

struct Compressed {
  Matrix value;
  Message message;
};

namespace detail {

inline SparseMsg sparse_from_indices(const Matrix& x, std::vector<std::uint32_t> idx, double scale = 1.0) {
  std::sort(idx.begin(), idx.end());
  SparseMsg s;
  s.indices = std::move(idx);
  s.values.reserve(s.indices.size());
  const auto cols = x.cols();
  for (auto i : s.indices) s.values.push_back(scale * x(static_cast<Eigen::Index>(i) / cols, static_cast<Eigen::Index>(i) % cols));
  return s;
}

inline double flat_at(const Matrix& x, std::uint32_t i) {
  return x(static_cast<Eigen::Index>(i) / x.cols(), static_cast<Eigen::Index>(i) % x.cols());
}

/// Indices of the K largest magnitudes; ties go to the smaller flat index.
inline std::vector<std::uint32_t> top_k_indices(const Matrix& x, std::uint32_t k) {
  const auto size = static_cast<std::uint32_t>(x.size());
  std::vector<std::uint32_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0u);
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(flat_at(x, a)), mb = std::abs(flat_at(x, b));
    return ma != mb ? ma > mb : a < b;
  };
  if (k < size) {
    std::nth_element(idx.begin(), idx.begin() + k, idx.end(), before);
    idx.resize(k);
  }
  return idx;
}

inline LowRankMsg low_rank(const Matrix& x, std::uint32_t r) {
  LowRankMsg msg;
  msg.rank = r;
  const auto rows = x.rows(), cols = x.cols();
  msg.left.reserve(static_cast<std::size_t>(r * rows));
  msg.right.reserve(static_cast<std::size_t>(r * cols));
  // Estimates built from symmetric low-rank updates drift from exact symmetry
  // by rounding only; treat those as symmetric too.
  if (x.rows() == x.cols() && (x - x.transpose()).norm() <= 1e-12 * x.norm()) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(x));
    if (es.info() != Eigen::Success) throw NumericalError("Rank-R: eigendecomposition failed");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Vector& lam = es.eigenvalues();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return std::abs(lam(a)) > std::abs(lam(b)); });
    for (std::uint32_t t = 0; t < r; ++t) {
      const Eigen::Index j = order[t];
      const Vector u = es.eigenvectors().col(j);
      for (Eigen::Index i = 0; i < rows; ++i) msg.left.push_back(lam(j) * u(i));
    }
    for (std::uint32_t t = 0; t < r; ++t) {
      const Eigen::Index j = order[t];
      for (Eigen::Index i = 0; i < cols; ++i) msg.right.push_back(es.eigenvectors()(i, j));
    }
  } else {
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    for (std::uint32_t t = 0; t < r; ++t)
      for (Eigen::Index i = 0; i < rows; ++i) msg.left.push_back(svd.singularValues()(t) * svd.matrixU()(i, t));
    for (std::uint32_t t = 0; t < r; ++t)
      for (Eigen::Index i = 0; i < cols; ++i) msg.right.push_back(svd.matrixV()(i, t));
  }
  return msg;
}

}  // namespace detail

/// Applies a contractive compressor. Deterministic kinds leave `rng` untouched.
inline Compressed contract(const ContractiveSpec& spec, const Matrix& x, RngStream& rng) {
  if (x.size() == 0) throw Error("contract: empty input");
  if (!all_finite(x)) throw NumericalError("contract: non-finite entries");
  const Shape shape = shape_of(x);
  validate(spec, shape);
  Message msg = std::visit(
      [&](const auto& s) -> Message {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, TopK>) {
          return detail::sparse_from_indices(x, detail::top_k_indices(x, s.k));
        } else if constexpr (std::is_same_v<T, RankR>) {
          return detail::low_rank(x, s.r);
        } else if constexpr (std::is_same_v<T, RandK>) {
          const auto size = static_cast<std::uint32_t>(x.size());
          std::vector<std::uint32_t> pool(size);
          std::iota(pool.begin(), pool.end(), 0u);
          for (std::uint32_t t = 0; t < s.k; ++t) {
            const auto j = t + static_cast<std::uint32_t>(rng.below(size - t));
            std::swap(pool[t], pool[j]);
          }
          pool.resize(s.k);
          const double scale = s.scaled ? static_cast<double>(size) / s.k : 1.0;
          return detail::sparse_from_indices(x, std::move(pool), scale);
        } else if constexpr (std::is_same_v<T, AdaptiveThreshold>) {
          const double thr = s.lambda * inf_norm(x);
          std::vector<std::uint32_t> keep;
          for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(x.size()); ++i) {
            const double v = detail::flat_at(x, i);
            if (v != 0.0 && std::abs(v) >= thr) keep.push_back(i);
          }
          return detail::sparse_from_indices(x, std::move(keep));
        } else {
          return dense_of(x);
        }
      },
      spec);
  Matrix value = materialize(msg, shape);
  return {std::move(value), std::move(msg)};
}

// ---------------------------------------------------------------------------
// Three point compressors

struct EF21 {
  ContractiveSpec inner;
};
/// Lazy aggregation: CLAG with the identity compressor.
struct LAG {
  double zeta = 1.0;
};
struct CLAG {
  ContractiveSpec inner;
  double zeta = 1.0;
};
struct CBAG {
  ContractiveSpec inner;
  double p = 1.0;
};
struct AdaptiveTopK {
  std::uint32_t d0 = 1;
};
/// Compression in a rotated basis: H + Q C(Q^T (X - H) Q) Q^T.
struct Rotation {
  ContractiveSpec inner;
  std::shared_ptr<const Matrix> q;
};
struct Identity3PC {};

using ThreePCSpec = std::variant<EF21, LAG, CLAG, CBAG, AdaptiveTopK, Rotation, Identity3PC>;

struct ThreePCConstants {
  double A = 1.0;
  double B = 0.0;
  double s = 0.0;  // Young's-inequality parameter the constants were derived with
};

/// Whether the mechanism reads Y = previous exact matrix.
inline bool needs_previous(const ThreePCSpec& spec) {
  return std::holds_alternative<LAG>(spec) || std::holds_alternative<CLAG>(spec) ||
         std::holds_alternative<AdaptiveTopK>(spec);
}

inline bool is_randomized(const ThreePCSpec& spec) {
  return std::visit(
      [](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CBAG>) return s.p < 1.0 || is_randomized(s.inner);
        else if constexpr (std::is_same_v<T, EF21> || std::is_same_v<T, CLAG> || std::is_same_v<T, Rotation>)
          return is_randomized(s.inner);
        else return false;
      },
      spec);
}

/// True when an aggregated message carries X itself rather than X - H.
inline bool replaces_estimate(const ThreePCSpec& spec) {
  return std::visit(
      [](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Identity3PC> || std::is_same_v<T, LAG>) return true;
        else if constexpr (std::is_same_v<T, EF21> || std::is_same_v<T, CLAG> || std::is_same_v<T, CBAG>)
          return is_identity(s.inner);
        else return false;
      },
      spec);
}

namespace detail {
// Constants for "H + C(X - H) with probability q" given contraction alpha,
// with s at the midpoint of (0, q alpha / (1 - q alpha)).
inline ThreePCConstants aggregated_constants(double q_alpha, double zeta) {
  if (q_alpha >= 1.0) return {1.0, std::max(0.0, zeta), 0.0};
  const double s = q_alpha / (2.0 * (1.0 - q_alpha));
  const double one_minus = 1.0 - q_alpha;
  return {1.0 - one_minus * (1.0 + s), std::max(one_minus * (1.0 + 1.0 / s), zeta), s};
}
}  // namespace detail

/// Theoretical (A, B) of a mechanism on inputs of the given shape.
inline ThreePCConstants constants(const ThreePCSpec& spec, Shape shape) {
  return std::visit(
      [&](const auto& s) -> ThreePCConstants {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EF21>) {
          return detail::aggregated_constants(contraction_alpha(s.inner, shape), 0.0);
        } else if constexpr (std::is_same_v<T, LAG>) {
          return detail::aggregated_constants(1.0, s.zeta);
        } else if constexpr (std::is_same_v<T, CLAG>) {
          return detail::aggregated_constants(contraction_alpha(s.inner, shape), s.zeta);
        } else if constexpr (std::is_same_v<T, CBAG>) {
          return detail::aggregated_constants(s.p * contraction_alpha(s.inner, shape), 0.0);
        } else if constexpr (std::is_same_v<T, AdaptiveTopK>) {
          const double sz = static_cast<double>(shape.size());
          const double d0 = s.d0;
          return {d0 / (2.0 * sz), std::max((1.0 - d0 / sz) * (2.0 * sz / d0 - 1.0), 3.0), 0.0};
        } else if constexpr (std::is_same_v<T, Rotation>) {
          const double a = contraction_alpha(s.inner, shape);
          if (a >= 1.0) return {0.5, 0.0, 0.0};
          return {a / 2.0, (1.0 - a) * (2.0 - a) / a, a / (2.0 * (1.0 - a))};
        } else {
          return {1.0, 0.0, 0.0};
        }
      },
      spec);
}

inline void validate(const ThreePCSpec& spec, Shape shape) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EF21>) {
          validate(s.inner, shape);
        } else if constexpr (std::is_same_v<T, LAG>) {
          if (!(s.zeta >= 0)) throw Error("LAG: zeta must be nonnegative");
        } else if constexpr (std::is_same_v<T, CLAG>) {
          validate(s.inner, shape);
          if (!(s.zeta >= 0)) throw Error("CLAG: zeta must be nonnegative");
        } else if constexpr (std::is_same_v<T, CBAG>) {
          validate(s.inner, shape);
          if (!(s.p > 0 && s.p <= 1)) throw Error("CBAG: p must lie in (0, 1]");
        } else if constexpr (std::is_same_v<T, AdaptiveTopK>) {
          if (s.d0 < 1 || s.d0 > shape.size()) throw Error("adaptive Top-K: d0 must lie in [1, size]");
        } else if constexpr (std::is_same_v<T, Rotation>) {
          validate(s.inner, shape);
          if (!s.q) throw Error("rotation: missing basis");
          if (shape.rows != shape.cols || s.q->rows() != shape.rows || s.q->cols() != shape.rows)
            throw Error("rotation: basis must be square and match the input");
          const double err = (s.q->transpose() * *s.q - Matrix::Identity(shape.rows, shape.rows)).norm();
          if (err > 1e-10) throw Error("rotation: basis is not orthogonal");
        }
      },
      spec);
}

/// Receiver-side update: the new estimate given the old one and the decoded
/// message.
inline Matrix apply_3pc(const ThreePCSpec& spec, const Matrix& h, const Message& msg) {
  if (std::holds_alternative<SkipMsg>(msg)) return h;
  const Shape shape = shape_of(h);
  if (const auto* rot = std::get_if<Rotation>(&spec)) {
    const Matrix& q = *rot->q;
    Matrix out = h + q * materialize(msg, shape) * q.transpose();
    return out;
  }
  if (replaces_estimate(spec)) return materialize(msg, shape);
  Matrix out = h + materialize(msg, shape);
  return out;
}

struct ThreePCResult {
  Matrix value;
  Message message;
  bool evaluated_x = false;  // whether the X source was invoked
};

/// Evaluates C_{H,Y}(X). X is supplied lazily: Bernoulli aggregation draws
/// its coin first and never evaluates X on the skip branch. With p = 1 no
/// coin is drawn, so CBAG(p=1) consumes `rng` exactly like EF21.
template <class XSource>
  requires std::invocable<XSource&>
ThreePCResult three_pc(const ThreePCSpec& spec, const Matrix& h, const Matrix& y, XSource&& x_source,
                       RngStream& rng) {
  const Shape shape = shape_of(h);
  if (shape_of(y) != shape) throw Error("three_pc: H and Y dimensions differ");
  ThreePCResult res;
  auto fetch_x = [&]() -> Matrix {
    Matrix x = x_source();
    res.evaluated_x = true;
    if (shape_of(x) != shape) throw Error("three_pc: X dimension differs from H");
    return x;
  };
  auto skip = [&]() {
    res.message = SkipMsg{};
    res.value = h;
  };
  auto aggregate = [&](const ContractiveSpec& inner, const Matrix& x) {
    if (is_identity(inner)) {
      // carry X itself so the receiver lands on X exactly
      res.message = dense_of(x);
    } else {
      Matrix diff = x - h;
      res.message = contract(inner, diff, rng).message;
    }
    res.value = apply_3pc(spec, h, res.message);
  };

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EF21>) {
          aggregate(s.inner, fetch_x());
        } else if constexpr (std::is_same_v<T, LAG> || std::is_same_v<T, CLAG>) {
          const Matrix x = fetch_x();
          const double zeta = s.zeta;
          const double lhs = (x - h).squaredNorm();
          const double rhs = zeta * (x - y).squaredNorm();
          if (lhs > rhs) {
            if constexpr (std::is_same_v<T, LAG>) aggregate(IdentityCompressor{}, x);
            else aggregate(s.inner, x);
          } else {
            skip();
          }
        } else if constexpr (std::is_same_v<T, CBAG>) {
          if (rng.bernoulli(s.p)) aggregate(s.inner, fetch_x());
          else skip();
        } else if constexpr (std::is_same_v<T, AdaptiveTopK>) {
          const Matrix x = fetch_x();
          const Matrix diff = x - h;
          const double den = diff.squaredNorm();
          if (den == 0.0) {
            skip();
            return;
          }
          const double ratio = (y - h).squaredNorm() / den;
          const double want = std::ceil(ratio * static_cast<double>(shape.size()));
          const auto k = static_cast<std::uint32_t>(std::min(want, static_cast<double>(s.d0)));
          if (k == 0) {
            skip();
            return;
          }
          res.message = detail::sparse_from_indices(diff, detail::top_k_indices(diff, k));
          res.value = apply_3pc(spec, h, res.message);
        } else if constexpr (std::is_same_v<T, Rotation>) {
          const Matrix x = fetch_x();
          const Matrix& q = *s.q;
          const Matrix rotated = q.transpose() * (x - h) * q;
          res.message = contract(s.inner, rotated, rng).message;
          res.value = apply_3pc(spec, h, res.message);
        } else {
          res.message = dense_of(fetch_x());
          res.value = apply_3pc(spec, h, res.message);
        }
      },
      spec);
  return res;
}

inline ThreePCResult three_pc(const ThreePCSpec& spec, const Matrix& h, const Matrix& y, const Matrix& x,
                              RngStream& rng) {
  return three_pc(spec, h, y, [&]() -> Matrix { return x; }, rng);
}

/// Human-readable name, e.g. "CBAG(Top-123, p=0.75)".
inline std::string describe(const ContractiveSpec& c) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, TopK>) return "Top-" + std::to_string(s.k);
        else if constexpr (std::is_same_v<T, RankR>) return "Rank-" + std::to_string(s.r);
        else if constexpr (std::is_same_v<T, RandK>) return std::string(s.scaled ? "ScaledRand-" : "Rand-") + std::to_string(s.k);
        else if constexpr (std::is_same_v<T, AdaptiveThreshold>) return "AdaptiveThreshold(" + std::to_string(s.lambda) + ")";
        else return "Identity";
      },
      c);
}

inline std::string describe(const ThreePCSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EF21>) return "EF21(" + describe(s.inner) + ")";
        else if constexpr (std::is_same_v<T, LAG>) return "LAG(zeta=" + std::to_string(s.zeta) + ")";
        else if constexpr (std::is_same_v<T, CLAG>) return "CLAG(" + describe(s.inner) + ", zeta=" + std::to_string(s.zeta) + ")";
        else if constexpr (std::is_same_v<T, CBAG>) return "CBAG(" + describe(s.inner) + ", p=" + std::to_string(s.p) + ")";
        else if constexpr (std::is_same_v<T, AdaptiveTopK>) return "AdaptiveTopK(d0=" + std::to_string(s.d0) + ")";
        else if constexpr (std::is_same_v<T, Rotation>) return "Rotation(" + describe(s.inner) + ")";
        else return "Identity3PC";
      },
      spec);
}

/// Uniformly random orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
inline Matrix random_orthogonal(Eigen::Index d, RngStream& rng) {
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index l = 0; l < d; ++l) g(j, l) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace n3pc
