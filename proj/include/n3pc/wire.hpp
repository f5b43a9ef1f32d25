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
// Wire format of compressed payloads. All integers are u32 little-endian,
// all floats IEEE-754 binary64 little-endian:
//
//   tag byte: 0=Skip 1=Sparse 2=LowRank 3=Dense 4=Scalar
//   Sparse  : u32 count, count x (u32 flat row-major index, f64 value)
//   LowRank : u32 R, R left vectors (rows f64 each), R right vectors (cols f64)
//   Dense   : rows*cols f64, row-major
//   Scalar  : one f64
//
// Dense and LowRank payloads carry no shape; the receiver supplies it.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "n3pc/error.hpp"
#include "n3pc/matcore.hpp"

namespace n3pc {

static_assert(std::endian::native == std::endian::little, "wire codec assumes a little-endian host");

enum class Tag : std::uint8_t { Skip = 0, Sparse = 1, LowRank = 2, Dense = 3, Scalar = 4 };

struct Shape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape shape_of(const Matrix& m) { return {m.rows(), m.cols()}; }

struct SkipMsg {
  friend bool operator==(const SkipMsg&, const SkipMsg&) = default;
};
struct SparseMsg {
  std::vector<std::uint32_t> indices;  // strictly increasing flat row-major
  std::vector<double> values;
  friend bool operator==(const SparseMsg&, const SparseMsg&) = default;
};
struct LowRankMsg {
  std::uint32_t rank = 0;
  std::vector<double> left;   // rank * rows, factor r at [r*rows, (r+1)*rows)
  std::vector<double> right;  // rank * cols
  friend bool operator==(const LowRankMsg&, const LowRankMsg&) = default;
};
struct DenseMsg {
  std::vector<double> values;  // row-major
  friend bool operator==(const DenseMsg&, const DenseMsg&) = default;
};
struct ScalarMsg {
  double value = 0.0;
  friend bool operator==(const ScalarMsg&, const ScalarMsg&) = default;
};

using Message = std::variant<SkipMsg, SparseMsg, LowRankMsg, DenseMsg, ScalarMsg>;

inline Tag tag_of(const Message& m) { return static_cast<Tag>(m.index()); }

inline std::size_t byte_cost(const Message& m) {
  struct {
    std::size_t operator()(const SkipMsg&) const { return 1; }
    std::size_t operator()(const SparseMsg& s) const { return 1 + 4 + s.indices.size() * (4 + 8); }
    std::size_t operator()(const LowRankMsg& s) const { return 1 + 4 + (s.left.size() + s.right.size()) * 8; }
    std::size_t operator()(const DenseMsg& s) const { return 1 + s.values.size() * 8; }
    std::size_t operator()(const ScalarMsg&) const { return 1 + 8; }
  } visitor;
  return std::visit(visitor, m);
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint8_t b[8];
  std::memcpy(b, &v, 8);
  out.insert(out.end(), b, b + 8);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("decode: truncated message");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  out.reserve(byte_cost(m));
  out.push_back(static_cast<std::uint8_t>(tag_of(m)));
  if (const auto* s = std::get_if<SparseMsg>(&m)) {
    if (s->indices.size() != s->values.size()) throw Error("encode: sparse index/value count mismatch");
    detail::put_u32(out, static_cast<std::uint32_t>(s->indices.size()));
    for (std::size_t k = 0; k < s->indices.size(); ++k) {
      detail::put_u32(out, s->indices[k]);
      detail::put_f64(out, s->values[k]);
    }
  } else if (const auto* s = std::get_if<LowRankMsg>(&m)) {
    detail::put_u32(out, s->rank);
    for (double v : s->left) detail::put_f64(out, v);
    for (double v : s->right) detail::put_f64(out, v);
  } else if (const auto* s = std::get_if<DenseMsg>(&m)) {
    for (double v : s->values) detail::put_f64(out, v);
  } else if (const auto* s = std::get_if<ScalarMsg>(&m)) {
    detail::put_f64(out, s->value);
  }
  return out;
}

/// Decodes a payload addressed to a receiver expecting `shape`. Validates the
/// sparse index ordering and that every byte is consumed.
inline Message decode(std::span<const std::uint8_t> bytes, Shape shape) {
  detail::Reader in(bytes);
  const std::uint8_t tag = in.u8();
  Message out;
  switch (tag) {
    case 0:
      out = SkipMsg{};
      break;
    case 1: {
      SparseMsg s;
      const std::uint32_t count = in.u32();
      if (static_cast<std::size_t>(count) * 12 > in.remaining()) throw FormatError("decode: sparse count exceeds payload");
      s.indices.reserve(count);
      s.values.reserve(count);
      for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t idx = in.u32();
        if (idx >= shape.size()) throw FormatError("decode: sparse index out of range");
        if (!s.indices.empty() && idx <= s.indices.back()) throw FormatError("decode: sparse indices not increasing");
        s.indices.push_back(idx);
        s.values.push_back(in.f64());
      }
      out = std::move(s);
      break;
    }
    case 2: {
      LowRankMsg s;
      s.rank = in.u32();
      const std::size_t nl = static_cast<std::size_t>(s.rank) * shape.rows;
      const std::size_t nr = static_cast<std::size_t>(s.rank) * shape.cols;
      if ((nl + nr) * 8 != in.remaining()) throw FormatError("decode: low-rank payload size mismatch");
      s.left.resize(nl);
      s.right.resize(nr);
      for (auto& v : s.left) v = in.f64();
      for (auto& v : s.right) v = in.f64();
      out = std::move(s);
      break;
    }
    case 3: {
      if (shape.size() * 8 != in.remaining()) throw FormatError("decode: dense payload size mismatch");
      DenseMsg s;
      s.values.resize(shape.size());
      for (auto& v : s.values) v = in.f64();
      out = std::move(s);
      break;
    }
    case 4:
      out = ScalarMsg{in.f64()};
      break;
    default:
      throw FormatError("decode: unknown tag " + std::to_string(tag));
  }
  if (in.remaining() != 0) throw FormatError("decode: trailing bytes");
  return out;
}

/// Dense row-major payload of a matrix or vector.
inline DenseMsg dense_of(const Matrix& m) {
  DenseMsg d;
  d.values.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index j = 0; j < m.rows(); ++j)
    for (Eigen::Index l = 0; l < m.cols(); ++l) d.values[static_cast<std::size_t>(j * m.cols() + l)] = m(j, l);
  return d;
}

inline Matrix matrix_of(const DenseMsg& d, Shape shape) {
  if (d.values.size() != shape.size()) throw FormatError("dense payload does not match shape");
  Matrix m(shape.rows, shape.cols);
  for (Eigen::Index j = 0; j < shape.rows; ++j)
    for (Eigen::Index l = 0; l < shape.cols; ++l) m(j, l) = d.values[static_cast<std::size_t>(j * shape.cols + l)];
  return m;
}

inline Vector vector_of(const DenseMsg& d) {
  return Eigen::Map<const Vector>(d.values.data(), static_cast<Eigen::Index>(d.values.size()));
}

inline DenseMsg dense_of(const Vector& v) {
  return DenseMsg{std::vector<double>(v.data(), v.data() + v.size())};
}

/// Reconstructs the matrix a Sparse / LowRank / Dense payload stands for.
/// Skip materializes to zero. Sender and receiver both go through here, so
/// their views of the compressed quantity agree bit for bit.
inline Matrix materialize(const Message& m, Shape shape) {
  Matrix out = Matrix::Zero(shape.rows, shape.cols);
  if (const auto* s = std::get_if<SparseMsg>(&m)) {
    for (std::size_t k = 0; k < s->indices.size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(s->indices[k]);
      out(idx / shape.cols, idx % shape.cols) = s->values[k];
    }
  } else if (const auto* s = std::get_if<LowRankMsg>(&m)) {
    for (std::uint32_t r = 0; r < s->rank; ++r) {
      Eigen::Map<const Vector> u(s->left.data() + static_cast<std::size_t>(r) * shape.rows, shape.rows);
      Eigen::Map<const Vector> v(s->right.data() + static_cast<std::size_t>(r) * shape.cols, shape.cols);
      out.noalias() += u * v.transpose();
    }
  } else if (const auto* s = std::get_if<DenseMsg>(&m)) {
    out = matrix_of(*s, shape);
  } else if (std::holds_alternative<ScalarMsg>(m)) {
    throw Error("materialize: scalar payload has no matrix form");
  }
  return out;
}

}  // namespace n3pc
