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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "n3pc/error.hpp"
#include "n3pc/objectives.hpp"
#include "n3pc/rng.hpp"

namespace n3pc {

struct SparseRow {
  double label = 0.0;
  std::vector<std::pair<std::uint32_t, double>> entries;  // 1-based index, value
};

struct RawDataset {
  std::vector<SparseRow> rows;
  std::uint32_t dim = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view tok, std::size_t line, const char* what) {
  // from_chars for double is available in libstdc++ 11
  double v = 0.0;
  const auto* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw FormatError("libsvm line " + std::to_string(line) + ": malformed " + what + " '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses LibSVM text ("label idx:val idx:val ..."). Indices are 1-based and
/// must strictly increase within a row; '#' starts a comment; blank lines
/// are skipped. dim is `declared_dim` when given, else the largest index.
inline RawDataset parse_libsvm(std::istream& in, std::optional<std::uint32_t> declared_dim = std::nullopt) {
  RawDataset ds;
  std::string raw;
  std::size_t line_no = 0;
  std::uint32_t max_index = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    SparseRow row;
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      const std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      return line.substr(start, pos - start);
    };
    row.label = detail::parse_double(next_token(), line_no, "label");
    for (std::string_view tok = next_token(); !tok.empty(); tok = next_token()) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos || colon == 0) {
        throw FormatError("libsvm line " + std::to_string(line_no) + ": malformed feature '" + std::string(tok) + "'");
      }
      const auto idx_tok = tok.substr(0, colon);
      std::uint32_t idx = 0;
      auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
      if (ec != std::errc() || ptr != idx_tok.data() + idx_tok.size() || idx == 0) {
        throw FormatError("libsvm line " + std::to_string(line_no) + ": bad feature index '" + std::string(idx_tok) + "'");
      }
      if (!row.entries.empty() && idx <= row.entries.back().first) {
        throw FormatError("libsvm line " + std::to_string(line_no) + ": feature indices must strictly increase");
      }
      if (declared_dim && idx > *declared_dim) {
        throw FormatError("libsvm line " + std::to_string(line_no) + ": index " + std::to_string(idx) +
                          " exceeds declared dimension " + std::to_string(*declared_dim));
      }
      const double v = detail::parse_double(tok.substr(colon + 1), line_no, "feature value");
      row.entries.emplace_back(idx, v);
      max_index = std::max(max_index, idx);
    }
    ds.rows.push_back(std::move(row));
  }
  ds.dim = declared_dim.value_or(max_index);
  return ds;
}

inline RawDataset parse_libsvm(std::string_view text, std::optional<std::uint32_t> declared_dim = std::nullopt) {
  std::istringstream in{std::string(text)};
  return parse_libsvm(in, declared_dim);
}

/// Fisher-Yates shuffle driven by `seed`, truncation to n * floor(rows / n)
/// rows, and a contiguous split into n dense shards. With `binary_labels`,
/// labels <= 0 map to -1 and labels > 0 to +1.
inline std::vector<DeviceData> shuffle_split(const RawDataset& ds, int n, std::uint64_t seed, bool binary_labels = true) {
  if (n < 1) throw Error("shuffle_split: n must be >= 1");
  const std::size_t total = ds.rows.size();
  if (static_cast<std::size_t>(n) > total) {
    throw Error("shuffle_split: " + std::to_string(n) + " shards requested from " + std::to_string(total) + " rows");
  }
  std::vector<std::size_t> perm(total);
  for (std::size_t k = 0; k < total; ++k) perm[k] = k;
  RngStream rng = RngStream(seed).split("shuffle");
  for (std::size_t k = total; k > 1; --k) {
    const auto j = static_cast<std::size_t>(rng.below(k));
    std::swap(perm[k - 1], perm[j]);
  }
  const std::size_t m = total / static_cast<std::size_t>(n);
  std::vector<DeviceData> shards(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < shards.size(); ++i) {
    auto& dd = shards[i];
    dd.features = Matrix::Zero(static_cast<Eigen::Index>(m), ds.dim);
    dd.labels.resize(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
      const SparseRow& row = ds.rows[perm[i * m + j]];
      for (const auto& [idx, v] : row.entries) dd.features(static_cast<Eigen::Index>(j), idx - 1) = v;
      double b = row.label;
      if (binary_labels) b = b > 0 ? 1.0 : -1.0;
      dd.labels(static_cast<Eigen::Index>(j)) = b;
    }
  }
  return shards;
}

/// LibSVM text shaped like the census-income "a1a" benchmark: `rows` rows of
/// 123 binary features drawn as 14 one-hot categorical groups (a row may
/// leave a group empty), labels from a planted logistic model with roughly a
/// quarter positives. Used when the real file is not available.
inline std::string census_like_libsvm(std::size_t rows = 1605, std::uint64_t seed = 2022) {
  static constexpr int kGroups[] = {5, 8, 5, 16, 7, 14, 6, 5, 2, 3, 2, 3, 5, 42};
  RngStream root(seed);
  RngStream model = root.split("census-model");
  std::vector<std::vector<double>> cum;  // cumulative category probabilities per group
  std::vector<double> weight(123);
  for (int size : kGroups) {
    std::vector<double> w(static_cast<std::size_t>(size));
    double s = 0.0;
    for (int c = 0; c < size; ++c) {
      // skewed category popularity
      w[static_cast<std::size_t>(c)] = std::exp(1.5 * model.normal());
      s += w[static_cast<std::size_t>(c)];
    }
    double acc = 0.0;
    for (auto& v : w) {
      acc += v / s;
      v = acc;
    }
    cum.push_back(std::move(w));
  }
  for (auto& v : weight) v = 1.2 * model.normal();

  RngStream rs = root.split("census-rows");
  std::ostringstream out;
  out.precision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::uint32_t> active;
    std::uint32_t base = 0;
    for (std::size_t g = 0; g < cum.size(); ++g) {
      const int size = kGroups[g];
      if (rs.uniform() >= 0.03) {
        const double u = rs.uniform();
        int c = 0;
        while (c + 1 < size && u >= cum[g][static_cast<std::size_t>(c)]) ++c;
        active.push_back(base + static_cast<std::uint32_t>(c) + 1);
      }
      base += static_cast<std::uint32_t>(size);
    }
    double score = -1.6;
    for (auto idx : active) score += 0.35 * weight[idx - 1];
    const double prob = 1.0 / (1.0 + std::exp(-score));
    out << (rs.uniform() < prob ? "+1" : "-1");
    for (auto idx : active) out << ' ' << idx << ":1";
    out << '\n';
  }
  return out.str();
}

}  // namespace n3pc
