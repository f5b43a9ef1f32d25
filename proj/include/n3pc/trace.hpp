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

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "n3pc/error.hpp"

namespace n3pc {

struct TraceRow {
  int iter = 0;
  double f_gap = 0.0;
  double dist_sq = 0.0;
  std::uint64_t bytes_up_cum = 0;
  std::uint64_t bytes_down_cum = 0;
  std::uint64_t hessians_computed_cum = 0;
  std::uint64_t grads_computed_cum = 0;
  int participated = 0;
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  friend bool operator==(const RunTrace&, const RunTrace&) = default;
};

inline constexpr const char* kTraceHeader =
    "iter,f_gap,dist_sq,bytes_up_cum,bytes_down_cum,hessians_computed_cum,grads_computed_cum,participated";

namespace detail {
// Shortest representation that round-trips exactly.
inline std::string fmt_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}
}  // namespace detail

inline void write_csv(std::ostream& out, const RunTrace& t) {
  out << kTraceHeader << '\n';
  for (const auto& r : t.rows) {
    out << r.iter << ',' << detail::fmt_double(r.f_gap) << ',' << detail::fmt_double(r.dist_sq) << ','
        << r.bytes_up_cum << ',' << r.bytes_down_cum << ',' << r.hessians_computed_cum << ','
        << r.grads_computed_cum << ',' << r.participated << '\n';
  }
}

inline std::string to_csv(const RunTrace& t) {
  std::ostringstream s;
  write_csv(s, t);
  return s.str();
}

/// Throws FormatError unless iter strictly increases and every cumulative
/// column is non-decreasing.
inline void check_trace(const RunTrace& t) {
  for (std::size_t k = 1; k < t.rows.size(); ++k) {
    const TraceRow& a = t.rows[k - 1];
    const TraceRow& b = t.rows[k];
    if (b.iter <= a.iter) throw FormatError("trace: iter must strictly increase (row " + std::to_string(k) + ")");
    if (b.bytes_up_cum < a.bytes_up_cum || b.bytes_down_cum < a.bytes_down_cum ||
        b.hessians_computed_cum < a.hessians_computed_cum || b.grads_computed_cum < a.grads_computed_cum)
      throw FormatError("trace: cumulative column decreases at row " + std::to_string(k));
  }
}

inline RunTrace read_csv(std::istream& in) {
  RunTrace t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trace csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw FormatError("trace csv: unexpected header '" + line + "'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 8) throw FormatError("trace csv line " + std::to_string(line_no) + ": expected 8 columns");
    auto as_double = [&](const std::string& s) {
      double v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw FormatError("trace csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
      return v;
    };
    auto as_u64 = [&](const std::string& s) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw FormatError("trace csv line " + std::to_string(line_no) + ": bad integer '" + s + "'");
      return v;
    };
    TraceRow r;
    r.iter = static_cast<int>(as_u64(cols[0]));
    r.f_gap = as_double(cols[1]);
    r.dist_sq = as_double(cols[2]);
    r.bytes_up_cum = as_u64(cols[3]);
    r.bytes_down_cum = as_u64(cols[4]);
    r.hessians_computed_cum = as_u64(cols[5]);
    r.grads_computed_cum = as_u64(cols[6]);
    r.participated = static_cast<int>(as_u64(cols[7]));
    t.rows.push_back(r);
  }
  check_trace(t);
  return t;
}

inline RunTrace from_csv(const std::string& text) {
  std::istringstream s(text);
  return read_csv(s);
}

inline constexpr std::array<double, 4> kGapLevels{1e-4, 1e-6, 1e-8, 1e-10};

/// Total (uplink + downlink) bytes at the first row whose gap is <= level;
/// nullopt when the level is never reached.
inline std::optional<std::uint64_t> bytes_to_gap(const RunTrace& t, double level) {
  for (const auto& r : t.rows)
    if (r.f_gap <= level) return r.bytes_up_cum + r.bytes_down_cum;
  return std::nullopt;
}

struct ComparisonRow {
  std::string name;
  std::array<std::optional<std::uint64_t>, kGapLevels.size()> bytes;
};

inline std::vector<ComparisonRow> compare_runs(const std::vector<std::pair<std::string, RunTrace>>& traces) {
  std::vector<ComparisonRow> out;
  for (const auto& [name, t] : traces) {
    ComparisonRow row{name, {}};
    for (std::size_t k = 0; k < kGapLevels.size(); ++k) row.bytes[k] = bytes_to_gap(t, kGapLevels[k]);
    out.push_back(std::move(row));
  }
  return out;
}

inline void print_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "run";
  for (double g : kGapLevels) out << ",bytes_to_" << detail::fmt_double(g);
  out << '\n';
  for (const auto& r : rows) {
    out << r.name;
    for (const auto& b : r.bytes) {
      out << ',';
      if (b) out << *b;
      else out << "not reached";
    }
    out << '\n';
  }
}

}  // namespace n3pc
