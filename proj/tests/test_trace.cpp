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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "test_util.hpp"

namespace n3pc {
namespace {

RunTrace sample_trace(std::uint64_t seed, int rows) {
  RngStream rng(seed);
  RunTrace t;
  TraceRow r;
  for (int k = 0; k < rows; ++k) {
    r.iter = k;
    r.f_gap = std::exp(-k) * (1 + rng.uniform()) * (k == rows - 1 ? -1e-3 : 1.0);
    r.dist_sq = rng.uniform() / 3.0;
    r.bytes_up_cum += rng.below(1000);
    r.bytes_down_cum += rng.below(1000);
    r.hessians_computed_cum += rng.below(16);
    r.grads_computed_cum += 16;
    r.participated = 16;
    t.rows.push_back(r);
  }
  return t;
}

TEST(Csv, HeaderAndFormat) {
  RunTrace t;
  t.rows.push_back({0, 0.5, 0.25, 10, 20, 16, 16, 16});
  EXPECT_EQ(to_csv(t),
            "iter,f_gap,dist_sq,bytes_up_cum,bytes_down_cum,hessians_computed_cum,grads_computed_cum,participated\n"
            "0,0.5,0.25,10,20,16,16,16\n");
}

TEST(Csv, RoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RunTrace t = sample_trace(seed, 40);
    EXPECT_EQ(from_csv(to_csv(t)), t);
  }
}

TEST(Csv, ExtremeDoublesRoundTrip) {
  RunTrace t;
  const double vals[] = {std::numeric_limits<double>::denorm_min(), 1e300, -0.0, 0.1 + 0.2, 1.0 / 3.0};
  int k = 0;
  for (double v : vals) t.rows.push_back({k++, v, std::abs(v), 0, 0, 0, 0, 1});
  const RunTrace back = from_csv(to_csv(t));
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t j = 0; j < t.rows.size(); ++j) {
    EXPECT_EQ(back.rows[j].f_gap, t.rows[j].f_gap);
    EXPECT_EQ(std::signbit(back.rows[j].f_gap), std::signbit(t.rows[j].f_gap));
  }
}

TEST(Csv, AcceptsCrlf) {
  const std::string text =
      "iter,f_gap,dist_sq,bytes_up_cum,bytes_down_cum,hessians_computed_cum,grads_computed_cum,participated\r\n"
      "0,1,2,3,4,5,6,7\r\n";
  EXPECT_EQ(from_csv(text).rows.at(0).participated, 7);
}

TEST(Csv, RejectsMalformed) {
  EXPECT_THROW(from_csv(""), FormatError);
  EXPECT_THROW(from_csv("iter,gap\n"), FormatError);
  const std::string h = std::string(kTraceHeader) + "\n";
  EXPECT_THROW(from_csv(h + "0,1,2,3\n"), FormatError);
  EXPECT_THROW(from_csv(h + "0,x,2,3,4,5,6,7\n"), FormatError);
  EXPECT_THROW(from_csv(h + "0,1,2,-3,4,5,6,7\n"), FormatError);
  EXPECT_THROW(from_csv(h + "1,1,2,3,4,5,6,7\n0,1,2,3,4,5,6,7\n"), FormatError);   // iter not increasing
  EXPECT_THROW(from_csv(h + "0,1,2,3,4,5,6,7\n1,1,2,2,4,5,6,7\n"), FormatError);   // bytes decrease
}

TEST(BytesToGap, FirstCrossing) {
  RunTrace t;
  t.rows.push_back({0, 1.0, 0, 10, 5, 0, 0, 1});
  t.rows.push_back({1, 1e-5, 0, 20, 10, 0, 0, 1});
  t.rows.push_back({2, 1e-9, 0, 30, 15, 0, 0, 1});
  EXPECT_EQ(bytes_to_gap(t, 1e-4), 30u);
  EXPECT_EQ(bytes_to_gap(t, 1e-8), 45u);
  EXPECT_EQ(bytes_to_gap(t, 1e-10), std::nullopt);
}

TEST(Compare, SingleAndIdenticalTraces) {
  const RunTrace t = sample_trace(3, 30);
  const auto one = compare_runs({{"a", t}});
  ASSERT_EQ(one.size(), 1u);
  for (std::size_t k = 0; k < kGapLevels.size(); ++k) EXPECT_EQ(one[0].bytes[k], bytes_to_gap(t, kGapLevels[k]));
  const auto two = compare_runs({{"a", t}, {"b", t}});
  EXPECT_EQ(two[0].bytes, two[1].bytes);
}

TEST(Compare, NotReachedMarker) {
  RunTrace t;
  t.rows.push_back({0, 1.0, 0, 10, 5, 0, 0, 1});
  t.rows.push_back({1, 1e-7, 0, 20, 10, 0, 0, 1});
  std::ostringstream out;
  print_comparison(out, compare_runs({{"run-x", t}}));
  EXPECT_EQ(out.str(), "run,bytes_to_1e-04,bytes_to_1e-06,bytes_to_1e-08,bytes_to_1e-10\n"
                       "run-x,30,30,not reached,not reached\n");
}

}  // namespace
}  // namespace n3pc
