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

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "n3pc/dataio.hpp"

namespace n3pc {
namespace {

TEST(ParseLibsvm, SingleRow) {
  const RawDataset ds = parse_libsvm("-1 3:1 10:0.5\n");
  ASSERT_EQ(ds.rows.size(), 1u);
  EXPECT_EQ(ds.rows[0].label, -1.0);
  ASSERT_EQ(ds.rows[0].entries.size(), 2u);
  EXPECT_EQ(ds.rows[0].entries[0], (std::pair<std::uint32_t, double>{3, 1.0}));
  EXPECT_EQ(ds.rows[0].entries[1], (std::pair<std::uint32_t, double>{10, 0.5}));
  EXPECT_EQ(ds.dim, 10u);
}

TEST(ParseLibsvm, EmptyInput) {
  EXPECT_EQ(parse_libsvm("").rows.size(), 0u);
  EXPECT_EQ(parse_libsvm("").dim, 0u);
  EXPECT_EQ(parse_libsvm("", 123u).dim, 123u);
}

TEST(ParseLibsvm, CommentsBlankLinesPlusSignsAndCrlf) {
  const RawDataset ds = parse_libsvm("# header\n\n+1 1:2 # trailing\r\n 0\t2:-3e-1  \n", 5u);
  ASSERT_EQ(ds.rows.size(), 2u);
  EXPECT_EQ(ds.rows[0].label, 1.0);
  EXPECT_EQ(ds.rows[1].label, 0.0);
  EXPECT_EQ(ds.rows[1].entries[0].second, -0.3);
  EXPECT_EQ(ds.dim, 5u);
}

TEST(ParseLibsvm, Errors) {
  EXPECT_THROW(parse_libsvm("x 1:1\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 0:1\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 3:1 2:1\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 3:1 3:1\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 3\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 3:abc\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 :4\n"), FormatError);
  EXPECT_THROW(parse_libsvm("1 9:1\n", 5u), FormatError);
  EXPECT_THROW(parse_libsvm("1 2:inf\n"), FormatError);
}

TEST(ParseLibsvm, ErrorNamesLine) {
  try {
    parse_libsvm("1 1:1\n1 1:1\n1 x:1\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

std::string numbered_rows(std::size_t rows) {
  std::ostringstream s;
  for (std::size_t r = 0; r < rows; ++r) s << (r % 3 == 0 ? "+1" : "-1") << " 1:" << r << " 2:1\n";
  return s.str();
}

TEST(ShuffleSplit, SingleShardIsWholeDataset) {
  const RawDataset ds = parse_libsvm(numbered_rows(37));
  const auto shards = shuffle_split(ds, 1, 4);
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(shards[0].rows(), 37);
  std::vector<double> ids(shards[0].features.col(0).data(), shards[0].features.col(0).data() + 37);
  std::sort(ids.begin(), ids.end());
  for (std::size_t r = 0; r < 37; ++r) EXPECT_EQ(ids[r], static_cast<double>(r));
}

TEST(ShuffleSplit, RowsPartitionTheShuffledPrefix) {
  const RawDataset ds = parse_libsvm(numbered_rows(103));
  const auto shards = shuffle_split(ds, 10, 8);
  ASSERT_EQ(shards.size(), 10u);
  std::map<double, int> seen;
  for (const auto& s : shards) {
    ASSERT_EQ(s.rows(), 10);
    for (Eigen::Index j = 0; j < s.rows(); ++j) {
      ++seen[s.features(j, 0)];
      const auto id = static_cast<std::size_t>(s.features(j, 0));
      EXPECT_EQ(s.labels(j), id % 3 == 0 ? 1.0 : -1.0);
      EXPECT_EQ(s.features(j, 1), 1.0);
    }
  }
  EXPECT_EQ(seen.size(), 100u);  // 3 rows dropped, none duplicated
  for (const auto& [id, count] : seen) EXPECT_EQ(count, 1);
}

TEST(ShuffleSplit, Deterministic) {
  const RawDataset ds = parse_libsvm(numbered_rows(64));
  const auto a = shuffle_split(ds, 4, 1), b = shuffle_split(ds, 4, 1), c = shuffle_split(ds, 4, 2);
  bool differs = false;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].labels, b[i].labels);
    differs = differs || a[i].features != c[i].features;
  }
  EXPECT_TRUE(differs);
}

TEST(ShuffleSplit, LabelRemapping) {
  const RawDataset ds = parse_libsvm("0 1:1\n1 1:1\n-2 1:1\n3 1:1\n");
  const auto bin = shuffle_split(ds, 1, 0);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_TRUE(bin[0].labels(j) == 1.0 || bin[0].labels(j) == -1.0);
  const auto raw = shuffle_split(ds, 1, 0, false);
  EXPECT_EQ(raw[0].labels.sum(), 2.0);
}

TEST(ShuffleSplit, TooManyShards) {
  EXPECT_THROW(shuffle_split(parse_libsvm(numbered_rows(3)), 4, 0), Error);
  EXPECT_THROW(shuffle_split(parse_libsvm(numbered_rows(3)), 0, 0), Error);
}

TEST(ShuffleSplit, CensusShapeGivesSixteenShardsOfHundred) {
  const RawDataset ds = parse_libsvm(census_like_libsvm(), 123u);
  EXPECT_EQ(ds.rows.size(), 1605u);
  EXPECT_EQ(ds.dim, 123u);
  const auto shards = shuffle_split(ds, 16, 1);
  ASSERT_EQ(shards.size(), 16u);
  for (const auto& s : shards) {
    EXPECT_EQ(s.rows(), 100);
    EXPECT_EQ(s.features.cols(), 123);
  }
}

TEST(ShuffleSplit, LargeShardCountArithmetic) {
  // 142 shards over 49749 rows keep m = 350 per shard
  std::ostringstream s;
  for (int r = 0; r < 49749; ++r) s << (r % 2 ? "+1" : "-1") << " 1:1\n";
  const auto shards = shuffle_split(parse_libsvm(s.str(), 300u), 142, 3);
  ASSERT_EQ(shards.size(), 142u);
  for (const auto& sh : shards) EXPECT_EQ(sh.rows(), 350);
}

TEST(CensusLike, DeterministicBinaryData) {
  EXPECT_EQ(census_like_libsvm(), census_like_libsvm());
  const RawDataset ds = parse_libsvm(census_like_libsvm(), 123u);
  int positives = 0;
  for (const auto& r : ds.rows) {
    positives += r.label > 0;
    for (const auto& [idx, v] : r.entries) {
      EXPECT_EQ(v, 1.0);
      EXPECT_LE(idx, 123u);
    }
    EXPECT_LE(r.entries.size(), 14u);
  }
  EXPECT_GT(positives, 200);
  EXPECT_LT(positives, 700);
}

}  // namespace
}  // namespace n3pc
