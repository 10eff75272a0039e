// Copyright 2026 The ckbasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ckbasr/eval.hpp"

#include <gtest/gtest.h>

#include "ckbasr/error.hpp"
#include "oracles.hpp"

namespace ckb {
namespace {

using Words = std::vector<std::string>;

EditCounts Align(const Words& r, const Words& h) { return AlignEdit<std::string>(r, h); }

TEST(AlignEditTest, Examples) {
  EXPECT_EQ(Align({"a", "b", "c"}, {"a", "b", "c"}).errors(), 0);
  const EditCounts sub = Align({"a", "b", "c"}, {"a", "x", "c"});
  EXPECT_EQ(sub.substitutions, 1);
  EXPECT_EQ(sub.errors(), 1);
  const EditCounts del = Align({"a", "b", "c"}, {"a", "c"});
  EXPECT_EQ(del.deletions, 1);
  const EditCounts ins = Align({"a", "c"}, {"a", "b", "c"});
  EXPECT_EQ(ins.insertions, 1);
  EXPECT_EQ(ins.reference_count, 2);
  EXPECT_EQ(Align({}, {"a", "b"}).insertions, 2);
  EXPECT_EQ(Align({"a", "b"}, {}).deletions, 2);
}

TEST(AlignEditTest, TiesPreferSubstitution) {
  const EditCounts c = Align({"a", "b"}, {"c"});
  EXPECT_EQ(c.substitutions, 1);
  EXPECT_EQ(c.deletions, 1);
  EXPECT_EQ(c.insertions, 0);
  const EditCounts d = Align({"a"}, {"b", "c"});
  EXPECT_EQ(d.substitutions, 1);
  EXPECT_EQ(d.insertions, 1);
}

Words RandomWords(Rng& rng) {
  static const Words pool = {"ب", "د", "ر", "ز"};
  Words w;
  const int n = static_cast<int>(rng.Below(9));
  for (int i = 0; i < n; ++i) w.push_back(pool[rng.Below(1 + rng.Below(pool.size()))]);
  return w;
}

TEST(AlignEditTest, PropertyMatchesBruteForce) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Words r = RandomWords(rng);
    const Words h = RandomWords(rng);
    const EditCounts c = Align(r, h);
    ASSERT_EQ(c.errors(), oracle::EditDistance(r, h));
    ASSERT_EQ(c.reference_count, static_cast<int64_t>(r.size()));
    ASSERT_EQ(static_cast<int64_t>(h.size()), c.reference_count - c.deletions + c.insertions);
    ASSERT_EQ(Align(r, r).errors(), 0);
    ASSERT_EQ(Align(h, r).errors(), c.errors());
  }
}

std::string Join(const Words& w) {
  std::string s;
  for (size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + w[i];
  return s;
}

TEST(RatesTest, PropertyIdentitiesHoldExactly) {
  Rng rng(2);
  std::vector<ScoringPair> pairs;
  for (int i = 0; i < 300; ++i) {
    Words r = RandomWords(rng);
    if (r.empty()) r.push_back("ب");
    const Words h = RandomWords(rng);
    const double wer = Wer(Join(r), Join(h));
    const EditCounts c = Align(r, h);
    ASSERT_EQ(wer, static_cast<double>(c.errors()) / static_cast<double>(r.size()));
    pairs.push_back({"u" + std::to_string(i), Join(r), Join(h)});
    const EvalReport one = CorpusWer({pairs.back()});
    ASSERT_EQ(one.wer(), wer);
    ASSERT_EQ(one.wrr(), 1.0 - wer);
    const std::u32string rc = NormalizeText(Join(r)).text.code_points();
    const std::u32string hc = NormalizeText(Join(h)).text.code_points();
    const std::vector<char32_t> rv(rc.begin(), rc.end()), hv(hc.begin(), hc.end());
    ASSERT_EQ(Cer(Join(r), Join(h)),
              static_cast<double>(oracle::EditDistance(rv, hv)) / static_cast<double>(rv.size()));
  }
  const EvalReport all = CorpusWer(pairs);
  EditCounts pooled;
  for (const UtteranceScore& u : all.utterances) pooled += u.words;
  EXPECT_EQ(all.words, pooled);
  EXPECT_EQ(all.wer(), static_cast<double>(pooled.errors()) / static_cast<double>(pooled.reference_count));
  EXPECT_EQ(all.wrr(), 1.0 - all.wer());
}

TEST(RatesTest, Examples) {
  EXPECT_EQ(Wer("ب د ر", "ب د ر"), 0.0);
  EXPECT_NEAR(Wer("ب د ر", "ب ز ر"), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(Wer("ب", "د ر ز"), 3.0);  // WER can exceed 1
  EXPECT_EQ(Cer("بد", "بر"), 0.5);
  EXPECT_THROW(Wer("", "ب"), Error);
  EXPECT_THROW(Cer("  ", "ب"), Error);
}

TEST(RatesTest, NormalizesBeforeScoring) {
  // Arabic kaf and yeh normalize to their Kurdish forms.
  EXPECT_EQ(Wer("کوردی", "كوردي"), 0.0);
  EXPECT_EQ(Wer("ب  د", " ب د "), 0.0);
}

TEST(CorpusWerTest, PooledNotAveraged) {
  const EvalReport r = CorpusWer({{"a", "ب", "د"}, {"b", "ب د ر ز ژ", "ب د ر ز ژ"}});
  // Averaging per utterance would give 50%.
  EXPECT_NEAR(r.wer(), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(r.utterances.size(), 2u);
  EXPECT_THROW(CorpusWer({}), Error);
}

TEST(CorpusWerTest, OneThirdFixture) {
  const EvalReport r = CorpusWer({{"u1", "ب د ر", "ب ز ر"}});
  EXPECT_EQ(FormatPercent(r.wer()), "33.3");
  EXPECT_NE(RenderSummary(r).find("wer=33.3\n"), std::string::npos);
  EXPECT_NE(RenderSummary(r).find("wrr=66.7\n"), std::string::npos);
}

TEST(ReportTest, PublishedRowRendersLiteralValue) {
  const EvalReport r = ReportFromPercent(13.6);
  EXPECT_EQ(FormatPercent(r.wer()), "13.6");
  const std::string table = RenderReport({{"xls-r-2b", "3-gram", "test", r}});
  EXPECT_NE(table.find("13.6"), std::string::npos);
  EXPECT_EQ(table.rfind("Pre-Train", 0), 0u);
  EXPECT_NE(table.find("LM"), std::string::npos);
  EXPECT_NE(table.find("Split"), std::string::npos);
  EXPECT_NE(table.find("WER"), std::string::npos);
  EXPECT_NE(table.find("xls-r-2b"), std::string::npos);
}

TEST(ReportTest, ColumnsAlign) {
  const std::string table = RenderReport({{"base", "none", "valid", ReportFromPercent(40.0)},
                                         {"xls-r-300m", "4-gram", "test", ReportFromPercent(7.25)}});
  const auto lines = SplitLines(table);
  ASSERT_EQ(lines.size(), 4u);
  const size_t col = lines[0].find("LM");
  EXPECT_EQ(lines[2].find("none"), col);
  EXPECT_EQ(lines[3].find("4-gram"), col);
  EXPECT_NE(lines[3].find("7.3"), std::string::npos);
  EXPECT_THROW(ReportFromPercent(-1), Error);
}

TEST(ScoringTsvTest, ParsesWithAndWithoutHeader) {
  const auto a = ParseScoringTsv("utterance_id\treference\thypothesis\nu1\tب د\tب\n\nu2\tر\tر\n");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].id, "u1");
  EXPECT_EQ(a[0].reference, "ب د");
  EXPECT_EQ(a[1].hypothesis, "ر");
  EXPECT_EQ(ParseScoringTsv("u1\tب\t\n").at(0).hypothesis, "");
  try {
    ParseScoringTsv("u1\tب\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

}  // namespace
}  // namespace ckb
