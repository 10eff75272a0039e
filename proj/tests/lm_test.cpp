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

#include "ckbasr/lm.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "ckbasr/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ckb {
namespace {

// Words are Kurdish letters so they survive normalization; "a" and "b" in
// comments refer to kA and kB.
const std::string kA = "ب";
const std::string kB = "د";

NormalizedText N(const std::string& s) { return NormalizeText(s).text; }

std::vector<NormalizedText> Corpus(const std::vector<std::string>& lines) {
  std::vector<NormalizedText> out;
  for (const auto& l : lines) out.push_back(N(l));
  return out;
}

double P(const NgramModel& m, const std::vector<std::string>& history, const std::string& w) {
  std::vector<int> h;
  for (const auto& x : history) h.push_back(m.WordId(x));
  return std::pow(10.0, m.Log10Prob(h, m.WordId(w)));
}

const std::string kS = "<s>";
const std::string kE = "</s>";

TEST(TrainNgramTest, BigramMleExample) {
  const NgramModel m = TrainNgram(Corpus({kA + " " + kA + " " + kB}), 2, Smoothing::kMle);
  EXPECT_NEAR(P(m, {kA}, kA), 0.5, 1e-15);
  EXPECT_NEAR(P(m, {kA}, kB), 0.5, 1e-15);
  EXPECT_NEAR(P(m, {kS}, kA), 1.0, 1e-15);
  EXPECT_NEAR(P(m, {kB}, kE), 1.0, 1e-15);
}

TEST(TrainNgramTest, UnigramMleExampleOverWords) {
  const NgramModel m = TrainNgram(Corpus({kA + " " + kA + " " + kB}), 1, Smoothing::kMle);
  // The end marker is a predicted token (1/4); over the two words the
  // ratios are 2/3 and 1/3.
  const double pa = P(m, {}, kA);
  const double pb = P(m, {}, kB);
  EXPECT_NEAR(pa / (pa + pb), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(pb / (pa + pb), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(P(m, {}, kE), 0.25, 1e-15);
}

TEST(TrainNgramTest, PropertyUnigramMleSumsToOne) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> lines;
    for (int s = 0; s < 1 + static_cast<int>(rng.Below(4)); ++s) {
      std::string line;
      for (int w = 0; w < static_cast<int>(rng.Below(4)); ++w) line += (w ? " " : "") + std::string(rng.Below(2) ? kA : kB);
      lines.push_back(line);
    }
    const NgramModel m = TrainNgram(Corpus(lines), 1, Smoothing::kMle);
    double total = 0;
    for (const auto& [gram, e] : m.Grams(1)) {
      if (e.log10_prob > kLog10Zero) total += std::pow(10.0, e.log10_prob);
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
  }
}

std::vector<std::vector<std::string>> RandomTinyCorpus(Rng& rng) {
  static const std::vector<std::string> words = {"ب", "د", "ر", "ز"};
  std::vector<std::vector<std::string>> corpus;
  const int n = 1 + static_cast<int>(rng.Below(5));
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> s;
    const int len = static_cast<int>(rng.Below(6));
    for (int j = 0; j < len; ++j) s.push_back(words[rng.Below(1 + rng.Below(words.size()))]);
    corpus.push_back(s);
  }
  return corpus;
}

std::vector<NormalizedText> ToText(const std::vector<std::vector<std::string>>& corpus) {
  std::vector<NormalizedText> out;
  for (const auto& s : corpus) {
    std::string line;
    for (size_t i = 0; i < s.size(); ++i) line += (i ? " " : "") + s[i];
    out.push_back(N(line));
  }
  return out;
}

TEST(TrainNgramTest, PropertyMleEqualsCountingOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto corpus = RandomTinyCorpus(rng);
    const int order = 1 + static_cast<int>(rng.Below(3));
    const NgramModel m = TrainNgram(ToText(corpus), order, Smoothing::kMle);
    for (int k = 1; k <= order; ++k) {
      const oracle::NgramCounts c = oracle::CountNgrams(corpus, k);
      size_t observed = 0;
      for (const auto& [gram, e] : m.Grams(k)) {
        std::vector<std::string> words;
        for (int id : gram) words.push_back(m.Word(id));
        const auto it = c.grams.find(words);
        if (it == c.grams.end()) {
          ASSERT_EQ(e.log10_prob, kLog10Zero);
          continue;
        }
        ++observed;
        std::vector<std::string> h(words.begin(), words.end() - 1);
        const double ratio = static_cast<double>(it->second) / static_cast<double>(c.contexts.at(h));
        ASSERT_EQ(e.log10_prob, std::log10(ratio));
      }
      ASSERT_EQ(observed, c.grams.size());
    }
  }
}

TEST(TrainNgramTest, PropertyAbsoluteDiscountMassesSumToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto corpus = RandomTinyCorpus(rng);
    const int order = 1 + static_cast<int>(rng.Below(3));
    const NgramModel m = TrainNgram(ToText(corpus), order, Smoothing::kAbsoluteDiscount, 0.75);
    // Every predictable token: all words except <s>.
    std::vector<int> targets;
    for (int id = 0; id < m.vocabulary_size(); ++id)
      if (id != m.bos_id()) targets.push_back(id);
    // Every observed context plus the empty one.
    std::vector<NgramModel::Gram> contexts = {{}};
    for (int k = 1; k < order; ++k)
      for (const auto& [gram, e] : m.Grams(k))
        if (gram.back() != m.eos_id()) contexts.push_back(gram);
    for (const auto& h : contexts) {
      double total = 0;
      for (int w : targets) {
        const double p = std::pow(10.0, m.Log10Prob(h, w));
        ASSERT_GT(p, 0.0);
        ASSERT_LE(p, 1.0);
        total += p;
      }
      ASSERT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(TrainNgramTest, LeftoverMassMatchesDiscountFormula) {
  // Context a in "a b a c ...": count 3, two continuation types.
  const NgramModel m = TrainNgram(Corpus({kA + " " + kB + " " + kA + " ر " + kA}), 2,
                                  Smoothing::kAbsoluteDiscount, 0.5);
  const NgramEntry* a = m.Find({m.WordId(kA)});
  ASSERT_NE(a, nullptr);
  // Continuations of a: b, ر, </s> -> 3 types over 3 occurrences.
  EXPECT_NEAR(std::pow(10.0, a->log10_backoff), 0.5 * 3 / 3, 1e-12);
}

TEST(TrainNgramTest, PropertyHigherOrderNeverHurtsUnderMle) {
  Rng rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const auto text = ToText(RandomTinyCorpus(rng));
    double prev = -std::numeric_limits<double>::infinity();
    for (int order = 1; order <= 4; ++order) {
      const NgramModel m = TrainNgram(text, order, Smoothing::kMle);
      double total = 0;
      for (const auto& s : text) total += ScoreSentence(m, s).log10_prob;
      ASSERT_GE(total, prev - 1e-9) << order;
      prev = total;
    }
  }
}

TEST(TrainNgramTest, Errors) {
  EXPECT_THROW(TrainNgram({}, 2, Smoothing::kMle), Error);
  EXPECT_THROW(TrainNgram(Corpus({kA}), 0, Smoothing::kMle), Error);
  EXPECT_THROW(TrainNgram(Corpus({kA}), 6, Smoothing::kMle), Error);
  EXPECT_THROW(TrainNgram(Corpus({kA}), 2, Smoothing::kAbsoluteDiscount, 1.0), Error);
}

TEST(ScoreSentenceTest, BigramProductOfCounts) {
  const NgramModel m = TrainNgram(Corpus({kA + " " + kA + " " + kB}), 2, Smoothing::kMle);
  const LmScore s = ScoreSentence(m, N(kA + " " + kA + " " + kB));
  EXPECT_NEAR(s.log10_prob, std::log10(1.0 * 0.5 * 0.5 * 1.0), 1e-12);
  EXPECT_EQ(s.word_count, 3);
  EXPECT_EQ(s.oov_count, 0);
  EXPECT_EQ(s.token_count(), 4);
}

TEST(ScoreSentenceTest, EmptySentenceIsEndMarkerOnly) {
  const NgramModel m = TrainNgram(Corpus({kA, ""}), 2, Smoothing::kMle);
  EXPECT_NEAR(ScoreSentence(m, N("")).log10_prob, std::log10(0.5), 1e-12);
}

TEST(ScoreSentenceTest, UnseenWordIsFiniteUnderDiscounting) {
  const NgramModel m = TrainNgram(Corpus({kA + " " + kB}), 3, Smoothing::kAbsoluteDiscount);
  const LmScore s = ScoreSentence(m, std::vector<std::string>{kA, "زمان"});
  EXPECT_EQ(s.oov_count, 1);
  EXPECT_TRUE(std::isfinite(s.log10_prob));
  EXPECT_GT(s.log10_prob, -20);
}

TEST(PerplexityTest, Examples) {
  // A deterministic bigram model; the unigram model keeps P(</s>) = 1/2.
  EXPECT_NEAR(Perplexity(TrainNgram(Corpus({kA}), 2, Smoothing::kMle), Corpus({kA})), 1.0, 1e-12);
  EXPECT_NEAR(Perplexity(TrainNgram(Corpus({kA}), 1, Smoothing::kMle), Corpus({kA})), 2.0, 1e-12);
}

TEST(PerplexityTest, TrainingCorpusBeatsPermutation) {
  const auto train = Corpus({kA + " " + kB + " ر", kA + " " + kB});
  const NgramModel m = TrainNgram(train, 2, Smoothing::kMle);
  const auto permuted = Corpus({"ر " + kB + " " + kA, kB + " " + kA});
  const NgramModel d = TrainNgram(train, 2, Smoothing::kAbsoluteDiscount);
  EXPECT_LE(Perplexity(m, train), Perplexity(m, permuted));
  EXPECT_LE(Perplexity(d, train), Perplexity(d, permuted));
}

TEST(PerplexityTest, DoublingCorpusKeepsMlePerplexity) {
  const auto once = Corpus({kA + " " + kB, kB + " " + kB + " " + kA});
  auto twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  const double a = Perplexity(TrainNgram(once, 3, Smoothing::kMle), once);
  const double b = Perplexity(TrainNgram(twice, 3, Smoothing::kMle), twice);
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(StandardFormatTest, RoundTripScoresExactlyAfterQuantization) {
  Rng rng(5);
  const std::vector<std::string> words = {"ب", "د", "ر", "ز", "ژ"};
  std::vector<NormalizedText> corpus;
  auto sentence = [&]() {
    std::string line;
    const int len = static_cast<int>(rng.Below(7));
    for (int j = 0; j < len; ++j) line += (j ? " " : "") + words[rng.Below(words.size())];
    return N(line);
  };
  for (int i = 0; i < 40; ++i) corpus.push_back(sentence());
  const NgramModel m = TrainNgram(corpus, 3, Smoothing::kAbsoluteDiscount);
  const std::filesystem::path path = testing::TempDir() / "lm.arpa";
  WriteStandard(m, path);
  const NgramModel back = ReadStandard(path);
  const NgramModel q = m.Quantized();
  EXPECT_EQ(back.order(), 3);
  for (int i = 0; i < 100; ++i) {
    const NormalizedText s = sentence();
    ASSERT_EQ(ScoreSentence(back, s).log10_prob, ScoreSentence(q, s).log10_prob);
  }
  EXPECT_EQ(FormatStandard(back), FormatStandard(m));
}

TEST(StandardFormatTest, HandWrittenUnigramFile) {
  const std::string text =
      "\\data\\\n"
      "ngram 1=3\n"
      "\n"
      "\\1-grams:\n"
      "-0.30103\t</s>\n"
      "-99\t<s>\n"
      "-0.30103\tب\n"
      "\n"
      "\\end\\\n";
  const NgramModel m = ParseStandard(text);
  EXPECT_EQ(m.order(), 1);
  EXPECT_NEAR(ScoreSentence(m, N(kA)).log10_prob, -0.60206, 1e-12);
}

TEST(StandardFormatTest, CountMismatchIsError) {
  const std::string text =
      "\\data\\\n"
      "ngram 1=4\n"
      "\n"
      "\\1-grams:\n"
      "-0.30103\t</s>\n"
      "-99\t<s>\n"
      "-0.30103\tب\n"
      "\n"
      "\\end\\\n";
  try {
    ParseStandard(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("count"), std::string::npos) << e.what();
  }
}

TEST(StandardFormatTest, MalformedSectionIsError) {
  EXPECT_THROW(ParseStandard("\\data\\\nngram 1=1\n\n\\3-grams:\n-1\tب\n\\end\\\n"), Error);
  EXPECT_THROW(ParseStandard("not a model"), Error);
  EXPECT_THROW(ParseStandard("\\data\\\nngram 1=1\n\n\\1-grams:\nxyz\tب\n\\end\\\n"), Error);
}

TEST(StandardFormatTest, MetadataSurvivesRoundTrip) {
  NgramModel m = TrainNgram(Corpus({kA}), 2, Smoothing::kAbsoluteDiscount);
  m.SetMetadata("vocab_hash", "00ff");
  const NgramModel back = ParseStandard(FormatStandard(m));
  EXPECT_EQ(back.metadata().at("vocab_hash"), "00ff");
}

}  // namespace
}  // namespace ckb
