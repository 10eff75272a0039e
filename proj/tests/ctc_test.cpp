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

#include "ckbasr/ctc.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "ckbasr/error.hpp"
#include "oracles.hpp"

namespace ckb {
namespace {

Matrix Uniform(int t, int v) { return Matrix::Constant(t, v, -std::log(static_cast<double>(v))); }

LabelSequence L(std::vector<int> ids) { return LabelSequence{std::move(ids)}; }

// Vocabulary with `v` symbols: blank, space and v - 2 letters.
Vocabulary VocabOfSize(int v) {
  const std::u32string letters = U"بدرز";
  return Vocabulary::FromLetters(letters.substr(0, static_cast<size_t>(v - 2)));
}

TEST(CollapseTest, Examples) {
  EXPECT_EQ(Collapse({{0, 2, 2, 0, 3}}).ids, (std::vector<int>{2, 3}));
  EXPECT_EQ(Collapse({{2, 0, 2}}).ids, (std::vector<int>{2, 2}));
  EXPECT_TRUE(Collapse({{0, 0, 0}}).ids.empty());
  EXPECT_TRUE(Collapse({{}}).ids.empty());
}

TEST(CtcLossTest, Examples) {
  EXPECT_NEAR(CtcLoss(Uniform(1, 2), L({1})), -std::log(0.5), 1e-12);
  EXPECT_NEAR(CtcLoss(Uniform(2, 2), L({1})), -std::log(0.75), 1e-12);
  EXPECT_THROW(CtcLoss(Uniform(2, 2), L({1, 1})), InfeasibleLabelError);
  EXPECT_NO_THROW(CtcLoss(Uniform(3, 2), L({1, 1})));
}

TEST(CtcLossTest, MinFrames) {
  EXPECT_EQ(CtcMinFrames(L({})), 0);
  EXPECT_EQ(CtcMinFrames(L({1, 2, 3})), 3);
  EXPECT_EQ(CtcMinFrames(L({1, 1, 2, 2})), 6);
}

TEST(CtcLossTest, EmptyLabelsIsAllBlank) {
  Rng rng(1);
  const Matrix lp = oracle::RandomLogProbs(rng, 4, 3);
  EXPECT_NEAR(CtcLoss(lp, L({})), -lp.col(0).sum(), 1e-12);
}

TEST(CtcLossTest, InvalidInputs) {
  EXPECT_THROW(CtcLoss(Uniform(3, 3), L({3})), Error);
  EXPECT_THROW(CtcLoss(Uniform(3, 3), L({0})), Error);
  EXPECT_THROW(CtcLoss(Matrix(0, 3), L({})), Error);
}

TEST(CtcLossTest, PropertyMatchesEnumeration) {
  Rng rng(2);
  int cases = 0;
  for (int t = 1; t <= 5; ++t) {
    for (int v = 2; v <= 4; ++v) {
      for (int trial = 0; trial < 6; ++trial) {
        const Matrix lp = oracle::RandomLogProbs(rng, t, v);
        const int len = static_cast<int>(rng.Below(4));
        std::vector<int> labels;
        for (int i = 0; i < len; ++i) labels.push_back(1 + static_cast<int>(rng.Below(v - 1)));
        if (CtcMinFrames(L(labels)) > t) {
          EXPECT_THROW(CtcLoss(lp, L(labels)), InfeasibleLabelError);
          continue;
        }
        ASSERT_NEAR(CtcLoss(lp, L(labels)), oracle::CtcLoss(lp, labels), 1e-9);
        ++cases;
      }
    }
  }
  EXPECT_GT(cases, 40);
}

// d loss / d logits by the five-point central stencil through log-softmax.
Matrix NumericGrad(const Matrix& logits, const LabelSequence& labels, double h) {
  Matrix g(logits.rows(), logits.cols());
  auto f = [&](int r, int c, double dx) {
    Matrix z = logits;
    z(r, c) += dx;
    return CtcLoss(nn::LogSoftmaxRows(z), labels);
  };
  for (int r = 0; r < logits.rows(); ++r) {
    for (int c = 0; c < logits.cols(); ++c) {
      g(r, c) = (-f(r, c, 2 * h) + 8 * f(r, c, h) - 8 * f(r, c, -h) + f(r, c, -2 * h)) / (12 * h);
    }
  }
  return g;
}

// Largest |a - n| / max(|a|, |n|, floor); the floor keeps near-zero
// entries from dominating through cancellation noise.
double MaxRelError(const Matrix& a, const Matrix& n, double floor) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), floor});
    worst = std::max(worst, std::abs(a.data()[i] - n.data()[i]) / denom);
  }
  return worst;
}

TEST(CtcGradTest, MatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int t = 1 + static_cast<int>(rng.Below(5));
    const int v = 2 + static_cast<int>(rng.Below(3));
    Matrix logits(t, v);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.Normal();
    std::vector<int> ids;
    const int len = static_cast<int>(rng.Below(3));
    for (int i = 0; i < len; ++i) ids.push_back(1 + static_cast<int>(rng.Below(v - 1)));
    if (CtcMinFrames(L(ids)) > t) continue;
    const Matrix lp = nn::LogSoftmaxRows(logits);
    const Matrix analytic = CtcGrad(lp, L(ids));
    ASSERT_LE(MaxRelError(analytic, NumericGrad(logits, L(ids), 1e-3), 1e-4), 1e-6);
  }
}

TEST(CtcGradTest, RowsSumToZeroAndLossAgrees) {
  Rng rng(4);
  const Matrix lp = oracle::RandomLogProbs(rng, 6, 4);
  const CtcLossAndGrad r = CtcForwardBackward(lp, L({1, 3, 3}));
  EXPECT_NEAR(r.loss, CtcLoss(lp, L({1, 3, 3})), 1e-12);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(r.grad.row(i).sum(), 0.0, 1e-9);
}

TEST(CtcGradTest, MirroredInstanceGivesMirroredGradient) {
  Rng rng(5);
  Matrix logits(4, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.Normal();
  Matrix mirror = logits;
  mirror.col(1).swap(mirror.col(2));
  const Matrix g = CtcGrad(nn::LogSoftmaxRows(logits), L({1, 2}));
  const Matrix gm = CtcGrad(nn::LogSoftmaxRows(mirror), L({2, 1}));
  EXPECT_LE((g.col(0) - gm.col(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((g.col(1) - gm.col(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((g.col(2) - gm.col(1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CtcGradTest, LongSequenceStaysFinite) {
  Rng rng(6);
  const Matrix lp = oracle::RandomLogProbs(rng, 400, 6, 6.0);
  std::vector<int> ids;
  for (int i = 0; i < 120; ++i) ids.push_back(1 + i % 5);
  const CtcLossAndGrad r = CtcForwardBackward(lp, L(ids));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad.allFinite());
}

LogitSequence FromProbs(const std::vector<std::vector<double>>& rows) {
  LogitSequence s;
  s.log_probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      s.log_probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::log(rows[r][c]);
  return s;
}

TEST(GreedyDecodeTest, Examples) {
  const Vocabulary v = VocabOfSize(4);  // blank, space, ب, د
  const LogitSequence path = FromProbs({{.7, .1, .1, .1},
                                        {.1, .1, .7, .1},
                                        {.1, .1, .7, .1},
                                        {.7, .1, .1, .1},
                                        {.1, .1, .1, .7}});
  const Hypothesis h = GreedyDecode(path, v);
  EXPECT_EQ(h.text.utf8(), "بد");
  EXPECT_EQ(h.lm_score, 0.0);
  EXPECT_EQ(h.fused_score, h.acoustic_score);
  EXPECT_TRUE(GreedyDecode(FromProbs({{.9, .05, .03, .02}}), v).text.empty());
  // Tie between ids 1 and 2 goes to the lower id.
  const Hypothesis tie = GreedyDecode(FromProbs({{.1, .4, .4, .1}, {.1, .1, .7, .1}}), v);
  EXPECT_EQ(tie.labels.ids, (std::vector<int>{1, 2}));
}

TEST(BeamSearchTest, PropertyMatchesExhaustiveCtcMax) {
  Rng rng(7);
  for (int t = 1; t <= 4; ++t) {
    for (int v = 3; v <= 3; ++v) {
      for (int trial = 0; trial < 50; ++trial) {
        LogitSequence lp{oracle::RandomLogProbs(rng, t, v)};
        BeamSearchOptions o;
        o.alpha = 0;
        o.beta = 0;
        o.beam_width = 1000;
        const auto hyps = BeamSearchDecode(lp, VocabOfSize(v), nullptr, o);
        ASSERT_FALSE(hyps.empty());
        double mass = 0;
        const std::vector<int> best = oracle::CtcMax(lp.log_probs, &mass);
        ASSERT_EQ(hyps[0].labels.ids, best);
        ASSERT_NEAR(hyps[0].acoustic_score, std::log(mass), 1e-9);
      }
    }
  }
}

TEST(BeamSearchTest, PropertyScoresAreExactPrefixMasses) {
  // With a saturating beam every returned hypothesis carries its exact
  // collapsed-sequence mass.
  Rng rng(8);
  const Vocabulary v = VocabOfSize(4);
  for (int trial = 0; trial < 20; ++trial) {
    LogitSequence lp{oracle::RandomLogProbs(rng, 4, 4)};
    const auto mass = oracle::CollapsedMass(lp.log_probs);
    BeamSearchOptions o{100000, 0.0, 0.0};
    const auto hyps = BeamSearchDecode(lp, v, nullptr, o);
    ASSERT_EQ(hyps.size(), mass.size());
    for (const Hypothesis& h : hyps) {
      ASSERT_NEAR(std::exp(h.acoustic_score), mass.at(h.labels.ids), 1e-12);
    }
    for (size_t i = 1; i < hyps.size(); ++i) ASSERT_GE(hyps[i - 1].fused_score, hyps[i].fused_score);
  }
}

TEST(BeamSearchTest, PropertyPruningOnlyLosesMass) {
  Rng rng(9);
  const Vocabulary v = VocabOfSize(4);
  for (int trial = 0; trial < 100; ++trial) {
    LogitSequence lp{oracle::RandomLogProbs(rng, 5, 4)};
    double best = 0;
    oracle::CtcMax(lp.log_probs, &best);
    BeamSearchOptions o{1, 0.0, 0.0};
    BeamSearchDiagnostics d;
    const auto hyps = BeamSearchDecode(lp, v, nullptr, o, &d);
    ASSERT_EQ(hyps.size(), 1u);
    ASSERT_LE(hyps[0].acoustic_score, std::log(best) + 1e-12);
    ASSERT_LE(d.max_step_log_mass, 1e-12);
  }
}

TEST(BeamSearchTest, PropertyProbabilityConservation) {
  Rng rng(10);
  const Vocabulary v = VocabOfSize(5);
  const NgramModel lm = TrainNgram({NormalizeText("ب د").text, NormalizeText("ر").text}, 2,
                                   Smoothing::kAbsoluteDiscount);
  for (int trial = 0; trial < 50; ++trial) {
    LogitSequence lp{oracle::RandomLogProbs(rng, 8, 5)};
    for (int width : {1, 3, 16}) {
      BeamSearchDiagnostics d;
      BeamSearchDecode(lp, v, &lm, {width, 0.5, 1.0}, &d);
      ASSERT_LE(d.max_step_log_mass, 1e-12);
    }
  }
}

// Between two finite widths the top score can drop (a prefix kept by the
// narrow beam may be displaced in the wider one), so the property checked is
// that a saturating beam dominates every narrower one.
TEST(BeamSearchTest, PropertySaturatedBeamDominatesNarrower) {
  Rng rng(11);
  const Vocabulary v = VocabOfSize(4);
  const NgramModel lm = TrainNgram({NormalizeText("ب د").text, NormalizeText("د").text}, 2,
                                   Smoothing::kAbsoluteDiscount);
  for (int trial = 0; trial < 200; ++trial) {
    LogitSequence lp{oracle::RandomLogProbs(rng, 6, 4)};
    for (double alpha : {0.0, 0.5}) {
      const NgramModel* model = alpha == 0 ? nullptr : &lm;
      const double beta = alpha == 0 ? 0.0 : 1.0;
      // 4096 exceeds the 1093 prefixes of length <= 6 over three symbols.
      const double full = BeamSearchDecode(lp, v, model, {4096, alpha, beta})[0].fused_score;
      for (int width : {1, 2, 4, 8, 16, 64}) {
        ASSERT_LE(BeamSearchDecode(lp, v, model, {width, alpha, beta})[0].fused_score, full + 1e-12)
            << trial << " " << alpha << " " << width;
      }
    }
  }
}

TEST(BeamSearchTest, FusionFlipsAcousticTie) {
  const Vocabulary v = VocabOfSize(4);
  // ب and د carry identical acoustic mass.
  const LogitSequence lp = FromProbs({{.1, .02, .44, .44}, {.5, .02, .24, .24}});
  BeamSearchOptions plain{16, 0.0, 0.0};
  const auto no_lm = BeamSearchDecode(lp, v, nullptr, plain);
  ASSERT_GE(no_lm.size(), 2u);
  EXPECT_EQ(no_lm[0].acoustic_score, no_lm[1].acoustic_score);
  EXPECT_EQ(no_lm[0].text.utf8(), "ب");  // lexicographic tie-break
  EXPECT_EQ(no_lm[1].text.utf8(), "د");

  const NgramModel lm = TrainNgram({NormalizeText("د").text, NormalizeText("د").text,
                                    NormalizeText("ب").text},
                                   2, Smoothing::kMle);
  const auto fused = BeamSearchDecode(lp, v, &lm, {16, 0.5, 0.0});
  EXPECT_EQ(fused[0].text.utf8(), "د");
  EXPECT_GT(fused[0].lm_score, fused[1].lm_score);
  for (const Hypothesis& h : fused) {
    EXPECT_NEAR(h.fused_score, h.acoustic_score + 0.5 * h.lm_score + 0.0 * h.word_count, 1e-12);
  }
}

TEST(BeamSearchTest, ZeroAlphaReproducesNoLmRankingExactly) {
  Rng rng(12);
  const Vocabulary v = VocabOfSize(4);
  const NgramModel lm = TrainNgram({NormalizeText("ب د").text, NormalizeText("د").text}, 2,
                                   Smoothing::kAbsoluteDiscount);
  for (int trial = 0; trial < 30; ++trial) {
    LogitSequence lp{oracle::RandomLogProbs(rng, 7, 4)};
    for (double beta : {0.0, 1.0}) {
      const auto a = BeamSearchDecode(lp, v, nullptr, {4, 0.0, beta});
      const auto b = BeamSearchDecode(lp, v, &lm, {4, 0.0, beta});
      ASSERT_EQ(a.size(), b.size());
      for (size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].labels.ids, b[i].labels.ids);
        ASSERT_EQ(a[i].fused_score, b[i].fused_score);
        ASSERT_EQ(a[i].acoustic_score, b[i].acoustic_score);
      }
    }
  }
}

TEST(BeamSearchTest, WordBonusCountsWords) {
  const Vocabulary v = VocabOfSize(4);
  const LogitSequence lp = FromProbs({{.05, .05, .85, .05}, {.05, .85, .05, .05}, {.05, .05, .05, .85}});
  const auto hyps = BeamSearchDecode(lp, v, nullptr, {8, 0.0, 2.0});
  EXPECT_EQ(hyps[0].text.utf8(), "ب د");
  EXPECT_EQ(hyps[0].word_count, 2);
  EXPECT_NEAR(hyps[0].fused_score, hyps[0].acoustic_score + 4.0, 1e-12);
}

TEST(BeamSearchTest, Errors) {
  const Vocabulary v = VocabOfSize(4);
  LogitSequence lp{Uniform(3, 4)};
  EXPECT_THROW(BeamSearchDecode(lp, v, nullptr, {0, 0.0, 0.0}), Error);
  EXPECT_THROW(BeamSearchDecode(lp, v, nullptr, {4, 0.5, 0.0}), Error);
  EXPECT_THROW(BeamSearchDecode(lp, v, nullptr, {4, 0.0, std::nan("")}), Error);
  EXPECT_THROW(BeamSearchDecode(LogitSequence{Uniform(3, 5)}, v, nullptr, {4, 0.0, 0.0}), Error);
}

}  // namespace
}  // namespace ckb
