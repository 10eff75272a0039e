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

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "ckbasr/lm.hpp"
#include "ckbasr/nn.hpp"
#include "ckbasr/textnorm.hpp"

namespace ckb {

// Per-frame natural-log probabilities, T x V; every row is a log-softmax.
struct LogitSequence {
  Matrix log_probs;

  int64_t frames() const { return log_probs.rows(); }
  int64_t vocab_size() const { return log_probs.cols(); }
};

// Frame-level symbol ids, blanks included.
struct Alignment {
  std::vector<int> ids;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Merge adjacent repeats, then delete blanks.
LabelSequence Collapse(const Alignment& alignment, int blank_id = Vocabulary::kBlankId);

// Smallest T that admits an alignment: |labels| plus one blank per adjacent
// repeated pair.
int64_t CtcMinFrames(const LabelSequence& labels);

// -log sum over alignments collapsing to `labels`. Throws
// InfeasibleLabelError when T < CtcMinFrames(labels).
double CtcLoss(const Matrix& log_probs, const LabelSequence& labels);

struct CtcLossAndGrad {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits, where log_probs = log_softmax(logits)
};

CtcLossAndGrad CtcForwardBackward(const Matrix& log_probs, const LabelSequence& labels);
Matrix CtcGrad(const Matrix& log_probs, const LabelSequence& labels);

struct Hypothesis {
  NormalizedText text;
  LabelSequence labels;
  double acoustic_score = 0.0;  // natural log
  double lm_score = 0.0;        // natural log, before the fusion weight
  double fused_score = 0.0;     // acoustic + alpha * lm + beta * words
  int word_count = 0;
};

// Per-frame argmax (lowest id on ties), collapsed.
Hypothesis GreedyDecode(const LogitSequence& logits, const Vocabulary& vocab);

struct BeamSearchOptions {
  int beam_width = 16;
  double alpha = 0.5;  // LM weight
  double beta = 1.0;   // per-word insertion bonus
};

struct BeamSearchDiagnostics {
  // Largest log of the total probability mass held by the candidate set at
  // any frame, measured before pruning.
  double max_step_log_mass = kNegInf;
};

// Prefix beam search with word-level shallow fusion. Completed words are
// scored when the delimiter is emitted, the trailing word and the sentence
// end at the last frame. Results are sorted by fused score, ties broken by
// text. An LM is required when alpha != 0.
std::vector<Hypothesis> BeamSearchDecode(const LogitSequence& logits,
                                         const Vocabulary& vocab,
                                         const NgramModel* lm,
                                         const BeamSearchOptions& options,
                                         BeamSearchDiagnostics* diagnostics = nullptr);

}  // namespace ckb
