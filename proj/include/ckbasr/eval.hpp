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

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckbasr/textnorm.hpp"

namespace ckb {

// Edit operations turning a reference into a hypothesis.
struct EditCounts {
  int64_t insertions = 0;
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t reference_count = 0;

  int64_t errors() const { return insertions + substitutions + deletions; }
  EditCounts& operator+=(const EditCounts& o) {
    insertions += o.insertions;
    substitutions += o.substitutions;
    deletions += o.deletions;
    reference_count += o.reference_count;
    return *this;
  }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Unit-cost Levenshtein alignment. Among minimal scripts the backtrace takes
// substitutions first, then deletions, then insertions.
template <typename T>
EditCounts AlignEdit(std::span<const T> ref, std::span<const T> hyp) {
  const size_t n = ref.size();
  const size_t m = hyp.size();
  std::vector<int64_t> cost((n + 1) * (m + 1));
  auto at = [m](size_t i, size_t j) { return i * (m + 1) + j; };
  for (size_t i = 0; i <= n; ++i) cost[at(i, 0)] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) cost[at(0, j)] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int64_t diag = cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int64_t del = cost[at(i - 1, j)] + 1;
      const int64_t ins = cost[at(i, j - 1)] + 1;
      cost[at(i, j)] = std::min({diag, del, ins});
    }
  }
  EditCounts out;
  out.reference_count = static_cast<int64_t>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const int64_t c = cost[at(i, j)];
    if (i > 0 && j > 0 && c == cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && c == cost[at(i - 1, j)] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

EditCounts AlignWords(const NormalizedText& ref, const NormalizedText& hyp);
EditCounts AlignChars(const NormalizedText& ref, const NormalizedText& hyp);

// Rates as fractions; both inputs are normalized first. Throws when the
// normalized reference is empty.
double Wer(std::string_view ref, std::string_view hyp);
double Cer(std::string_view ref, std::string_view hyp);

struct UtteranceScore {
  std::string id;
  EditCounts words;
  EditCounts chars;
};

// Pooled counts: corpus WER is total errors over total reference words.
struct EvalReport {
  EditCounts words;
  EditCounts chars;
  std::vector<UtteranceScore> utterances;

  double wer() const;
  double wrr() const;  // 1 - wer()
  double cer() const;
};

// Builds a report whose word-level counts give the stated WER percentage
// (one decimal), for reproducing published rows.
EvalReport ReportFromPercent(double wer_percent);

struct ScoringPair {
  std::string id;
  std::string reference;
  std::string hypothesis;
};

EvalReport CorpusWer(const std::vector<ScoringPair>& pairs);

// utterance_id<TAB>reference<TAB>hypothesis, optional header line.
std::vector<ScoringPair> ParseScoringTsv(std::string_view contents);

struct ReportRow {
  std::string system;
  std::string lm;
  std::string split;
  EvalReport report;
};

// Pre-Train / LM / Split / WER table, WER in percent to one decimal.
std::string RenderReport(const std::vector<ReportRow>& rows);

// key=value lines for machine consumption.
std::string RenderSummary(const EvalReport& report);

std::string FormatPercent(double fraction);

}  // namespace ckb
