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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"

namespace ckb {

EditCounts AlignWords(const NormalizedText& ref, const NormalizedText& hyp) {
  const std::vector<std::u32string> r = ref.Words();
  const std::vector<std::u32string> h = hyp.Words();
  return AlignEdit<std::u32string>(r, h);
}

EditCounts AlignChars(const NormalizedText& ref, const NormalizedText& hyp) {
  const std::u32string& r = ref.code_points();
  const std::u32string& h = hyp.code_points();
  return AlignEdit<char32_t>(std::span<const char32_t>(r.data(), r.size()),
                             std::span<const char32_t>(h.data(), h.size()));
}

double Wer(std::string_view ref, std::string_view hyp) {
  const EditCounts c = AlignWords(NormalizeText(ref).text, NormalizeText(hyp).text);
  if (c.reference_count == 0) throw ValidationError("WER is undefined for an empty reference");
  return static_cast<double>(c.errors()) / static_cast<double>(c.reference_count);
}

double Cer(std::string_view ref, std::string_view hyp) {
  const EditCounts c = AlignChars(NormalizeText(ref).text, NormalizeText(hyp).text);
  if (c.reference_count == 0) throw ValidationError("CER is undefined for an empty reference");
  return static_cast<double>(c.errors()) / static_cast<double>(c.reference_count);
}

double EvalReport::wer() const {
  if (words.reference_count == 0) throw ValidationError("WER is undefined with no reference words");
  return static_cast<double>(words.errors()) / static_cast<double>(words.reference_count);
}

double EvalReport::wrr() const { return 1.0 - wer(); }

double EvalReport::cer() const {
  if (chars.reference_count == 0) throw ValidationError("CER is undefined with no reference characters");
  return static_cast<double>(chars.errors()) / static_cast<double>(chars.reference_count);
}

EvalReport ReportFromPercent(double wer_percent) {
  if (!(wer_percent >= 0.0) || !std::isfinite(wer_percent)) {
    throw ValidationError("WER percentage must be a non-negative number");
  }
  EvalReport r;
  r.words.reference_count = 1000;
  r.words.substitutions = std::llround(wer_percent * 10.0);
  return r;
}

EvalReport CorpusWer(const std::vector<ScoringPair>& pairs) {
  if (pairs.empty()) throw ValidationError("nothing to score");
  EvalReport report;
  for (const ScoringPair& p : pairs) {
    const NormalizedText ref = NormalizeText(p.reference).text;
    const NormalizedText hyp = NormalizeText(p.hypothesis).text;
    UtteranceScore u;
    u.id = p.id;
    u.words = AlignWords(ref, hyp);
    u.chars = AlignChars(ref, hyp);
    report.words += u.words;
    report.chars += u.chars;
    report.utterances.push_back(std::move(u));
  }
  if (report.words.reference_count == 0) {
    throw ValidationError("corpus has no reference words");
  }
  return report;
}

std::vector<ScoringPair> ParseScoringTsv(std::string_view contents) {
  std::vector<ScoringPair> pairs;
  const std::vector<std::string> lines = SplitLines(contents);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (Trim(lines[i]).empty()) continue;
    const std::vector<std::string> f = SplitChar(lines[i], '\t');
    if (pairs.empty() && f.size() >= 3 && Trim(f[0]) == "utterance_id") continue;
    if (f.size() < 3) {
      throw ValidationError("scoring row " + std::to_string(i + 1) +
                            ": expected utterance_id<TAB>reference<TAB>hypothesis");
    }
    pairs.push_back({Trim(f[0]), f[1], f[2]});
  }
  return pairs;
}

std::string FormatPercent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
  return buf;
}

std::string RenderReport(const std::vector<ReportRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"Pre-Train", "LM", "Split", "WER"}};
  for (const ReportRow& r : rows) {
    cells.push_back({r.system, r.lm, r.split, FormatPercent(r.report.wer())});
  }
  std::vector<size_t> widths(4, 0);
  for (const auto& row : cells) {
    for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], DecodeUtf8(row[i]).size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      out << row[i];
      if (i + 1 < row.size()) out << std::string(widths[i] - DecodeUtf8(row[i]).size() + 2, ' ');
    }
    out << '\n';
  };
  emit(cells[0]);
  size_t total = 0;
  for (size_t w : widths) total += w + 2;
  out << std::string(total - 2, '-') << '\n';
  for (size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out.str();
}

std::string RenderSummary(const EvalReport& report) {
  std::ostringstream out;
  out << "utterances=" << report.utterances.size() << '\n';
  out << "ref_words=" << report.words.reference_count << '\n';
  out << "insertions=" << report.words.insertions << '\n';
  out << "substitutions=" << report.words.substitutions << '\n';
  out << "deletions=" << report.words.deletions << '\n';
  out << "wer=" << FormatPercent(report.wer()) << '\n';
  out << "wrr=" << FormatPercent(report.wrr()) << '\n';
  if (report.chars.reference_count > 0) out << "cer=" << FormatPercent(report.cer()) << '\n';
  return out.str();
}

}  // namespace ckb
