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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ckbasr/textnorm.hpp"

namespace ckb {

enum class Smoothing {
  kMle,               // count ratios, no reserved mass; for oracle tests
  kAbsoluteDiscount,  // interpolated absolute discounting
};

struct NgramEntry {
  double log10_prob = 0.0;
  double log10_backoff = 0.0;  // meaningful for orders below the model order
};

// ARPA-style "zero": log10 value used where the true probability is 0.
inline constexpr double kLog10Zero = -99.0;

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kSentenceEnd = "</s>";
inline constexpr std::string_view kUnknownWord = "<unk>";

// Word n-gram model with backoff, kept in log10 as in the standard text
// format. Immutable once built.
class NgramModel {
 public:
  using Gram = std::vector<int>;

  int order() const { return static_cast<int>(grams_.size()); }

  int bos_id() const { return bos_; }
  int eos_id() const { return eos_; }
  int unk_id() const { return unk_; }
  // Unknown words map to unk_id().
  int WordId(std::string_view word) const;
  bool Contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }
  const std::string& Word(int id) const { return words_.at(static_cast<size_t>(id)); }
  int vocabulary_size() const { return static_cast<int>(words_.size()); }

  // log10 P(word | history); history is oldest-first and may be longer than
  // order - 1.
  double Log10Prob(std::span<const int> history, int word) const;

  // Entries of order k (1-based).
  const std::map<Gram, NgramEntry>& Grams(int k) const { return grams_.at(static_cast<size_t>(k - 1)); }
  const NgramEntry* Find(const Gram& gram) const;

  // Every log10 value rounded to the 7 significant digits used on disk.
  NgramModel Quantized() const;

  // Free-form provenance tags kept in the file preamble.
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  void SetMetadata(const std::string& key, const std::string& value) { metadata_[key] = value; }

 private:
  friend NgramModel TrainNgram(const std::vector<NormalizedText>&, int, Smoothing, double);
  friend NgramModel ParseStandard(std::string_view);

  int Intern(const std::string& word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::map<Gram, NgramEntry>> grams_;
  std::map<std::string, std::string> metadata_;
  int bos_ = -1;
  int eos_ = -1;
  int unk_ = -1;
};

NgramModel TrainNgram(const std::vector<NormalizedText>& corpus, int order,
                      Smoothing smoothing, double discount = 0.75);

struct LmScore {
  double log10_prob = 0.0;
  int oov_count = 0;
  int word_count = 0;
  int token_count() const { return word_count + 1; }  // includes </s>
};

LmScore ScoreSentence(const NgramModel& model, const std::vector<std::string>& words);
LmScore ScoreSentence(const NgramModel& model, const NormalizedText& sentence);

// 10^(-total log10 / tokens), end markers counted as tokens.
double Perplexity(const NgramModel& model, const std::vector<NormalizedText>& corpus);

std::string FormatStandard(const NgramModel& model);
NgramModel ParseStandard(std::string_view text);
void WriteStandard(const NgramModel& model, const std::filesystem::path& path);
NgramModel ReadStandard(const std::filesystem::path& path);

}  // namespace ckb
