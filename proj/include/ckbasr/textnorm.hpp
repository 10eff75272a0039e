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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ckb {

class Normalizer;
class Vocabulary;

// Text over the canonical repertoire: no leading/trailing space and no run of
// spaces. Only the normalizer and the label decoder construct it.
class NormalizedText {
 public:
  NormalizedText() = default;

  const std::u32string& code_points() const { return text_; }
  std::string utf8() const;
  bool empty() const { return text_.empty(); }
  size_t size() const { return text_.size(); }

  // Splits on the single-space delimiter.
  std::vector<std::u32string> Words() const;

  friend bool operator==(const NormalizedText&, const NormalizedText&) = default;
  friend auto operator<=>(const NormalizedText& a, const NormalizedText& b) {
    return a.text_ <=> b.text_;
  }

 private:
  friend class Normalizer;
  friend NormalizedText CollapseSpaces(std::u32string_view);
  explicit NormalizedText(std::u32string text) : text_(std::move(text)) {}

  std::u32string text_;
};

struct NormalizeResult {
  NormalizedText text;
  size_t dropped = 0;  // input code points outside the repertoire
};

// Character mapping loaded from a table file (see data/normalization_table.tsv).
class Normalizer {
 public:
  static Normalizer FromTable(std::string_view table_text);
  static Normalizer FromFile(const std::filesystem::path& path);
  // The table compiled into the library.
  static const Normalizer& Default();

  NormalizeResult Normalize(std::string_view raw_utf8) const;
  NormalizeResult Normalize(std::u32string_view raw) const;

  bool IsCanonical(char32_t cp) const {
    return cp == U' ' || canonical_.count(cp) > 0;
  }
  int version() const { return version_; }
  size_t mapping_size() const { return mapping_.size(); }

 private:
  std::unordered_map<char32_t, std::u32string> mapping_;
  std::unordered_set<char32_t> canonical_;
  int version_ = 0;
};

// Normalizes with the built-in table.
NormalizeResult NormalizeText(std::string_view raw_utf8);

// Trims and collapses whitespace runs; the caller guarantees that every other
// character is canonical.
NormalizedText CollapseSpaces(std::u32string_view text);

// Formats a code point as U+XXXX.
std::string CodePointName(char32_t cp);

struct LabelSequence {
  std::vector<int> ids;

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

// CTC output inventory. Id 0 is the blank, id 1 the word delimiter (space);
// the remaining symbols are sorted by code point.
class Vocabulary {
 public:
  static constexpr int kBlankId = 0;
  static constexpr int kDelimiterId = 1;
  static constexpr char32_t kBlankSymbol = 0;
  static constexpr char32_t kDelimiterSymbol = U' ';

  Vocabulary() = default;
  // `letters` may contain duplicates and the delimiter; both are ignored.
  static Vocabulary FromLetters(std::u32string_view letters);

  int size() const { return static_cast<int>(symbols_.size()); }
  char32_t symbol(int id) const { return symbols_.at(static_cast<size_t>(id)); }
  std::optional<int> IdOf(char32_t cp) const;
  // Non-special symbols, in id order.
  std::u32string letters() const { return symbols_.substr(2); }

  uint64_t Hash() const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::u32string symbols_;
  std::unordered_map<char32_t, int> index_;
};

// Errors if no character occurs in any transcript.
Vocabulary BuildVocabulary(const std::vector<NormalizedText>& transcripts);

LabelSequence EncodeLabels(const NormalizedText& text, const Vocabulary& vocab);
NormalizedText DecodeLabels(const LabelSequence& labels,
                            const Vocabulary& vocab);

}  // namespace ckb
