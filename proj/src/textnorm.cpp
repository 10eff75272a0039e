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

#include "ckbasr/textnorm.hpp"

#include <algorithm>
#include <cstdio>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"

namespace ckb {
namespace {

constexpr std::string_view kBuiltinTable =
#include "normalization_table.inc"
    ;

bool IsWhitespace(char32_t cp) {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\r':
    case U'\v':
    case U'\f':
    case 0x00A0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Parses "U+XXXX" or a single literal character.
char32_t ParseCodePointToken(const std::string& token, size_t line_no) {
  if (token.size() > 2 && (token[0] == 'U' || token[0] == 'u') &&
      token[1] == '+') {
    char* end = nullptr;
    const unsigned long v = std::strtoul(token.c_str() + 2, &end, 16);
    if (*end != '\0' || v > 0x10FFFF) {
      throw ValidationError("normalization table line " +
                            std::to_string(line_no) + ": bad code point '" +
                            token + "'");
    }
    return static_cast<char32_t>(v);
  }
  const std::u32string cps = DecodeUtf8(token);
  if (cps.size() != 1 || cps[0] == U'\uFFFD') {
    throw ValidationError("normalization table line " +
                          std::to_string(line_no) +
                          ": expected one character, got '" + token + "'");
  }
  return cps[0];
}

std::u32string ParseTarget(const std::string& field, size_t line_no) {
  std::u32string out;
  const std::string trimmed = Trim(field);
  if (trimmed.empty()) return out;
  if (trimmed.size() > 2 && (trimmed[0] == 'U' || trimmed[0] == 'u') &&
      trimmed[1] == '+') {
    for (const std::string& tok : SplitChar(trimmed, ' ')) {
      if (tok.empty()) continue;
      out.push_back(ParseCodePointToken(tok, line_no));
    }
    return out;
  }
  out = DecodeUtf8(trimmed);
  if (out.find(U'\uFFFD') != std::u32string::npos) {
    throw ValidationError("normalization table line " +
                          std::to_string(line_no) + ": invalid UTF-8 target");
  }
  return out;
}

}  // namespace

std::string NormalizedText::utf8() const { return EncodeUtf8(text_); }

std::vector<std::u32string> NormalizedText::Words() const {
  std::vector<std::u32string> words;
  if (text_.empty()) return words;
  size_t start = 0;
  while (true) {
    const size_t end = text_.find(U' ', start);
    if (end == std::u32string::npos) {
      words.push_back(text_.substr(start));
      break;
    }
    words.push_back(text_.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

std::string CodePointName(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

NormalizedText CollapseSpaces(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char32_t cp : text) {
    if (cp == U' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(cp);
  }
  return NormalizedText(std::move(out));
}

Normalizer Normalizer::FromTable(std::string_view table_text) {
  Normalizer n;
  const std::vector<std::string> lines = SplitLines(table_text);
  for (size_t i = 0; i < lines.size(); ++i) {
    const size_t line_no = i + 1;
    const std::string& line = lines[i];
    const std::string trimmed = Trim(line);
    if (trimmed.empty()) continue;
    if (trimmed[0] == '#') {
      constexpr std::string_view kVersionTag = "# version:";
      if (trimmed.rfind(kVersionTag, 0) == 0) {
        n.version_ = std::atoi(trimmed.c_str() + kVersionTag.size());
      }
      continue;
    }
    const std::vector<std::string> fields = SplitChar(line, '\t');
    if (fields.size() < 2) {
      throw ValidationError("normalization table line " +
                            std::to_string(line_no) + ": expected source<TAB>target");
    }
    const char32_t source = ParseCodePointToken(Trim(fields[0]), line_no);
    std::u32string target = ParseTarget(fields[1], line_no);
    if (!n.mapping_.emplace(source, target).second) {
      throw ValidationError("normalization table line " +
                            std::to_string(line_no) + ": duplicate source " +
                            CodePointName(source));
    }
    for (char32_t t : target) n.canonical_.insert(t);
  }
  // Every canonical character must be a fixed point, otherwise normalizing
  // twice would not be idempotent.
  for (char32_t c : n.canonical_) {
    auto it = n.mapping_.find(c);
    if (it == n.mapping_.end()) {
      n.mapping_.emplace(c, std::u32string(1, c));
    } else if (it->second != std::u32string(1, c)) {
      throw ValidationError("normalization table maps canonical character " +
                            CodePointName(c) + " to something else");
    }
    if (c == U' ' || IsWhitespace(c)) {
      throw ValidationError("normalization table may not target whitespace");
    }
  }
  return n;
}

Normalizer Normalizer::FromFile(const std::filesystem::path& path) {
  return FromTable(ReadFile(path));
}

const Normalizer& Normalizer::Default() {
  static const Normalizer kDefault = FromTable(kBuiltinTable);
  return kDefault;
}

NormalizeResult Normalizer::Normalize(std::string_view raw_utf8) const {
  return Normalize(DecodeUtf8(raw_utf8));
}

NormalizeResult Normalizer::Normalize(std::u32string_view raw) const {
  std::u32string mapped;
  mapped.reserve(raw.size());
  size_t dropped = 0;
  for (char32_t cp : raw) {
    if (IsWhitespace(cp)) {
      mapped.push_back(U' ');
      continue;
    }
    auto it = mapping_.find(cp);
    if (it == mapping_.end()) {
      ++dropped;
      continue;
    }
    mapped += it->second;
  }
  return {CollapseSpaces(mapped), dropped};
}

NormalizeResult NormalizeText(std::string_view raw_utf8) {
  return Normalizer::Default().Normalize(raw_utf8);
}

Vocabulary Vocabulary::FromLetters(std::u32string_view letters) {
  std::u32string sorted(letters);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  Vocabulary v;
  v.symbols_.push_back(kBlankSymbol);
  v.symbols_.push_back(kDelimiterSymbol);
  for (char32_t c : sorted) {
    if (c == kDelimiterSymbol || c == kBlankSymbol) continue;
    v.symbols_.push_back(c);
  }
  for (size_t i = 1; i < v.symbols_.size(); ++i) {
    v.index_.emplace(v.symbols_[i], static_cast<int>(i));
  }
  return v;
}

std::optional<int> Vocabulary::IdOf(char32_t cp) const {
  auto it = index_.find(cp);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

uint64_t Vocabulary::Hash() const {
  Fnv1a h;
  for (char32_t c : symbols_) {
    const uint32_t v = static_cast<uint32_t>(c);
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    h.Update(bytes, 4);
  }
  return h.digest();
}

Vocabulary BuildVocabulary(const std::vector<NormalizedText>& transcripts) {
  std::u32string letters;
  for (const NormalizedText& t : transcripts) {
    for (char32_t c : t.code_points()) {
      if (c != U' ') letters.push_back(c);
    }
  }
  if (letters.empty()) {
    throw ValidationError("cannot build a vocabulary from an empty corpus");
  }
  return Vocabulary::FromLetters(letters);
}

LabelSequence EncodeLabels(const NormalizedText& text, const Vocabulary& vocab) {
  LabelSequence out;
  out.ids.reserve(text.size());
  for (char32_t c : text.code_points()) {
    const std::optional<int> id = vocab.IdOf(c);
    if (!id) {
      throw ValidationError("character " + CodePointName(c) + " ('" +
                            EncodeUtf8(c) + "') is not in the vocabulary");
    }
    out.ids.push_back(*id);
  }
  return out;
}

NormalizedText DecodeLabels(const LabelSequence& labels,
                            const Vocabulary& vocab) {
  std::u32string text;
  text.reserve(labels.size());
  for (int id : labels.ids) {
    if (id <= Vocabulary::kBlankId || id >= vocab.size()) {
      throw ValidationError("label id " + std::to_string(id) +
                            " is out of range for a vocabulary of size " +
                            std::to_string(vocab.size()));
    }
    text.push_back(vocab.symbol(id));
  }
  return CollapseSpaces(text);
}

}  // namespace ckb
