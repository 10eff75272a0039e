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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"

namespace ckb {
namespace {

double SafeLog10(double p) { return p > 0.0 ? std::log10(p) : kLog10Zero; }

double Quantize(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.7g", v);
  return std::strtod(buf, nullptr);
}

std::string FormatLog10(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.7g", v);
  return buf;
}

std::vector<std::string> SplitWhitespace(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double ParseNumber(const std::string& s, size_t line_no) {
  const std::string t = Trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || *end != '\0' || !std::isfinite(v)) {
    throw ValidationError("n-gram file line " + std::to_string(line_no) +
                          ": bad number '" + t + "'");
  }
  return v;
}

}  // namespace

int NgramModel::Intern(const std::string& word) {
  auto [it, inserted] = ids_.emplace(word, static_cast<int>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

int NgramModel::WordId(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? unk_ : it->second;
}

const NgramEntry* NgramModel::Find(const Gram& gram) const {
  if (gram.empty() || gram.size() > grams_.size()) return nullptr;
  const auto& table = grams_[gram.size() - 1];
  auto it = table.find(gram);
  return it == table.end() ? nullptr : &it->second;
}

double NgramModel::Log10Prob(std::span<const int> history, int word) const {
  const size_t max_ctx = grams_.empty() ? 0 : grams_.size() - 1;
  if (history.size() > max_ctx) history = history.subspan(history.size() - max_ctx);
  double acc = 0.0;
  Gram gram;
  while (true) {
    gram.assign(history.begin(), history.end());
    gram.push_back(word);
    if (const NgramEntry* e = Find(gram)) return acc + e->log10_prob;
    if (history.empty()) return acc + kLog10Zero;
    gram.pop_back();
    if (const NgramEntry* ctx = Find(gram)) acc += ctx->log10_backoff;
    history = history.subspan(1);
  }
}

NgramModel NgramModel::Quantized() const {
  NgramModel q = *this;
  for (auto& table : q.grams_) {
    for (auto& [gram, e] : table) {
      e.log10_prob = Quantize(e.log10_prob);
      e.log10_backoff = Quantize(e.log10_backoff);
    }
  }
  return q;
}

NgramModel TrainNgram(const std::vector<NormalizedText>& corpus, int order,
                      Smoothing smoothing, double discount) {
  if (order < 1 || order > 5) throw ValidationError("n-gram order must be in 1..5");
  if (corpus.empty()) throw ValidationError("cannot train a language model on an empty corpus");
  if (smoothing == Smoothing::kAbsoluteDiscount && !(discount >= 0.0 && discount < 1.0)) {
    throw ValidationError("discount must lie in [0, 1)");
  }
  const double d = smoothing == Smoothing::kAbsoluteDiscount ? discount : 0.0;

  NgramModel m;
  m.bos_ = m.Intern(std::string(kSentenceStart));
  m.eos_ = m.Intern(std::string(kSentenceEnd));
  m.unk_ = m.Intern(std::string(kUnknownWord));
  std::set<std::string> vocab;
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  for (const NormalizedText& s : corpus) {
    std::vector<std::string> words;
    for (const std::u32string& w : s.Words()) words.push_back(EncodeUtf8(w));
    vocab.insert(words.begin(), words.end());
    sentences.push_back(std::move(words));
  }
  for (const std::string& w : vocab) m.Intern(w);

  std::vector<std::map<NgramModel::Gram, int64_t>> counts(static_cast<size_t>(order));
  for (const auto& words : sentences) {
    std::vector<int> tokens;
    tokens.reserve(words.size() + 2);
    tokens.push_back(m.bos_);
    for (const std::string& w : words) tokens.push_back(m.ids_.at(w));
    tokens.push_back(m.eos_);
    const int len = static_cast<int>(tokens.size());
    for (int k = 1; k <= order; ++k) {
      for (int end = 1; end < len; ++end) {
        const int start = end - k + 1;
        if (start < 0) continue;
        ++counts[k - 1][NgramModel::Gram(tokens.begin() + start, tokens.begin() + end + 1)];
      }
    }
  }

  m.grams_.assign(static_cast<size_t>(order), {});

  // Unigrams over every word except <s>, including one shared <unk>.
  int64_t total = 0;
  for (const auto& [g, c] : counts[0]) total += c;
  const double predicted_types = static_cast<double>(m.words_.size() - 1);
  const double seen_types = static_cast<double>(counts[0].size());
  const double uniform_mass = d * seen_types / static_cast<double>(total);
  for (int id = 0; id < static_cast<int>(m.words_.size()); ++id) {
    NgramEntry e;
    if (id == m.bos_) {
      e.log10_prob = kLog10Zero;
    } else {
      auto it = counts[0].find({id});
      const double c = it == counts[0].end() ? 0.0 : static_cast<double>(it->second);
      const double p = std::max(c - d, 0.0) / static_cast<double>(total) +
                       uniform_mass / predicted_types;
      e.log10_prob = SafeLog10(p);
    }
    m.grams_[0].emplace(NgramModel::Gram{id}, e);
  }

  for (int k = 2; k <= order; ++k) {
    std::map<NgramModel::Gram, std::pair<int64_t, int64_t>> contexts;  // total, types
    for (const auto& [gram, c] : counts[k - 1]) {
      auto& ctx = contexts[NgramModel::Gram(gram.begin(), gram.end() - 1)];
      ctx.first += c;
      ctx.second += 1;
    }
    for (const auto& [h, tt] : contexts) {
      NgramEntry& ctx_entry = m.grams_[k - 2].at(h);
      const double gamma = d * static_cast<double>(tt.second) / static_cast<double>(tt.first);
      ctx_entry.log10_backoff = SafeLog10(gamma);
    }
    for (const auto& [gram, c] : counts[k - 1]) {
      const NgramModel::Gram h(gram.begin(), gram.end() - 1);
      const auto& [ctx_total, ctx_types] = contexts.at(h);
      double p = (static_cast<double>(c) - d) / static_cast<double>(ctx_total);
      if (d > 0.0) {
        const double gamma = d * static_cast<double>(ctx_types) / static_cast<double>(ctx_total);
        const std::span<const int> shorter(h.data() + 1, h.size() - 1);
        p += gamma * std::pow(10.0, m.Log10Prob(shorter, gram.back()));
      }
      m.grams_[k - 1].emplace(gram, NgramEntry{SafeLog10(p), 0.0});
    }
  }
  return m;
}

LmScore ScoreSentence(const NgramModel& model, const std::vector<std::string>& words) {
  LmScore score;
  std::vector<int> history{model.bos_id()};
  for (const std::string& w : words) {
    if (!model.Contains(w) || w == kSentenceStart || w == kSentenceEnd) ++score.oov_count;
    int id = model.WordId(w);
    if (id == model.bos_id() || id == model.eos_id()) id = model.unk_id();
    score.log10_prob += model.Log10Prob(history, id);
    history.push_back(id);
    ++score.word_count;
  }
  score.log10_prob += model.Log10Prob(history, model.eos_id());
  return score;
}

LmScore ScoreSentence(const NgramModel& model, const NormalizedText& sentence) {
  std::vector<std::string> words;
  for (const std::u32string& w : sentence.Words()) words.push_back(EncodeUtf8(w));
  return ScoreSentence(model, words);
}

double Perplexity(const NgramModel& model, const std::vector<NormalizedText>& corpus) {
  if (corpus.empty()) throw ValidationError("perplexity needs a nonempty corpus");
  double total = 0.0;
  int64_t tokens = 0;
  for (const NormalizedText& s : corpus) {
    const LmScore sc = ScoreSentence(model, s);
    total += sc.log10_prob;
    tokens += sc.token_count();
  }
  return std::pow(10.0, -total / static_cast<double>(tokens));
}

std::string FormatStandard(const NgramModel& model) {
  std::ostringstream out;
  for (const auto& [k, v] : model.metadata()) out << "# " << k << '=' << v << '\n';
  out << "\\data\\\n";
  for (int k = 1; k <= model.order(); ++k) {
    out << "ngram " << k << '=' << model.Grams(k).size() << '\n';
  }
  for (int k = 1; k <= model.order(); ++k) {
    out << "\n\\" << k << "-grams:\n";
    std::vector<std::pair<std::string, const NgramEntry*>> rows;
    rows.reserve(model.Grams(k).size());
    for (const auto& [gram, e] : model.Grams(k)) {
      std::string text;
      for (size_t i = 0; i < gram.size(); ++i) {
        if (i > 0) text += ' ';
        text += model.Word(gram[i]);
      }
      rows.emplace_back(std::move(text), &e);
    }
    // Word-tuple order, independent of internal ids.
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return SplitChar(a.first, ' ') < SplitChar(b.first, ' ');
    });
    for (const auto& [text, e] : rows) {
      out << FormatLog10(e->log10_prob) << '\t' << text;
      if (k < model.order()) out << '\t' << FormatLog10(e->log10_backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
  return out.str();
}

NgramModel ParseStandard(std::string_view text) {
  const std::vector<std::string> lines = SplitLines(text);
  NgramModel m;
  size_t i = 0;
  for (; i < lines.size(); ++i) {
    const std::string t = Trim(lines[i]);
    if (t == "\\data\\") break;
    if (t.rfind("# ", 0) == 0) {
      const size_t eq = t.find('=');
      if (eq != std::string::npos) m.metadata_[Trim(t.substr(2, eq - 2))] = Trim(t.substr(eq + 1));
    }
  }
  if (i == lines.size()) throw ValidationError("n-gram file has no \\data\\ section");
  ++i;
  std::vector<size_t> declared;
  for (; i < lines.size(); ++i) {
    const std::string t = Trim(lines[i]);
    if (t.empty()) {
      if (declared.empty()) continue;
      break;
    }
    if (t.rfind("ngram ", 0) != 0) {
      if (t[0] == '\\') break;
      throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": malformed header '" + t + "'");
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": malformed header '" + t + "'");
    }
    const int k = std::atoi(t.substr(6, eq - 6).c_str());
    if (k != static_cast<int>(declared.size()) + 1) {
      throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": orders must be listed 1, 2, ...");
    }
    declared.push_back(static_cast<size_t>(ParseNumber(t.substr(eq + 1), i + 1)));
  }
  if (declared.empty() || declared.size() > 5) {
    throw ValidationError("n-gram file declares an unsupported number of orders");
  }
  m.grams_.assign(declared.size(), {});

  std::vector<std::vector<std::pair<std::vector<std::string>, NgramEntry>>> sections(declared.size());
  int current = 0;
  bool ended = false;
  for (; i < lines.size(); ++i) {
    const std::string t = Trim(lines[i]);
    if (t.empty()) continue;
    if (t == "\\end\\") {
      ended = true;
      break;
    }
    if (t[0] == '\\') {
      const size_t dash = t.find("-grams:");
      const int k = dash == std::string::npos ? 0 : std::atoi(t.substr(1, dash - 1).c_str());
      if (k < 1 || k > static_cast<int>(declared.size()) || k != current + 1) {
        throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": malformed section '" + t + "'");
      }
      current = k;
      continue;
    }
    if (current == 0) {
      throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": entry outside a section");
    }
    std::vector<std::string> fields = SplitChar(lines[i], '\t');
    NgramEntry e;
    std::vector<std::string> words;
    if (fields.size() >= 2) {
      e.log10_prob = ParseNumber(fields[0], i + 1);
      words = SplitWhitespace(fields[1]);
      if (fields.size() >= 3 && !Trim(fields[2]).empty()) e.log10_backoff = ParseNumber(fields[2], i + 1);
    } else {
      std::vector<std::string> toks = SplitWhitespace(lines[i]);
      if (toks.size() < static_cast<size_t>(current) + 1) {
        throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": too few fields");
      }
      e.log10_prob = ParseNumber(toks[0], i + 1);
      words.assign(toks.begin() + 1, toks.begin() + 1 + current);
      if (toks.size() > static_cast<size_t>(current) + 1) e.log10_backoff = ParseNumber(toks[current + 1], i + 1);
    }
    if (words.size() != static_cast<size_t>(current)) {
      throw ValidationError("n-gram file line " + std::to_string(i + 1) + ": expected a " +
                            std::to_string(current) + "-gram");
    }
    sections[current - 1].emplace_back(std::move(words), e);
  }
  if (!ended) throw ValidationError("n-gram file is missing \\end\\");
  for (size_t k = 0; k < declared.size(); ++k) {
    if (sections[k].size() != declared[k]) {
      throw ValidationError("n-gram count mismatch for order " + std::to_string(k + 1) + ": declared " +
                            std::to_string(declared[k]) + ", found " + std::to_string(sections[k].size()));
    }
  }

  for (const auto& [words, e] : sections[0]) m.Intern(words[0]);
  auto ensure = [&m](std::string_view w) {
    const bool present = m.ids_.count(std::string(w)) > 0;
    const int id = m.Intern(std::string(w));
    if (!present) m.grams_[0].emplace(NgramModel::Gram{id}, NgramEntry{kLog10Zero, 0.0});
    return id;
  };
  for (size_t k = 0; k < declared.size(); ++k) {
    for (const auto& [words, e] : sections[k]) {
      NgramModel::Gram gram;
      for (const std::string& w : words) {
        auto it = m.ids_.find(w);
        if (it == m.ids_.end()) {
          throw ValidationError("n-gram file: word '" + w + "' has no unigram entry");
        }
        gram.push_back(it->second);
      }
      if (!m.grams_[k].emplace(gram, e).second) {
        throw ValidationError("n-gram file: duplicate entry for order " + std::to_string(k + 1));
      }
    }
  }
  m.bos_ = ensure(kSentenceStart);
  m.eos_ = ensure(kSentenceEnd);
  m.unk_ = ensure(kUnknownWord);
  return m;
}

void WriteStandard(const NgramModel& model, const std::filesystem::path& path) {
  WriteFile(path, FormatStandard(model));
}

NgramModel ReadStandard(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("language model not found: " + path.string());
  return ParseStandard(ReadFile(path));
}

}  // namespace ckb
