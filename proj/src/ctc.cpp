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

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"

namespace ckb {
namespace {

constexpr double kLn10 = 2.302585092994045684;

void CheckLabels(const Matrix& log_probs, const LabelSequence& labels) {
  const int64_t t = log_probs.rows();
  const int64_t v = log_probs.cols();
  if (t < 1) throw ValidationError("CTC needs at least one frame");
  for (int id : labels.ids) {
    if (id <= Vocabulary::kBlankId || id >= v) {
      throw ValidationError("CTC label id " + std::to_string(id) + " is outside 1.." +
                            std::to_string(v - 1));
    }
  }
  const int64_t need = CtcMinFrames(labels);
  if (t < need) {
    throw InfeasibleLabelError("label sequence of length " + std::to_string(labels.size()) +
                               " needs at least " + std::to_string(need) + " frames, got " +
                               std::to_string(t));
  }
}

// Blank-interleaved target: b l1 b l2 ... lL b.
std::vector<int> Extend(const LabelSequence& labels) {
  std::vector<int> ext(2 * labels.size() + 1, Vocabulary::kBlankId);
  for (size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels.ids[i];
  return ext;
}

// alpha(t, s) in log space.
Matrix ForwardLattice(const Matrix& lp, const std::vector<int>& ext) {
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  Matrix alpha = Matrix::Constant(T, S, kNegInf);
  alpha(0, 0) = lp(0, ext[0]);
  if (S > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = LogAdd(a, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != Vocabulary::kBlankId && ext[s] != ext[s - 2]) {
        a = LogAdd(a, alpha(t - 1, s - 2));
      }
      alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, ext[s]);
    }
  }
  return alpha;
}

Matrix BackwardLattice(const Matrix& lp, const std::vector<int>& ext) {
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  Matrix beta = Matrix::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = lp(T - 1, ext[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = lp(T - 1, ext[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = S - 1; s >= 0; --s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = LogAdd(b, beta(t + 1, s + 1));
      if (s + 2 < S && ext[s] != Vocabulary::kBlankId && ext[s] != ext[s + 2]) {
        b = LogAdd(b, beta(t + 1, s + 2));
      }
      beta(t, s) = b == kNegInf ? kNegInf : b + lp(t, ext[s]);
    }
  }
  return beta;
}

double TotalLogProb(const Matrix& alpha) {
  const Eigen::Index T = alpha.rows();
  const Eigen::Index S = alpha.cols();
  double total = alpha(T - 1, S - 1);
  if (S > 1) total = LogAdd(total, alpha(T - 1, S - 2));
  return total;
}

}  // namespace

LabelSequence Collapse(const Alignment& alignment, int blank_id) {
  LabelSequence out;
  int prev = -1;
  for (int id : alignment.ids) {
    if (id != prev && id != blank_id) out.ids.push_back(id);
    prev = id;
  }
  return out;
}

int64_t CtcMinFrames(const LabelSequence& labels) {
  int64_t need = static_cast<int64_t>(labels.size());
  for (size_t i = 1; i < labels.size(); ++i) {
    if (labels.ids[i] == labels.ids[i - 1]) ++need;
  }
  return need;
}

double CtcLoss(const Matrix& log_probs, const LabelSequence& labels) {
  CheckLabels(log_probs, labels);
  const std::vector<int> ext = Extend(labels);
  return -TotalLogProb(ForwardLattice(log_probs, ext));
}

CtcLossAndGrad CtcForwardBackward(const Matrix& log_probs, const LabelSequence& labels) {
  CheckLabels(log_probs, labels);
  const std::vector<int> ext = Extend(labels);
  const Matrix alpha = ForwardLattice(log_probs, ext);
  const Matrix beta = BackwardLattice(log_probs, ext);
  const double log_total = TotalLogProb(alpha);

  CtcLossAndGrad out;
  out.loss = -log_total;
  const Eigen::Index T = log_probs.rows();
  const Eigen::Index V = log_probs.cols();
  // Occupancy of each symbol per frame, accumulated in log space.
  Matrix occupancy = Matrix::Constant(T, V, kNegInf);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (size_t s = 0; s < ext.size(); ++s) {
      const double a = alpha(t, static_cast<Eigen::Index>(s));
      const double b = beta(t, static_cast<Eigen::Index>(s));
      if (a == kNegInf || b == kNegInf) continue;
      const double g = a + b - log_probs(t, ext[s]);
      occupancy(t, ext[s]) = LogAdd(occupancy(t, ext[s]), g);
    }
  }
  out.grad.resize(T, V);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index k = 0; k < V; ++k) {
      const double occ = occupancy(t, k) == kNegInf ? 0.0 : std::exp(occupancy(t, k) - log_total);
      out.grad(t, k) = std::exp(log_probs(t, k)) - occ;
    }
  }
  return out;
}

Matrix CtcGrad(const Matrix& log_probs, const LabelSequence& labels) {
  return CtcForwardBackward(log_probs, labels).grad;
}

Hypothesis GreedyDecode(const LogitSequence& logits, const Vocabulary& vocab) {
  const Matrix& lp = logits.log_probs;
  Alignment path;
  path.ids.reserve(static_cast<size_t>(lp.rows()));
  double score = 0.0;
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < lp.cols(); ++k) {
      if (lp(t, k) > lp(t, best)) best = k;
    }
    path.ids.push_back(static_cast<int>(best));
    score += lp(t, best);
  }
  Hypothesis h;
  h.labels = Collapse(path);
  h.text = DecodeLabels(h.labels, vocab);
  h.acoustic_score = score;  // best single path
  h.lm_score = 0.0;
  h.fused_score = score;
  h.word_count = static_cast<int>(h.text.Words().size());
  return h;
}

namespace {

// A node of the prefix tree together with the word-level LM state reached by
// reading its label path.
struct PrefixNode {
  int parent = -1;
  int label = -1;
  int depth = 0;
  double lm_score = 0.0;  // natural log, completed words only
  int words = 0;           // completed words
  std::vector<int> history;  // LM word ids, oldest first
  std::u32string partial;    // letters of the word being spelled
};

struct BeamEntry {
  int node = 0;
  double blank = kNegInf;     // log mass of paths ending in blank
  double non_blank = kNegInf;  // log mass of paths ending in the last label
  double total() const { return LogAdd(blank, non_blank); }
};

class PrefixTree {
 public:
  PrefixTree(const Vocabulary& vocab, const NgramModel* lm) : vocab_(vocab), lm_(lm) {
    PrefixNode root;
    if (lm_ != nullptr) root.history.push_back(lm_->bos_id());
    nodes_.push_back(std::move(root));
  }

  const PrefixNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  int Child(int parent, int label) {
    const uint64_t key = static_cast<uint64_t>(parent) * static_cast<uint64_t>(vocab_.size()) +
                         static_cast<uint64_t>(label);
    auto it = children_.find(key);
    if (it != children_.end()) return it->second;
    PrefixNode child = nodes_[static_cast<size_t>(parent)];
    child.parent = parent;
    child.label = label;
    child.depth += 1;
    if (label == Vocabulary::kDelimiterId) {
      if (!child.partial.empty()) CompleteWord(child);
    } else {
      child.partial.push_back(vocab_.symbol(label));
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(child));
    children_.emplace(key, id);
    return id;
  }

  LabelSequence Labels(int id) const {
    LabelSequence out;
    out.ids.resize(static_cast<size_t>(node(id).depth));
    for (int n = id; n > 0; n = node(n).parent) {
      out.ids[static_cast<size_t>(node(n).depth - 1)] = node(n).label;
    }
    return out;
  }

  // State at the end of the utterance: trailing word and sentence end.
  PrefixNode Finish(int id) const {
    PrefixNode s = node(id);
    if (!s.partial.empty()) CompleteWord(s);
    if (lm_ != nullptr) s.lm_score += kLn10 * lm_->Log10Prob(s.history, lm_->eos_id());
    return s;
  }

 private:
  void CompleteWord(PrefixNode& s) const {
    if (lm_ != nullptr) {
      const int wid = lm_->WordId(EncodeUtf8(s.partial));
      s.lm_score += kLn10 * lm_->Log10Prob(s.history, wid);
      s.history.push_back(wid);
    }
    s.words += 1;
    s.partial.clear();
  }

  const Vocabulary& vocab_;
  const NgramModel* lm_;
  std::vector<PrefixNode> nodes_;
  std::unordered_map<uint64_t, int> children_;
};

struct Ranked {
  double fused;
  std::u32string text;
  LabelSequence labels;
  size_t index;
};

bool RankBefore(const Ranked& a, const Ranked& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  if (a.text != b.text) return a.text < b.text;
  return a.labels.ids < b.labels.ids;
}

std::u32string RawText(const LabelSequence& labels, const Vocabulary& vocab) {
  std::u32string s;
  for (int id : labels.ids) s.push_back(vocab.symbol(id));
  return s;
}

}  // namespace

std::vector<Hypothesis> BeamSearchDecode(const LogitSequence& logits, const Vocabulary& vocab,
                                         const NgramModel* lm, const BeamSearchOptions& options,
                                         BeamSearchDiagnostics* diagnostics) {
  if (options.beam_width < 1) throw ValidationError("beam width must be at least 1");
  if (!std::isfinite(options.alpha) || !std::isfinite(options.beta)) {
    throw ValidationError("fusion weights must be finite");
  }
  if (options.alpha != 0.0 && lm == nullptr) {
    throw ValidationError("a language model is required when alpha is nonzero");
  }
  const Matrix& lp = logits.log_probs;
  if (lp.cols() != vocab.size()) {
    throw ValidationError("logit width " + std::to_string(lp.cols()) +
                          " does not match the vocabulary size " + std::to_string(vocab.size()));
  }
  const int V = vocab.size();
  PrefixTree tree(vocab, lm);
  auto fused = [&](const PrefixNode& n, double acoustic) {
    return acoustic + options.alpha * n.lm_score + options.beta * n.words;
  };

  std::vector<BeamEntry> beam{BeamEntry{0, 0.0, kNegInf}};
  std::unordered_map<int, size_t> slot;
  std::vector<BeamEntry> next;
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    next.clear();
    slot.clear();
    auto at = [&](int node) -> BeamEntry& {
      auto [it, inserted] = slot.emplace(node, next.size());
      if (inserted) next.push_back(BeamEntry{node, kNegInf, kNegInf});
      return next[it->second];
    };
    for (const BeamEntry& e : beam) {
      const double total = e.total();
      const int last = tree.node(e.node).label;
      {
        BeamEntry& same = at(e.node);
        same.blank = LogAdd(same.blank, total + lp(t, Vocabulary::kBlankId));
        if (last > 0) same.non_blank = LogAdd(same.non_blank, e.non_blank + lp(t, last));
      }
      for (int c = 1; c < V; ++c) {
        const int child = tree.Child(e.node, c);
        BeamEntry& ext = at(child);
        // A repeated label only starts a new symbol after a blank.
        const double src = c == last ? e.blank : total;
        ext.non_blank = LogAdd(ext.non_blank, src + lp(t, c));
      }
    }
    // Repeats reached without a blank carry no mass.
    std::erase_if(next, [](const BeamEntry& e) { return e.total() == kNegInf; });
    if (diagnostics != nullptr) {
      double mass = kNegInf;
      for (const BeamEntry& e : next) mass = LogAdd(mass, e.total());
      diagnostics->max_step_log_mass = std::max(diagnostics->max_step_log_mass, mass);
    }
    if (static_cast<int>(next.size()) > options.beam_width) {
      std::vector<Ranked> ranked;
      ranked.reserve(next.size());
      for (size_t i = 0; i < next.size(); ++i) {
        const LabelSequence labels = tree.Labels(next[i].node);
        ranked.push_back({fused(tree.node(next[i].node), next[i].total()), RawText(labels, vocab),
                          labels, i});
      }
      std::partial_sort(ranked.begin(), ranked.begin() + options.beam_width, ranked.end(), RankBefore);
      beam.clear();
      for (int i = 0; i < options.beam_width; ++i) beam.push_back(next[ranked[static_cast<size_t>(i)].index]);
    } else {
      beam = next;
    }
  }

  std::vector<Ranked> ranked;
  std::vector<Hypothesis> hyps;
  for (const BeamEntry& e : beam) {
    const PrefixNode end = tree.Finish(e.node);
    Hypothesis h;
    h.labels = tree.Labels(e.node);
    h.text = DecodeLabels(h.labels, vocab);
    h.acoustic_score = e.total();
    h.lm_score = end.lm_score;
    h.word_count = end.words;
    h.fused_score = fused(end, h.acoustic_score);
    ranked.push_back({h.fused_score, h.text.code_points(), h.labels, hyps.size()});
    hyps.push_back(std::move(h));
  }
  std::sort(ranked.begin(), ranked.end(), RankBefore);
  std::vector<Hypothesis> out;
  for (size_t i = 0; i < ranked.size() && static_cast<int>(i) < options.beam_width; ++i) {
    out.push_back(std::move(hyps[ranked[i].index]));
  }
  return out;
}

}  // namespace ckb
