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

#include "ckbasr/synth.hpp"

#include <cmath>
#include <cstdio>

#include "ckbasr/error.hpp"
#include "ckbasr/features.hpp"
#include "ckbasr/util.hpp"

namespace ckb {

namespace {

void AppendTone(std::vector<double>& out, double hz, int n, double amplitude, double phase) {
  for (int i = 0; i < n; ++i) {
    // Short raised-cosine ramps keep the burst edges from clicking.
    const int ramp = std::min(16, n / 4);
    double env = 1.0;
    if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
    if (n - 1 - i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * (n - 1 - i) / ramp);
    out.push_back(amplitude * env *
                  std::sin(2.0 * M_PI * hz * i / static_cast<double>(kModelSampleRate) + phase));
  }
}

void AppendSilence(std::vector<double>& out, int n) { out.insert(out.end(), static_cast<size_t>(n), 0.0); }

}  // namespace

std::vector<SynthUtterance> GenerateSynthCorpus(const SynthCorpusOptions& o) {
  if (o.utterances < 1) throw ValidationError("synthetic corpus needs at least one utterance");
  if (o.letters.empty() || o.letters.size() != o.letter_hz.size()) {
    throw ValidationError("each synthetic letter needs exactly one tone frequency");
  }
  if (o.min_words < 1 || o.max_words < o.min_words || o.min_word_letters < 1 ||
      o.max_word_letters < o.min_word_letters) {
    throw ValidationError("invalid synthetic word length range");
  }
  if (o.symbol_samples < 1 || o.pause_samples < 0 || o.edge_samples < 0) {
    throw ValidationError("invalid synthetic segment length");
  }
  Rng rng(o.seed);
  std::vector<SynthUtterance> out;
  for (int u = 0; u < o.utterances; ++u) {
    SynthUtterance utt;
    char id[32];
    std::snprintf(id, sizeof(id), "synth%03d", u);
    utt.id = id;
    const int speaker = static_cast<int>(rng.Below(3));
    utt.speaker = "spk" + std::to_string(speaker + 1);
    utt.gender = speaker == 1 ? "female" : "male";
    const double amplitude = o.amplitude * rng.Uniform(0.8, 1.2);

    auto burst_phase = [&] { return o.random_phase ? rng.Uniform(0.0, 2.0 * M_PI) : 0.0; };
    std::vector<double>& s = utt.audio.samples;
    std::u32string text;
    AppendSilence(s, o.edge_samples);
    const int words = o.min_words + static_cast<int>(rng.Below(static_cast<uint64_t>(o.max_words - o.min_words + 1)));
    for (int w = 0; w < words; ++w) {
      if (w > 0) {
        text.push_back(U' ');
        AppendTone(s, o.delimiter_hz, o.symbol_samples, amplitude, burst_phase());
        AppendSilence(s, o.pause_samples);
      }
      const int len = o.min_word_letters +
                      static_cast<int>(rng.Below(static_cast<uint64_t>(o.max_word_letters - o.min_word_letters + 1)));
      for (int l = 0; l < len; ++l) {
        const size_t which = static_cast<size_t>(rng.Below(o.letters.size()));
        text.push_back(o.letters[which]);
        AppendTone(s, o.letter_hz[which], o.symbol_samples, amplitude, burst_phase());
        AppendSilence(s, o.pause_samples);
      }
    }
    AppendSilence(s, o.edge_samples);
    for (double& x : s) x += o.noise * rng.Normal();
    utt.audio.sample_rate = kModelSampleRate;
    utt.transcript = EncodeUtf8(text);
    out.push_back(std::move(utt));
  }
  return out;
}

std::filesystem::path WriteSynthCorpus(const std::vector<SynthUtterance>& corpus,
                                       const std::filesystem::path& dir) {
  std::vector<ManifestEntry> entries;
  std::string lm_text;
  for (const SynthUtterance& u : corpus) {
    const std::string rel = "clips/" + u.id + ".wav";
    const std::string bytes = EncodeWav(u.audio);
    WriteFile(dir / rel, bytes);
    entries.push_back({rel, static_cast<int64_t>(bytes.size()), u.transcript, u.speaker, u.gender});
    lm_text += u.transcript + "\n";
  }
  const std::filesystem::path manifest = dir / "manifest.tsv";
  WriteFile(manifest, FormatManifest(entries));
  WriteFile(dir / "lm_corpus.txt", lm_text);
  return manifest;
}

}  // namespace ckb
