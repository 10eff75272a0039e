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
#include <string>
#include <vector>

#include "ckbasr/corpus.hpp"

namespace ckb {

// Tone-coded toy corpus: each letter is a sine burst at its own frequency,
// the word delimiter is a burst at a separate frequency, and short silences
// separate consecutive symbols so repeated letters stay distinguishable.
// Defaults put every frequency on a multiple of 800 Hz and every segment
// boundary on a multiple of 20 samples, so with the desk encoder hop each
// frame inside a burst sees the same waveform up to noise.
struct SynthCorpusOptions {
  int utterances = 30;
  std::u32string letters = U"بدر";  // beh, dal, reh
  std::vector<double> letter_hz = {800.0, 1600.0, 3200.0};
  double delimiter_hz = 4800.0;
  int min_words = 1;
  int max_words = 3;
  int min_word_letters = 1;
  int max_word_letters = 3;
  int symbol_samples = 160;
  int pause_samples = 80;
  int edge_samples = 160;
  double amplitude = 0.5;
  double noise = 0.01;
  bool random_phase = false;
  uint64_t seed = 7;
};

struct SynthUtterance {
  std::string id;
  std::string transcript;  // UTF-8, already canonical
  Waveform audio;          // 16 kHz mono
  std::string speaker;
  std::string gender;
};

std::vector<SynthUtterance> GenerateSynthCorpus(const SynthCorpusOptions& options = {});

// Writes clips/<id>.wav, manifest.tsv (paths relative to `dir`) and
// lm_corpus.txt with one transcript per line. Returns the manifest path.
std::filesystem::path WriteSynthCorpus(const std::vector<SynthUtterance>& corpus,
                                       const std::filesystem::path& dir);

}  // namespace ckb
