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
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ckb {

// One manifest row. Optional speaker/gender columns are carried for corpus
// statistics only.
struct ManifestEntry {
  std::string audio_filename;
  int64_t audio_filesize = 0;
  std::string transcript;  // raw, not normalized
  std::string speaker;
  std::string gender;
};

// Parses a tab-separated manifest whose header names at least the
// audio_filename, audio_filesize and transcript columns (the mp3_* spellings
// are accepted as aliases).
std::vector<ManifestEntry> ParseManifest(std::string_view contents);
std::vector<ManifestEntry> ReadManifest(const std::filesystem::path& path);
std::string FormatManifest(const std::vector<ManifestEntry>& entries);

struct DatasetSplit {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> validation;
};

// |train| = floor(train_fraction * N) after a seeded shuffle. Both parts keep
// the manifest order of their members.
DatasetSplit SplitDataset(const std::vector<ManifestEntry>& entries,
                          double train_fraction, uint64_t seed);

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  int64_t frame_count = 0;

  double duration_seconds() const {
    return static_cast<double>(frame_count) / sample_rate;
  }
};

// RIFF/WAVE, linear PCM, 16-bit, mono. Samples are scaled by 1/32768.
WavInfo ReadWavInfo(const std::filesystem::path& path);
Waveform LoadWaveform(const std::filesystem::path& path);
Waveform DecodeWav(std::string_view bytes, const std::string& name = "<memory>");
// Clips to [-1, 1] and quantizes to 16-bit PCM.
std::string EncodeWav(const Waveform& w);
void SaveWaveform(const Waveform& w, const std::filesystem::path& path);

// Kaiser-windowed sinc resampler with 16 zero crossings per side, evaluated
// polyphase over the reduced rational rate ratio.
Waveform Resample(const Waveform& w, int target_rate);

// Zero-pads or truncates at the end to exactly seconds * sample_rate samples.
Waveform FixDuration(const Waveform& w, double seconds);

// Zero mean, unit variance; near-constant input becomes all zeros.
Waveform NormalizeWaveform(const Waveform& w);

struct SplitStats {
  std::string name;
  double total_seconds = 0.0;
  int64_t utterance_count = 0;
  int64_t speaker_count = 0;  // 0 when no speaker column is present
  std::map<std::string, int64_t> gender_counts;
  std::vector<double> durations;  // per entry, seconds; failed reads omitted
};

struct CorpusStats {
  std::vector<SplitStats> splits;
  double total_seconds = 0.0;
  int64_t utterance_count = 0;
  int64_t speaker_count = 0;
  std::map<std::string, int64_t> gender_counts;
  std::vector<std::string> errors;  // unreadable files, not fatal

  double total_hours() const { return total_seconds / 3600.0; }
};

CorpusStats ComputeCorpusStats(
    const std::vector<std::pair<std::string, std::vector<ManifestEntry>>>& splits,
    const std::filesystem::path& audio_root);
CorpusStats ComputeCorpusStats(const std::vector<ManifestEntry>& entries,
                               const std::filesystem::path& audio_root);

std::string RenderStatsReport(const CorpusStats& stats);

}  // namespace ckb
