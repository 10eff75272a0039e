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

#include "ckbasr/corpus.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"
#include "test_util.hpp"

namespace ckb {
namespace {

const char* kHeader = "audio_filename\taudio_filesize\ttranscript\n";

TEST(ManifestTest, PublishedRowWithMp3Columns) {
  const auto entries = ParseManifest(
      "mp3_filename\tmp3_filesize (Bytes)\ttranscript\n"
      "001MLU606.mp3\t152962\tههست به ئازار دەکەم\n");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].audio_filename, "001MLU606.mp3");
  EXPECT_EQ(entries[0].audio_filesize, 152962);
  EXPECT_EQ(entries[0].transcript, "ههست به ئازار دەکەم");
}

TEST(ManifestTest, HeaderOnlyIsEmptyList) { EXPECT_TRUE(ParseManifest(kHeader).empty()); }

TEST(ManifestTest, EmptyFileIsError) { EXPECT_THROW(ParseManifest(""), Error); }

TEST(ManifestTest, BadSizeNamesRow) {
  try {
    ParseManifest(std::string(kHeader) + "a.wav\t10\tب\nb.wav\tabc\tد\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, MissingColumn) {
  try {
    ParseManifest("audio_filename\ttranscript\na.wav\tب\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("audio_filesize"), std::string::npos);
  }
}

TEST(ManifestTest, OptionalColumnsAndOrder) {
  const auto entries = ParseManifest(
      "client_id\taudio_filename\ttranscript\taudio_filesize\tgender\n"
      "s1\ta.wav\tب\t1\tmale\n"
      "s2\tb.wav\tد\t2\tfemale\n");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].speaker, "s1");
  EXPECT_EQ(entries[1].gender, "female");
  EXPECT_EQ(entries[1].audio_filesize, 2);
  EXPECT_EQ(ParseManifest(FormatManifest(entries))[1].audio_filename, "b.wav");
}

TEST(ManifestTest, MissingFileIsMissingInput) {
  try {
    ReadManifest("/nonexistent/manifest.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingInput);
  }
}

std::vector<ManifestEntry> MakeEntries(int n) {
  std::vector<ManifestEntry> out;
  for (int i = 0; i < n; ++i) out.push_back({"f" + std::to_string(i) + ".wav", i, "ب", "", ""});
  return out;
}

TEST(SplitTest, TenEntries) {
  const DatasetSplit s = SplitDataset(MakeEntries(10), 0.9, 7);
  EXPECT_EQ(s.train.size(), 9u);
  EXPECT_EQ(s.validation.size(), 1u);
}

TEST(SplitTest, Deterministic) {
  const DatasetSplit a = SplitDataset(MakeEntries(50), 0.8, 3);
  const DatasetSplit b = SplitDataset(MakeEntries(50), 0.8, 3);
  EXPECT_EQ(FormatManifest(a.train), FormatManifest(b.train));
  EXPECT_EQ(FormatManifest(a.validation), FormatManifest(b.validation));
}

TEST(SplitTest, HoursAnalogue) {
  // 224 h split 90/10: 2240 six-minute units -> 2016 / 224.
  const DatasetSplit s = SplitDataset(MakeEntries(2240), 0.9, 1);
  EXPECT_NEAR(s.train.size() * 0.1, 201.6, 1e-9);
  EXPECT_NEAR(s.validation.size() * 0.1, 22.4, 1e-9);
}

TEST(SplitTest, FractionOutOfRange) {
  EXPECT_THROW(SplitDataset(MakeEntries(4), 0.0, 1), Error);
  EXPECT_THROW(SplitDataset(MakeEntries(4), 1.0, 1), Error);
  EXPECT_THROW(SplitDataset({}, 0.5, 1), Error);
}

TEST(SplitTest, PropertyPartition) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.Below(60));
    const double f = rng.Uniform(0.01, 0.99);
    const auto entries = MakeEntries(n);
    const DatasetSplit s = SplitDataset(entries, f, rng.NextU64());
    ASSERT_EQ(s.train.size(), static_cast<size_t>(std::floor(f * n + 1e-9)));
    std::multiset<std::string> all;
    for (const auto& e : s.train) all.insert(e.audio_filename);
    for (const auto& e : s.validation) all.insert(e.audio_filename);
    ASSERT_EQ(all.size(), static_cast<size_t>(n));
    ASSERT_EQ(std::set<std::string>(all.begin(), all.end()).size(), static_cast<size_t>(n));
  }
}

Waveform Tone(double hz, int rate, int n, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  for (int i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2 * M_PI * hz * i / rate));
  return w;
}

TEST(WavTest, SilenceRoundTrip) {
  const auto dir = testing::TempDir();
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.0);
  SaveWaveform(w, dir / "s.wav");
  const Waveform r = LoadWaveform(dir / "s.wav");
  EXPECT_EQ(r.sample_rate, 16000);
  ASSERT_EQ(r.samples.size(), 16000u);
  for (double x : r.samples) ASSERT_EQ(x, 0.0);
  EXPECT_DOUBLE_EQ(r.duration_seconds(), 1.0);
}

TEST(WavTest, FullScaleSquare) {
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 100; ++i) w.samples.push_back(i % 20 < 10 ? 1.0 : -1.0);
  const Waveform r = DecodeWav(EncodeWav(w));
  for (size_t i = 0; i < r.samples.size(); ++i) {
    ASSERT_NEAR(r.samples[i], w.samples[i], 1.0 / 32768.0);
  }
  EXPECT_NEAR(r.samples[0], 1.0, 1.0 / 32768.0);
}

// Hand-built RIFF header.
std::string RawWav(int channels, int bits, int format, int rate, int data_bytes) {
  std::string s;
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&](uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
  };
  s += "RIFF";
  u32(36 + data_bytes);
  s += "WAVEfmt ";
  u32(16);
  u16(static_cast<uint16_t>(format));
  u16(static_cast<uint16_t>(channels));
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<uint16_t>(channels * bits / 8));
  u16(static_cast<uint16_t>(bits));
  s += "data";
  u32(data_bytes);
  s += std::string(static_cast<size_t>(data_bytes), '\0');
  return s;
}

TEST(WavTest, UnsupportedFormats) {
  EXPECT_THROW(DecodeWav(RawWav(2, 16, 1, 16000, 8)), Error);
  EXPECT_THROW(DecodeWav(RawWav(1, 8, 1, 16000, 8)), Error);
  EXPECT_THROW(DecodeWav(RawWav(1, 16, 3, 16000, 8)), Error);
  EXPECT_NO_THROW(DecodeWav(RawWav(1, 16, 1, 16000, 8)));
}

TEST(WavTest, Truncated) {
  const std::string full = RawWav(1, 16, 1, 16000, 100);
  EXPECT_THROW(DecodeWav(full.substr(0, full.size() - 10)), Error);
  EXPECT_THROW(DecodeWav(full.substr(0, 20)), Error);
  EXPECT_THROW(DecodeWav("not a wav"), Error);
}

TEST(ResampleTest, EqualRateIsBitwiseCopy) {
  const Waveform w = Tone(440, 16000, 1000);
  const Waveform r = Resample(w, 16000);
  EXPECT_EQ(r.samples, w.samples);
  EXPECT_EQ(r.sample_rate, 16000);
}

TEST(ResampleTest, ConstantSignalUpsampled) {
  Waveform w;
  w.sample_rate = 8000;
  w.samples.assign(800, 0.25);
  const Waveform r = Resample(w, 16000);
  ASSERT_EQ(r.samples.size(), 1600u);
  // Away from the edges the DC level is exact up to rounding.
  for (size_t i = 40; i + 40 < r.samples.size(); ++i) ASSERT_NEAR(r.samples[i], 0.25, 1e-9);
}

TEST(ResampleTest, SineMatchesAnalytic) {
  const Waveform w = Tone(440, 8000, 8000);
  const Waveform r = Resample(w, 16000);
  EXPECT_EQ(r.sample_rate, 16000);
  double worst = 0;
  for (size_t i = 100; i + 100 < r.samples.size(); ++i) {
    worst = std::max(worst, std::abs(r.samples[i] - 0.5 * std::sin(2 * M_PI * 440 * i / 16000.0)));
  }
  EXPECT_LE(worst, 1e-2);
}

TEST(ResampleTest, DurationPreserved) {
  for (int rate : {8000, 11025, 22050, 44100, 48000}) {
    const Waveform w = Tone(300, rate, rate / 2 + 7);
    const Waveform r = Resample(w, 16000);
    EXPECT_LE(std::abs(r.duration_seconds() - w.duration_seconds()), 1.0 / 16000) << rate;
  }
}

TEST(ResampleTest, RoundTripBandLimited) {
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 4000; ++i) {
    const double t = i / 8000.0;
    w.samples.push_back(0.3 * std::sin(2 * M_PI * 300 * t) + 0.2 * std::sin(2 * M_PI * 1100 * t + 1.0));
  }
  const Waveform back = Resample(Resample(w, 16000), 8000);
  ASSERT_EQ(back.samples.size(), w.samples.size());
  double worst = 0;
  for (size_t i = 100; i + 100 < w.samples.size(); ++i) {
    worst = std::max(worst, std::abs(back.samples[i] - w.samples[i]));
  }
  EXPECT_LE(worst, 1e-2);
}

TEST(FixDurationTest, PadTwelveSeconds) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(5 * 16000, 0.5);
  const Waveform r = FixDuration(w, 12.0);
  ASSERT_EQ(r.samples.size(), 192000u);
  for (size_t i = 80000; i < r.samples.size(); ++i) ASSERT_EQ(r.samples[i], 0.0);
  EXPECT_EQ(r.samples[79999], 0.5);
}

TEST(FixDurationTest, ExactAndTruncate) {
  Waveform w = Tone(100, 16000, 192000);
  EXPECT_EQ(FixDuration(w, 12.0).samples, w.samples);
  Waveform longer = Tone(100, 16000, 320000);
  const Waveform r = FixDuration(longer, 12.0);
  ASSERT_EQ(r.samples.size(), 192000u);
  EXPECT_TRUE(std::equal(r.samples.begin(), r.samples.end(), longer.samples.begin()));
}

TEST(FixDurationTest, NonPositiveIsError) {
  EXPECT_THROW(FixDuration(Tone(1, 16000, 10), 0.0), Error);
  EXPECT_THROW(FixDuration(Tone(1, 16000, 10), -1.0), Error);
}

TEST(FixDurationTest, PropertyExactLength) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(rng.Below(40000), 0.1);
    const double seconds = 0.01 + rng.Uniform() * 2.0;
    ASSERT_EQ(FixDuration(w, seconds).samples.size(), static_cast<size_t>(std::llround(seconds * 16000)));
  }
}

void Moments(const std::vector<double>& x, double& mean, double& var) {
  mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= x.size();
}

TEST(NormalizeWaveformTest, Examples) {
  Waveform c;
  c.sample_rate = 16000;
  c.samples = {1, 1, 1, 1};
  EXPECT_EQ(NormalizeWaveform(c).samples, (std::vector<double>{0, 0, 0, 0}));
  Waveform u;
  u.sample_rate = 16000;
  u.samples = {-1, 1};
  const Waveform r = NormalizeWaveform(u);
  EXPECT_NEAR(r.samples[0], -1.0, 1e-12);
  EXPECT_NEAR(r.samples[1], 1.0, 1e-12);
}

TEST(NormalizeWaveformTest, PropertyMomentsAndIdempotence) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    Waveform w;
    w.sample_rate = 16000;
    const int n = 2 + static_cast<int>(rng.Below(500));
    const double shift = rng.Uniform(-3, 3), scale = rng.Uniform(0.01, 10);
    for (int k = 0; k < n; ++k) w.samples.push_back(shift + scale * rng.Normal());
    const Waveform a = NormalizeWaveform(w);
    double mean, var;
    Moments(a.samples, mean, var);
    ASSERT_LE(std::abs(mean), 1e-9);
    ASSERT_LE(std::abs(var - 1.0), 1e-9);
    const Waveform b = NormalizeWaveform(a);
    for (int k = 0; k < n; ++k) ASSERT_NEAR(a.samples[k], b.samples[k], 1e-9);
  }
}

TEST(StatsTest, ThreeTwoSecondFiles) {
  const auto dir = testing::TempDir();
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "a" + std::to_string(i) + ".wav";
    SaveWaveform(Tone(200, 16000, 32000), dir / name);
    entries.push_back({name, 0, "ب", "spk" + std::to_string(i % 2), i == 0 ? "female" : "male"});
  }
  const CorpusStats s = ComputeCorpusStats(entries, dir);
  EXPECT_DOUBLE_EQ(s.total_seconds, 6.0);
  EXPECT_EQ(s.utterance_count, 3);
  EXPECT_EQ(s.speaker_count, 2);
  EXPECT_EQ(s.gender_counts.at("male"), 2);
  EXPECT_TRUE(s.errors.empty());
  const std::string report = RenderStatsReport(s);
  EXPECT_NE(report.find("Total"), std::string::npos);
  EXPECT_NE(report.find("6.000"), std::string::npos);
}

TEST(StatsTest, EmptyManifest) {
  const CorpusStats s = ComputeCorpusStats(std::vector<ManifestEntry>{}, "/tmp");
  EXPECT_EQ(s.total_seconds, 0.0);
  EXPECT_EQ(s.utterance_count, 0);
}

TEST(StatsTest, MixedRatesAndMissingFiles) {
  const auto dir = testing::TempDir();
  SaveWaveform(Tone(200, 8000, 8000), dir / "a.wav");     // 1 s
  SaveWaveform(Tone(200, 44100, 22050), dir / "b.wav");   // 0.5 s
  const std::vector<ManifestEntry> entries = {
      {"a.wav", 0, "ب", "", ""}, {"b.wav", 0, "ب", "", ""}, {"missing.wav", 0, "ب", "", ""}};
  const CorpusStats s = ComputeCorpusStats({{"train", entries}}, dir);
  EXPECT_DOUBLE_EQ(s.total_seconds, 1.5);
  EXPECT_EQ(s.errors.size(), 1u);
  ASSERT_EQ(s.splits.size(), 1u);
  EXPECT_EQ(s.splits[0].durations.size(), 2u);
}

}  // namespace
}  // namespace ckb
