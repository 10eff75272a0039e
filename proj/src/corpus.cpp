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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include "ckbasr/error.hpp"
#include "ckbasr/util.hpp"

namespace ckb {
namespace {

// "mp3_filesize (Bytes)" -> "mp3_filesize"
std::string CanonicalColumnName(const std::string& raw) {
  std::string name = Trim(raw);
  const size_t paren = name.find(" (");
  if (paren != std::string::npos) name = Trim(name.substr(0, paren));
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (name == "mp3_filename" || name == "wav_filename") return "audio_filename";
  if (name == "mp3_filesize" || name == "wav_filesize") return "audio_filesize";
  return name;
}

uint16_t ReadU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void PutU16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ParsedWav {
  WavInfo info;
  size_t data_offset = 0;
};

ParsedWav ParseWav(std::string_view bytes, const std::string& name) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw ValidationError(name + ": not a RIFF/WAVE file");
  }
  ParsedWav out;
  bool have_fmt = false;
  size_t pos = 12;
  while (true) {
    if (pos + 8 > n) throw ValidationError(name + ": truncated file (no data chunk)");
    const uint32_t chunk_size = ReadU32(p + pos + 4);
    const bool is_fmt = std::memcmp(p + pos, "fmt ", 4) == 0;
    const bool is_data = std::memcmp(p + pos, "data", 4) == 0;
    const size_t body = pos + 8;
    if (is_data) {
      if (!have_fmt) throw ValidationError(name + ": data chunk before fmt chunk");
      if (body + chunk_size > n) throw ValidationError(name + ": truncated file");
      const int block = out.info.channels * out.info.bits_per_sample / 8;
      if (chunk_size % block != 0) throw ValidationError(name + ": truncated sample frame");
      out.info.frame_count = chunk_size / block;
      out.data_offset = body;
      return out;
    }
    if (body + chunk_size > n) throw ValidationError(name + ": truncated file");
    if (is_fmt) {
      if (chunk_size < 16) throw ValidationError(name + ": short fmt chunk");
      uint16_t format = ReadU16(p + body);
      out.info.channels = ReadU16(p + body + 2);
      out.info.sample_rate = static_cast<int>(ReadU32(p + body + 4));
      out.info.bits_per_sample = ReadU16(p + body + 14);
      if (format == 0xFFFE && chunk_size >= 26) format = ReadU16(p + body + 24);
      if (format != 1) {
        throw ValidationError(name + ": unsupported encoding (format tag " +
                              std::to_string(format) + "); linear PCM required");
      }
      if (out.info.channels != 1) {
        throw ValidationError(name + ": unsupported channel count " +
                              std::to_string(out.info.channels) + "; mono required");
      }
      if (out.info.bits_per_sample != 16) {
        throw ValidationError(name + ": unsupported sample width " +
                              std::to_string(out.info.bits_per_sample) +
                              " bits; 16-bit required");
      }
      if (out.info.sample_rate <= 0) throw ValidationError(name + ": bad sample rate");
      have_fmt = true;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
}

double BesselI0(double x) { return std::cyl_bessel_i(0.0, x); }

}  // namespace

std::vector<ManifestEntry> ParseManifest(std::string_view contents) {
  std::vector<std::string> lines = SplitLines(contents);
  // Strip a UTF-8 byte order mark.
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  size_t header_idx = 0;
  while (header_idx < lines.size() && Trim(lines[header_idx]).empty()) ++header_idx;
  if (header_idx == lines.size()) throw ValidationError("manifest is empty");

  const std::vector<std::string> header = SplitChar(lines[header_idx], '\t');
  int col_file = -1, col_size = -1, col_text = -1, col_speaker = -1, col_gender = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    const std::string c = CanonicalColumnName(header[i]);
    const int idx = static_cast<int>(i);
    if (c == "audio_filename") col_file = idx;
    else if (c == "audio_filesize") col_size = idx;
    else if (c == "transcript") col_text = idx;
    else if (c == "speaker" || c == "speaker_id" || c == "client_id") col_speaker = idx;
    else if (c == "gender") col_gender = idx;
  }
  for (auto [col, name] : {std::pair{col_file, "audio_filename"},
                           std::pair{col_size, "audio_filesize"},
                           std::pair{col_text, "transcript"}}) {
    if (col < 0) throw ValidationError(std::string("manifest is missing column ") + name);
  }
  const int needed = std::max({col_file, col_size, col_text});

  std::vector<ManifestEntry> entries;
  for (size_t li = header_idx + 1; li < lines.size(); ++li) {
    if (Trim(lines[li]).empty()) continue;
    const std::string where = std::to_string(entries.size() + 1) + " (line " + std::to_string(li + 1) + ")";
    const std::vector<std::string> f = SplitChar(lines[li], '\t');
    if (static_cast<int>(f.size()) <= needed) {
      throw ValidationError("manifest row " + where +
                            ": expected at least " + std::to_string(needed + 1) +
                            " tab-separated fields");
    }
    ManifestEntry e;
    e.audio_filename = Trim(f[col_file]);
    if (e.audio_filename.empty()) {
      throw ValidationError("manifest row " + where + ": empty audio_filename");
    }
    const std::string size_field = Trim(f[col_size]);
    const bool numeric = !size_field.empty() &&
                         std::all_of(size_field.begin(), size_field.end(),
                                     [](unsigned char c) { return std::isdigit(c); });
    if (!numeric || size_field.size() > 18) {
      throw ValidationError("manifest row " + where +
                            ": malformed audio_filesize '" + size_field + "'");
    }
    e.audio_filesize = std::stoll(size_field);
    e.transcript = f[col_text];
    if (col_speaker >= 0 && col_speaker < static_cast<int>(f.size())) e.speaker = Trim(f[col_speaker]);
    if (col_gender >= 0 && col_gender < static_cast<int>(f.size())) e.gender = Trim(f[col_gender]);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> ReadManifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingInputError("manifest not found: " + path.string());
  }
  return ParseManifest(ReadFile(path));
}

std::string FormatManifest(const std::vector<ManifestEntry>& entries) {
  const bool with_speaker = std::any_of(entries.begin(), entries.end(),
                                        [](const auto& e) { return !e.speaker.empty(); });
  const bool with_gender = std::any_of(entries.begin(), entries.end(),
                                       [](const auto& e) { return !e.gender.empty(); });
  std::string out = "audio_filename\taudio_filesize\ttranscript";
  if (with_speaker) out += "\tspeaker";
  if (with_gender) out += "\tgender";
  out += '\n';
  for (const ManifestEntry& e : entries) {
    out += e.audio_filename + '\t' + std::to_string(e.audio_filesize) + '\t' + e.transcript;
    if (with_speaker) out += '\t' + e.speaker;
    if (with_gender) out += '\t' + e.gender;
    out += '\n';
  }
  return out;
}

DatasetSplit SplitDataset(const std::vector<ManifestEntry>& entries,
                          double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  }
  if (entries.empty()) throw ValidationError("cannot split an empty manifest");
  const size_t n = entries.size();
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto n_train = static_cast<size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.Shuffle(order);
  std::vector<size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<size_t> valid_idx(order.begin() + n_train, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(valid_idx.begin(), valid_idx.end());
  DatasetSplit split;
  for (size_t i : train_idx) split.train.push_back(entries[i]);
  for (size_t i : valid_idx) split.validation.push_back(entries[i]);
  return split;
}

WavInfo ReadWavInfo(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("audio not found: " + path.string());
  return ParseWav(ReadFile(path), path.string()).info;
}

Waveform DecodeWav(std::string_view bytes, const std::string& name) {
  const ParsedWav parsed = ParseWav(bytes, name);
  Waveform w;
  w.sample_rate = parsed.info.sample_rate;
  w.samples.resize(static_cast<size_t>(parsed.info.frame_count));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + parsed.data_offset;
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const auto v = static_cast<int16_t>(ReadU16(p + 2 * i));
    w.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return w;
}

Waveform LoadWaveform(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("audio not found: " + path.string());
  return DecodeWav(ReadFile(path), path.string());
}

std::string EncodeWav(const Waveform& w) {
  if (w.sample_rate <= 0) throw ValidationError("sample rate must be positive");
  const auto data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<uint32_t>(w.sample_rate));
  PutU32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, data_bytes);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const long q = std::lround(clipped * 32768.0);
    PutU16(out, static_cast<uint16_t>(static_cast<int16_t>(std::clamp(q, -32768L, 32767L))));
  }
  return out;
}

void SaveWaveform(const Waveform& w, const std::filesystem::path& path) {
  WriteFile(path, EncodeWav(w));
}

Waveform Resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ValidationError("target sample rate must be positive");
  if (w.sample_rate <= 0) throw ValidationError("input sample rate must be positive");
  if (target_rate == w.sample_rate) return w;

  constexpr int kZeroCrossings = 16;
  constexpr double kKaiserBeta = 8.6;
  const int64_t g = std::gcd<int64_t>(target_rate, w.sample_rate);
  const int64_t up = target_rate / g;      // L
  const int64_t down = w.sample_rate / g;  // M
  // Cutoff relative to the input Nyquist rate.
  const double cutoff = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const int half_width = static_cast<int>(std::ceil(kZeroCrossings / cutoff));
  const double i0_beta = BesselI0(kKaiserBeta);

  // taps[phase][j] weights input sample base + j - half_width + 1.
  const int taps_per_phase = 2 * half_width;
  std::vector<double> taps(static_cast<size_t>(up * taps_per_phase));
  for (int64_t phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    double sum = 0.0;
    for (int j = 0; j < taps_per_phase; ++j) {
      const double offset = frac - static_cast<double>(j - half_width + 1);
      const double x = cutoff * offset;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double u = offset / (static_cast<double>(kZeroCrossings) / cutoff);
      const double window =
          std::abs(u) >= 1.0 ? 0.0 : BesselI0(kKaiserBeta * std::sqrt(1.0 - u * u)) / i0_beta;
      const double h = cutoff * sinc * window;
      taps[static_cast<size_t>(phase * taps_per_phase + j)] = h;
      sum += h;
    }
    // Unit DC gain in every phase.
    for (int j = 0; j < taps_per_phase; ++j) {
      taps[static_cast<size_t>(phase * taps_per_phase + j)] /= sum;
    }
  }

  const auto n_in = static_cast<int64_t>(w.samples.size());
  const int64_t n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<size_t>(n_out), 0.0);
  for (int64_t n = 0; n < n_out; ++n) {
    const int64_t pos = n * down;
    const int64_t base = pos / up;
    const int64_t phase = pos % up;
    const double* h = &taps[static_cast<size_t>(phase * taps_per_phase)];
    double acc = 0.0;
    for (int j = 0; j < taps_per_phase; ++j) {
      const int64_t k = base + j - half_width + 1;
      if (k < 0 || k >= n_in) continue;
      acc += h[j] * w.samples[static_cast<size_t>(k)];
    }
    out.samples[static_cast<size_t>(n)] = acc;
  }
  return out;
}

Waveform FixDuration(const Waveform& w, double seconds) {
  if (!(seconds > 0.0)) throw ValidationError("target duration must be positive");
  if (w.sample_rate <= 0) throw ValidationError("sample rate must be positive");
  const auto target = static_cast<size_t>(std::llround(seconds * w.sample_rate));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(target, 0.0);
  std::copy_n(w.samples.begin(), std::min(target, w.samples.size()), out.samples.begin());
  return out;
}

Waveform NormalizeWaveform(const Waveform& w) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.size(), 0.0);
  if (w.samples.empty()) return out;
  const double n = static_cast<double>(w.samples.size());
  double mean = 0.0;
  for (double s : w.samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : w.samples) var += (s - mean) * (s - mean);
  var /= n;
  if (var < 1e-12) return out;
  const double inv = 1.0 / std::sqrt(var);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    out.samples[i] = (w.samples[i] - mean) * inv;
  }
  return out;
}

CorpusStats ComputeCorpusStats(
    const std::vector<std::pair<std::string, std::vector<ManifestEntry>>>& splits,
    const std::filesystem::path& audio_root) {
  CorpusStats stats;
  std::set<std::string> all_speakers;
  for (const auto& [name, entries] : splits) {
    SplitStats s;
    s.name = name;
    std::set<std::string> speakers;
    for (const ManifestEntry& e : entries) {
      ++s.utterance_count;
      if (!e.speaker.empty()) speakers.insert(e.speaker);
      if (!e.gender.empty()) ++s.gender_counts[e.gender];
      try {
        const double d = ReadWavInfo(audio_root / e.audio_filename).duration_seconds();
        s.durations.push_back(d);
        s.total_seconds += d;
      } catch (const Error& err) {
        stats.errors.push_back(err.what());
      }
    }
    s.speaker_count = static_cast<int64_t>(speakers.size());
    all_speakers.insert(speakers.begin(), speakers.end());
    stats.total_seconds += s.total_seconds;
    stats.utterance_count += s.utterance_count;
    for (const auto& [g, c] : s.gender_counts) stats.gender_counts[g] += c;
    stats.splits.push_back(std::move(s));
  }
  stats.speaker_count = static_cast<int64_t>(all_speakers.size());
  return stats;
}

CorpusStats ComputeCorpusStats(const std::vector<ManifestEntry>& entries,
                               const std::filesystem::path& audio_root) {
  return ComputeCorpusStats({{"corpus", entries}}, audio_root);
}

namespace {

std::string FormatGenders(const std::map<std::string, int64_t>& counts) {
  int64_t total = 0;
  for (const auto& [g, c] : counts) total += c;
  if (total == 0) return "-";
  std::string out;
  for (const auto& [g, c] : counts) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f%% %s", 100.0 * static_cast<double>(c) / total,
                  g.c_str());
    if (!out.empty()) out += ", ";
    out += buf;
  }
  return out;
}

std::string Pad(const std::string& s, size_t width) {
  // Labels here are ASCII or manifest-provided; pad by code point count.
  const size_t len = DecodeUtf8(s).size();
  return s + std::string(width > len ? width - len : 0, ' ');
}

}  // namespace

std::string RenderStatsReport(const CorpusStats& stats) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Name dataset", "Total time", "Seconds", "Utterances",
                  "Number of speakers", "Genders"});
  auto add_row = [&rows](const std::string& name, double seconds, int64_t utts,
                         int64_t speakers, const std::map<std::string, int64_t>& genders) {
    char hours[32], secs[32];
    std::snprintf(hours, sizeof(hours), "%.3f H", seconds / 3600.0);
    std::snprintf(secs, sizeof(secs), "%.3f", seconds);
    rows.push_back({name, hours, secs, std::to_string(utts),
                    speakers > 0 ? std::to_string(speakers) : "-", FormatGenders(genders)});
  };
  for (const SplitStats& s : stats.splits) {
    add_row(s.name, s.total_seconds, s.utterance_count, s.speaker_count, s.gender_counts);
  }
  add_row("Total", stats.total_seconds, stats.utterance_count, stats.speaker_count,
          stats.gender_counts);

  std::vector<size_t> widths(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], DecodeUtf8(r[i]).size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) {
      out << (i + 1 < r.size() ? Pad(r[i], widths[i] + 2) : r[i]);
    }
    out << '\n';
  }
  for (const std::string& e : stats.errors) out << "error: " << e << '\n';
  return out.str();
}

}  // namespace ckb
