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
#include <string>
#include <vector>

#include "ckbasr/corpus.hpp"
#include "ckbasr/nn.hpp"
#include "ckbasr/util.hpp"

namespace ckb {

struct ConvLayerSpec {
  int channels = 0;
  int kernel = 0;
  int stride = 0;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// Strided 1-D convolution stack over raw samples. Each layer is
// conv -> layer norm over channels -> GELU.
struct ConvEncoderConfig {
  std::vector<ConvLayerSpec> layers;

  // Seven 512-channel layers: 400-sample receptive field, 320-sample hop.
  static ConvEncoderConfig FullScale();
  // Three 32-channel layers for tests and toy corpora.
  static ConvEncoderConfig DeskScale();

  // Sets every layer to the same channel count.
  ConvEncoderConfig WithChannels(int channels) const;

  void Validate() const;
  int64_t receptive_field() const;
  int64_t total_stride() const;
  int output_channels() const { return layers.empty() ? 0 : layers.back().channels; }

  friend bool operator==(const ConvEncoderConfig&, const ConvEncoderConfig&) = default;
};

// Frame count after folding floor((len - kernel) / stride) + 1 over the
// layers. Throws if the input is shorter than the receptive field.
int64_t ConvFrameCount(int64_t input_length, const ConvEncoderConfig& config);

struct ConvLayerParams {
  Matrix weight;  // [channels_out, kernel * channels_in], tap-major
  Matrix bias;    // [1, channels_out]
  Matrix ln_gamma;
  Matrix ln_beta;
};

struct ConvEncoderParams {
  std::vector<ConvLayerParams> layers;
};

ConvEncoderParams InitConvEncoder(const ConvEncoderConfig& config, Rng& rng);

struct FeatureSequence {
  Matrix frames;  // T x C
  int64_t frame_hop_samples = 0;
  int64_t receptive_field_samples = 0;

  int64_t frame_count() const { return frames.rows(); }
  int64_t dim() const { return frames.cols(); }
};

// The encoder has no stochastic parts, so both modes compute the same
// function; the mode argument mirrors the acoustic model API.
FeatureSequence EncodeFeatures(const Waveform& waveform,
                               const ConvEncoderParams& params,
                               const ConvEncoderConfig& config,
                               Mode mode = Mode::kEval);

inline constexpr int kModelSampleRate = 16000;

}  // namespace ckb
