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

#include "ckbasr/features.hpp"

#include <cmath>

#include "ckbasr/error.hpp"

namespace ckb {

ConvEncoderConfig ConvEncoderConfig::FullScale() {
  ConvEncoderConfig c;
  const int kernels[] = {10, 3, 3, 3, 3, 2, 2};
  const int strides[] = {5, 2, 2, 2, 2, 2, 2};
  for (int i = 0; i < 7; ++i) c.layers.push_back({512, kernels[i], strides[i]});
  return c;
}

ConvEncoderConfig ConvEncoderConfig::DeskScale() {
  ConvEncoderConfig c;
  c.layers = {{32, 10, 5}, {32, 3, 2}, {32, 2, 2}};
  return c;
}

ConvEncoderConfig ConvEncoderConfig::WithChannels(int channels) const {
  ConvEncoderConfig c = *this;
  for (ConvLayerSpec& l : c.layers) l.channels = channels;
  return c;
}

void ConvEncoderConfig::Validate() const {
  if (layers.empty()) throw ValidationError("conv encoder needs at least one layer");
  for (size_t i = 0; i < layers.size(); ++i) {
    const ConvLayerSpec& l = layers[i];
    const std::string where = "conv layer " + std::to_string(i);
    if (l.channels < 1) throw ValidationError(where + ": channels must be >= 1");
    if (l.stride < 1) throw ValidationError(where + ": stride must be >= 1");
    if (l.kernel < l.stride) throw ValidationError(where + ": kernel must be >= stride");
  }
}

int64_t ConvEncoderConfig::receptive_field() const {
  int64_t field = 1;
  int64_t jump = 1;
  for (const ConvLayerSpec& l : layers) {
    field += (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return field;
}

int64_t ConvEncoderConfig::total_stride() const {
  int64_t s = 1;
  for (const ConvLayerSpec& l : layers) s *= l.stride;
  return s;
}

int64_t ConvFrameCount(int64_t input_length, const ConvEncoderConfig& config) {
  config.Validate();
  if (input_length < config.receptive_field()) {
    throw ValidationError("input of " + std::to_string(input_length) +
                          " samples is shorter than the receptive field of " +
                          std::to_string(config.receptive_field()));
  }
  int64_t len = input_length;
  for (const ConvLayerSpec& l : config.layers) len = (len - l.kernel) / l.stride + 1;
  return len;
}

ConvEncoderParams InitConvEncoder(const ConvEncoderConfig& config, Rng& rng) {
  config.Validate();
  ConvEncoderParams p;
  int in_channels = 1;
  for (const ConvLayerSpec& l : config.layers) {
    ConvLayerParams lp;
    const int fan_in = in_channels * l.kernel;
    const int fan_out = l.channels * l.kernel;
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    lp.weight.resize(l.channels, fan_in);
    for (Eigen::Index i = 0; i < lp.weight.size(); ++i) lp.weight.data()[i] = rng.Uniform(-a, a);
    lp.bias = Matrix::Zero(1, l.channels);
    lp.ln_gamma = Matrix::Ones(1, l.channels);
    lp.ln_beta = Matrix::Zero(1, l.channels);
    p.layers.push_back(std::move(lp));
    in_channels = l.channels;
  }
  return p;
}

FeatureSequence EncodeFeatures(const Waveform& waveform,
                               const ConvEncoderParams& params,
                               const ConvEncoderConfig& config, Mode /*mode*/) {
  if (waveform.sample_rate != kModelSampleRate) {
    throw ValidationError("feature encoder expects " + std::to_string(kModelSampleRate) +
                          " Hz input, got " + std::to_string(waveform.sample_rate));
  }
  const int64_t frames = ConvFrameCount(static_cast<int64_t>(waveform.samples.size()), config);
  if (params.layers.size() != config.layers.size()) {
    throw ValidationError("conv encoder parameters do not match the configuration");
  }

  // x: rows are time steps, columns channels.
  Matrix x = Eigen::Map<const Matrix>(waveform.samples.data(),
                                      static_cast<Eigen::Index>(waveform.samples.size()), 1);
  for (size_t li = 0; li < config.layers.size(); ++li) {
    const ConvLayerSpec& spec = config.layers[li];
    const ConvLayerParams& lp = params.layers[li];
    const Eigen::Index in_ch = x.cols();
    const Eigen::Index width = spec.kernel * in_ch;
    if (lp.weight.rows() != spec.channels || lp.weight.cols() != width) {
      throw ValidationError("conv layer " + std::to_string(li) + " weight has the wrong shape");
    }
    const Eigen::Index out_len = (x.rows() - spec.kernel) / spec.stride + 1;
    // In row-major storage the receptive window of output t is the contiguous
    // span starting at row t * stride, so im2col is a strided map.
    Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> windows(
        x.data(), out_len, width, Eigen::OuterStride<>(spec.stride * in_ch));
    Matrix y = windows * lp.weight.transpose();
    y.rowwise() += lp.bias.row(0);
    x = nn::GeluForward<double>(nn::LayerNormForward<double>(y, lp.ln_gamma, lp.ln_beta, nullptr));
  }
  CKB_CHECK(x.rows() == frames, "frame count mismatch");

  FeatureSequence out;
  out.frames = std::move(x);
  out.frame_hop_samples = config.total_stride();
  out.receptive_field_samples = config.receptive_field();
  return out;
}

}  // namespace ckb
