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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ckbasr/ctc.hpp"
#include "ckbasr/features.hpp"
#include "ckbasr/nn.hpp"
#include "ckbasr/textnorm.hpp"
#include "ckbasr/util.hpp"

namespace ckb {

struct ModelConfig {
  ConvEncoderConfig encoder;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 4;
  int ff_dim = 64;
  int vocab_size = 0;
  double attention_dropout = 0.1;
  double hidden_dropout = 0.1;
  double feat_proj_dropout = 0.0;
  double layerdrop_prob = 0.05;
  int pos_conv_kernel = 7;
  int pos_conv_groups = 2;
  uint64_t seed = 1;

  // 768-wide, 12 layers.
  static ModelConfig Base(int vocab_size);
  // 1024-wide, 24 layers.
  static ModelConfig Large(int vocab_size);
  // Small enough to train on one core in minutes.
  static ModelConfig Desk(int vocab_size);
  static ModelConfig Preset(const std::string& name, int vocab_size);

  void Validate() const;

  // key=value lines; Parse is strict about unknown keys.
  std::string Serialize() const;
  static ModelConfig Parse(std::string_view text);
  // Applies one key=value assignment using the Serialize() key names.
  void Set(const std::string& key, const std::string& value);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TransformerLayerParams {
  Matrix attn_ln_gamma, attn_ln_beta;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ff_ln_gamma, ff_ln_beta;
  Matrix w1, b1, w2, b2;
};

// All weights of the model. Matrices are [in, out], biases [1, out]. The
// feature encoder is frozen during fine-tuning and is visited only by
// VisitAll.
struct ModelParams {
  ConvEncoderParams encoder;
  Matrix proj_w, proj_b;  // conv channels -> d_model
  Matrix pos_w, pos_b;    // grouped conv: [d_model, (d_model / groups) * kernel]
  std::vector<TransformerLayerParams> layers;
  Matrix final_ln_gamma, final_ln_beta;
  Matrix out_w, out_b;    // d_model -> vocab

  template <typename Self, typename F>
  static void VisitTrainableImpl(Self& self, F&& f) {
    f("proj_w", self.proj_w);
    f("proj_b", self.proj_b);
    f("pos_w", self.pos_w);
    f("pos_b", self.pos_b);
    for (size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      f(p + "attn_ln_gamma", l.attn_ln_gamma);
      f(p + "attn_ln_beta", l.attn_ln_beta);
      f(p + "wq", l.wq);
      f(p + "bq", l.bq);
      f(p + "wk", l.wk);
      f(p + "bk", l.bk);
      f(p + "wv", l.wv);
      f(p + "bv", l.bv);
      f(p + "wo", l.wo);
      f(p + "bo", l.bo);
      f(p + "ff_ln_gamma", l.ff_ln_gamma);
      f(p + "ff_ln_beta", l.ff_ln_beta);
      f(p + "w1", l.w1);
      f(p + "b1", l.b1);
      f(p + "w2", l.w2);
      f(p + "b2", l.b2);
    }
    f("final_ln_gamma", self.final_ln_gamma);
    f("final_ln_beta", self.final_ln_beta);
    f("out_w", self.out_w);
    f("out_b", self.out_b);
  }

  template <typename F>
  void VisitTrainable(F&& f) { VisitTrainableImpl(*this, f); }
  template <typename F>
  void VisitTrainable(F&& f) const { VisitTrainableImpl(*this, f); }

  template <typename Self, typename F>
  static void VisitAllImpl(Self& self, F&& f) {
    for (size_t i = 0; i < self.encoder.layers.size(); ++i) {
      auto& l = self.encoder.layers[i];
      const std::string p = "encoder" + std::to_string(i) + ".";
      f(p + "weight", l.weight);
      f(p + "bias", l.bias);
      f(p + "ln_gamma", l.ln_gamma);
      f(p + "ln_beta", l.ln_beta);
    }
    VisitTrainableImpl(self, f);
  }

  template <typename F>
  void VisitAll(F&& f) { VisitAllImpl(*this, f); }
  template <typename F>
  void VisitAll(F&& f) const { VisitAllImpl(*this, f); }

  // Same shapes, all zeros.
  ModelParams ZerosLike() const;
  size_t trainable_count() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

// Xavier-uniform matrices, zero biases, unit layer-norm gains; a function of
// config.seed only.
ModelParams InitParams(const ModelConfig& config);

// Checks every tensor against the shapes implied by the config.
void CheckShapes(const ModelParams& params, const ModelConfig& config);

struct ForwardOptions {
  bool skip_all_layers = false;  // bypass every transformer layer
};

// Feature projection, positional grouped conv, pre-norm transformer layers,
// final norm, output projection and log-softmax. Dropout and layerdrop are
// active only in Mode::kTrain and draw from `rng`.
LogitSequence Forward(const FeatureSequence& features, const ModelParams& params,
                      const ModelConfig& config, Mode mode, Rng& rng,
                      const ForwardOptions& options = {});

// Eval-mode forward evaluated in 32-bit floats.
LogitSequence ForwardFloat(const FeatureSequence& features, const ModelParams& params,
                           const ModelConfig& config);

struct TrainingExample {
  FeatureSequence features;
  LabelSequence labels;
};

// Resamples to 16 kHz, optionally pads/truncates to a fixed duration
// (seconds <= 0 keeps the length), normalizes to zero mean and unit variance
// and runs the frozen conv encoder.
FeatureSequence PrepareFeatures(const Waveform& waveform, const ModelParams& params,
                                const ModelConfig& config, double fix_duration_seconds = 0.0);

// Loads every manifest entry relative to `audio_root` and encodes its
// normalized transcript. Throws InfeasibleLabelError for clips too short
// for their transcript.
std::vector<TrainingExample> PrepareExamples(const std::vector<ManifestEntry>& entries,
                                             const std::filesystem::path& audio_root,
                                             const Vocabulary& vocab, const ModelParams& params,
                                             const ModelConfig& config,
                                             double fix_duration_seconds = 0.0, int num_threads = 1);

struct GradientResult {
  double loss = 0.0;   // mean CTC loss over the batch
  ModelParams grads;   // trainable tensors only; encoder left empty
};

// Per-example randomness is seeded from `rng` in batch order, so the result
// does not depend on num_threads.
GradientResult ComputeGradients(std::span<const TrainingExample* const> batch,
                                const ModelParams& params, const ModelConfig& config,
                                Rng& rng, Mode mode = Mode::kTrain, int num_threads = 1,
                                const ForwardOptions& options = {});

struct AdadeltaOptions {
  double rho = 0.95;
  double epsilon = 1e-6;
};

// Running averages E[g^2] and E[dx^2], one buffer per trainable tensor.
struct AdadeltaState {
  AdadeltaOptions options;
  std::vector<std::vector<double>> sq_grad;
  std::vector<std::vector<double>> sq_update;

  static AdadeltaState Create(const ModelParams& params, const AdadeltaOptions& options = {});
};

// Elementwise rule on one tensor.
void AdadeltaUpdate(std::span<double> x, std::span<const double> g, std::span<double> sq_grad,
                    std::span<double> sq_update, const AdadeltaOptions& options);

void AdadeltaStep(ModelParams& params, const ModelParams& grads, AdadeltaState& state);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_wer = 0.0;  // fraction
};

struct TrainOptions {
  int epochs = 100;
  int batch_size = 8;
  AdadeltaOptions adadelta;
  uint64_t seed = 1;
  int num_threads = 1;
  // Stop once validation WER reaches this value (negative disables).
  double stop_at_valid_wer = -1.0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 means the initial parameters
};

struct EvalSummary {
  double loss = 0.0;  // mean CTC loss
  double wer = 0.0;   // greedy decoding, pooled
};

EvalSummary Evaluate(const std::vector<TrainingExample>& data, const Vocabulary& vocab,
                     const ModelParams& params, const ModelConfig& config, int num_threads = 1);

// Shuffled mini-batches of Adadelta steps. Validation picks the returned
// parameters: lowest WER, then lowest loss, then earliest epoch. An empty
// validation set evaluates on the training set.
TrainResult Train(const std::vector<TrainingExample>& train,
                  const std::vector<TrainingExample>& validation, const Vocabulary& vocab,
                  const ModelParams& init, const ModelConfig& config, const TrainOptions& options);

std::string FormatHistoryLine(const EpochRecord& r);

struct Checkpoint {
  ModelConfig config;
  Vocabulary vocab;
  ModelParams params;
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary layout: magic, version, vocabulary hash, config text, vocabulary
// letters, parameter count, float64 little-endian payload in VisitAll order,
// then an FNV-1a checksum of everything before it.
std::string EncodeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DecodeCheckpoint(std::string_view bytes);
void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace ckb
