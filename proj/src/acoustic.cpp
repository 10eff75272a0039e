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

#include "ckbasr/acoustic.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <thread>
#include <type_traits>

#include "ckbasr/error.hpp"
#include "ckbasr/eval.hpp"

namespace ckb {

// ---------------------------------------------------------------------------
// Config

ModelConfig ModelConfig::Base(int vocab_size) {
  ModelConfig c;
  c.encoder = ConvEncoderConfig::FullScale();
  c.d_model = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  c.ff_dim = 3072;
  c.vocab_size = vocab_size;
  c.pos_conv_kernel = 128;
  c.pos_conv_groups = 16;
  return c;
}

ModelConfig ModelConfig::Large(int vocab_size) {
  ModelConfig c = Base(vocab_size);
  c.d_model = 1024;
  c.n_layers = 24;
  c.n_heads = 16;
  c.ff_dim = 4096;
  return c;
}

ModelConfig ModelConfig::Desk(int vocab_size) {
  ModelConfig c;
  c.encoder = ConvEncoderConfig::DeskScale();
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::Preset(const std::string& name, int vocab_size) {
  if (name == "base") return Base(vocab_size);
  if (name == "large") return Large(vocab_size);
  if (name == "desk") return Desk(vocab_size);
  throw ValidationError("unknown model preset '" + name + "' (expected base, large or desk)");
}

void ModelConfig::Validate() const {
  encoder.Validate();
  auto fail = [](const std::string& m) { throw ValidationError("model config: " + m); };
  if (d_model < 1) fail("d_model must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
         std::to_string(n_heads));
  }
  if (n_layers < 0) fail("n_layers must be >= 0");
  if (ff_dim < 1) fail("ff_dim must be >= 1");
  if (vocab_size < 3) fail("vocab_size must be >= 3 (blank, delimiter, one letter)");
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p < 1.0)) fail(std::string(name) + " must be in [0, 1)");
  };
  prob(attention_dropout, "attention_dropout");
  prob(hidden_dropout, "hidden_dropout");
  prob(feat_proj_dropout, "feat_proj_dropout");
  if (!(layerdrop_prob >= 0.0 && layerdrop_prob <= 1.0)) fail("layerdrop_prob must be in [0, 1]");
  if (pos_conv_kernel < 1) fail("pos_conv_kernel must be >= 1");
  if (pos_conv_groups < 1) fail("pos_conv_groups must be >= 1");
  if (d_model % pos_conv_groups != 0) fail("d_model is not divisible by pos_conv_groups");
}

namespace {

std::string FormatEncoder(const ConvEncoderConfig& e) {
  std::string out;
  for (size_t i = 0; i < e.layers.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(e.layers[i].channels) + ":" + std::to_string(e.layers[i].kernel) + ":" +
           std::to_string(e.layers[i].stride);
  }
  return out;
}

ConvEncoderConfig ParseEncoder(const std::string& text) {
  ConvEncoderConfig e;
  for (const std::string& layer : SplitChar(text, ',')) {
    const std::vector<std::string> f = SplitChar(Trim(layer), ':');
    if (f.size() != 3) throw ValidationError("encoder layer '" + layer + "' is not channels:kernel:stride");
    ConvLayerSpec s;
    try {
      s.channels = std::stoi(f[0]);
      s.kernel = std::stoi(f[1]);
      s.stride = std::stoi(f[2]);
    } catch (const std::exception&) {
      throw ValidationError("encoder layer '" + layer + "' has a non-integer field");
    }
    e.layers.push_back(s);
  }
  return e;
}

int ParseInt(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw std::invalid_argument(v);
    }
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": '" + v + "' is not an integer");
  }
}

double ParseReal(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": '" + v + "' is not a number");
  }
}

}  // namespace

std::string ModelConfig::Serialize() const {
  std::ostringstream out;
  out << "encoder=" << FormatEncoder(encoder) << '\n'
      << "d_model=" << d_model << '\n'
      << "n_layers=" << n_layers << '\n'
      << "n_heads=" << n_heads << '\n'
      << "ff_dim=" << ff_dim << '\n'
      << "vocab_size=" << vocab_size << '\n'
      << "attention_dropout=" << FormatDouble(attention_dropout) << '\n'
      << "hidden_dropout=" << FormatDouble(hidden_dropout) << '\n'
      << "feat_proj_dropout=" << FormatDouble(feat_proj_dropout) << '\n'
      << "layerdrop_prob=" << FormatDouble(layerdrop_prob) << '\n'
      << "pos_conv_kernel=" << pos_conv_kernel << '\n'
      << "pos_conv_groups=" << pos_conv_groups << '\n'
      << "seed=" << seed << '\n';
  return out.str();
}

void ModelConfig::Set(const std::string& key, const std::string& value) {
  const std::string v = Trim(value);
  if (key == "encoder") {
    encoder = ParseEncoder(v);
  } else if (key == "encoder_channels") {
    encoder = encoder.WithChannels(ParseInt(key, v));
  } else if (key == "d_model") {
    d_model = ParseInt(key, v);
  } else if (key == "n_layers") {
    n_layers = ParseInt(key, v);
  } else if (key == "n_heads") {
    n_heads = ParseInt(key, v);
  } else if (key == "ff_dim") {
    ff_dim = ParseInt(key, v);
  } else if (key == "vocab_size") {
    vocab_size = ParseInt(key, v);
  } else if (key == "attention_dropout") {
    attention_dropout = ParseReal(key, v);
  } else if (key == "hidden_dropout") {
    hidden_dropout = ParseReal(key, v);
  } else if (key == "feat_proj_dropout") {
    feat_proj_dropout = ParseReal(key, v);
  } else if (key == "layerdrop_prob") {
    layerdrop_prob = ParseReal(key, v);
  } else if (key == "pos_conv_kernel") {
    pos_conv_kernel = ParseInt(key, v);
  } else if (key == "pos_conv_groups") {
    pos_conv_groups = ParseInt(key, v);
  } else if (key == "seed") {
    try {
      size_t pos = 0;
      seed = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ValidationError("config key seed: '" + v + "' is not an unsigned integer");
    }
  } else {
    throw ValidationError("unknown model config key '" + key + "'");
  }
}

ModelConfig ModelConfig::Parse(std::string_view text) {
  ModelConfig c;
  for (const std::string& raw : SplitLines(text)) {
    const std::string line = Trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("model config line without '=': " + line);
    c.Set(Trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

ModelParams AllocateParams(const ModelConfig& c) {
  ModelParams p;
  int in_channels = 1;
  for (const ConvLayerSpec& l : c.encoder.layers) {
    ConvLayerParams lp;
    lp.weight = Matrix::Zero(l.channels, l.kernel * in_channels);
    lp.bias = Matrix::Zero(1, l.channels);
    lp.ln_gamma = Matrix::Zero(1, l.channels);
    lp.ln_beta = Matrix::Zero(1, l.channels);
    p.encoder.layers.push_back(std::move(lp));
    in_channels = l.channels;
  }
  const int d = c.d_model;
  p.proj_w = Matrix::Zero(c.encoder.output_channels(), d);
  p.proj_b = Matrix::Zero(1, d);
  p.pos_w = Matrix::Zero(d, (d / c.pos_conv_groups) * c.pos_conv_kernel);
  p.pos_b = Matrix::Zero(1, d);
  p.layers.resize(static_cast<size_t>(c.n_layers));
  for (TransformerLayerParams& l : p.layers) {
    l.attn_ln_gamma = Matrix::Zero(1, d);
    l.attn_ln_beta = Matrix::Zero(1, d);
    for (Matrix* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Matrix::Zero(d, d);
    for (Matrix* b : {&l.bq, &l.bk, &l.bv, &l.bo}) *b = Matrix::Zero(1, d);
    l.ff_ln_gamma = Matrix::Zero(1, d);
    l.ff_ln_beta = Matrix::Zero(1, d);
    l.w1 = Matrix::Zero(d, c.ff_dim);
    l.b1 = Matrix::Zero(1, c.ff_dim);
    l.w2 = Matrix::Zero(c.ff_dim, d);
    l.b2 = Matrix::Zero(1, d);
  }
  p.final_ln_gamma = Matrix::Zero(1, d);
  p.final_ln_beta = Matrix::Zero(1, d);
  p.out_w = Matrix::Zero(d, c.vocab_size);
  p.out_b = Matrix::Zero(1, c.vocab_size);
  return p;
}

void XavierFill(Matrix& m, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform(-a, a);
}

void XavierFill(Matrix& m, Rng& rng) {
  XavierFill(m, static_cast<int>(m.rows()), static_cast<int>(m.cols()), rng);
}

bool IsLayerNormGain(const std::string& name) {
  return name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0;
}

std::vector<Matrix*> TrainableTensors(ModelParams& p) {
  std::vector<Matrix*> out;
  p.VisitTrainable([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> TrainableTensors(const ModelParams& p) {
  std::vector<const Matrix*> out;
  p.VisitTrainable([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

ModelParams TrainableZeros(const ModelParams& p) {
  ModelParams g = p.ZerosLike();
  g.encoder.layers.clear();
  return g;
}

}  // namespace

ModelParams ModelParams::ZerosLike() const {
  ModelParams z = *this;
  z.VisitAll([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

size_t ModelParams::trainable_count() const {
  size_t n = 0;
  VisitTrainable([&](const std::string&, const Matrix& m) { n += static_cast<size_t>(m.size()); });
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  std::vector<const Matrix*> ma, mb;
  a.VisitAll([&](const std::string&, const Matrix& m) { ma.push_back(&m); });
  b.VisitAll([&](const std::string&, const Matrix& m) { mb.push_back(&m); });
  if (ma.size() != mb.size()) return false;
  for (size_t i = 0; i < ma.size(); ++i) {
    if (ma[i]->rows() != mb[i]->rows() || ma[i]->cols() != mb[i]->cols()) return false;
    if (std::memcmp(ma[i]->data(), mb[i]->data(), sizeof(double) * ma[i]->size()) != 0) return false;
  }
  return true;
}

ModelParams InitParams(const ModelConfig& config) {
  config.Validate();
  Rng rng(config.seed);
  ModelParams p = AllocateParams(config);
  p.encoder = InitConvEncoder(config.encoder, rng);
  const int dg = config.d_model / config.pos_conv_groups;
  p.VisitTrainable([&](const std::string& name, Matrix& m) {
    if (IsLayerNormGain(name)) {
      m.setOnes();
    } else if (m.rows() == 1) {
      m.setZero();  // biases and layer-norm shifts
    } else if (name == "pos_w") {
      XavierFill(m, dg * config.pos_conv_kernel, dg * config.pos_conv_kernel, rng);
    } else {
      XavierFill(m, rng);
    }
  });
  return p;
}

void CheckShapes(const ModelParams& params, const ModelConfig& config) {
  config.Validate();
  const ModelParams ref = AllocateParams(config);
  std::vector<std::pair<std::string, const Matrix*>> want, got;
  ref.VisitAll([&](const std::string& n, const Matrix& m) { want.emplace_back(n, &m); });
  params.VisitAll([&](const std::string& n, const Matrix& m) { got.emplace_back(n, &m); });
  if (want.size() != got.size()) {
    throw ValidationError("parameter set has " + std::to_string(got.size()) + " tensors, config implies " +
                          std::to_string(want.size()));
  }
  for (size_t i = 0; i < want.size(); ++i) {
    const Matrix& w = *want[i].second;
    const Matrix& g = *got[i].second;
    if (w.rows() != g.rows() || w.cols() != g.cols()) {
      throw ValidationError("parameter " + want[i].first + " has shape " + std::to_string(g.rows()) + "x" +
                            std::to_string(g.cols()) + ", expected " + std::to_string(w.rows()) + "x" +
                            std::to_string(w.cols()));
    }
  }
}

// ---------------------------------------------------------------------------
// Forward and backward

namespace {

template <typename S>
auto Cast(const Matrix& m) -> std::conditional_t<std::is_same_v<S, double>, const Matrix&, MatrixT<S>> {
  if constexpr (std::is_same_v<S, double>) {
    return m;
  } else {
    return m.cast<S>();
  }
}

// Inverted dropout: kept entries are scaled by 1 / (1 - p).
Matrix DropoutMask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform() < p ? 0.0 : keep;
  return m;
}

struct LayerCache {
  bool skipped = false;
  nn::LayerNormCache ln1;
  Matrix a;        // attention input (normalized)
  Matrix q, k, v;
  std::vector<Matrix> probs;
  std::vector<Matrix> prob_masks;
  Matrix ctx;
  Matrix attn_out_mask;
  nn::LayerNormCache ln2;
  Matrix b;        // feed-forward input (normalized)
  Matrix u;        // pre-activation
  Matrix gl;       // activation
  Matrix ff_out_mask;
};

struct ForwardCache {
  Matrix features;
  Matrix proj_mask;
  Matrix proj;     // projected features after dropout
  Matrix pos_pre;  // positional conv pre-activation
  std::vector<LayerCache> layers;
  nn::LayerNormCache final_ln;
  Matrix y;        // final normalized states
};

// Grouped "same" convolution over time. Output frame t reads inputs
// t - K/2 .. t - K/2 + K - 1, zeros outside the sequence. Weight layout:
// w(out_channel, in_channel_within_group * K + tap).
Matrix GroupTap(const Matrix& w, int g, int k, int dg, int K) {
  Matrix wk(dg, dg);
  for (int o = 0; o < dg; ++o) {
    for (int i = 0; i < dg; ++i) wk(o, i) = w(g * dg + o, i * K + k);
  }
  return wk;
}

struct TapRange {
  Eigen::Index t0, n, shift;
};

TapRange TapRows(Eigen::Index T, int k, int K) {
  const Eigen::Index shift = k - K / 2;
  const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
  const Eigen::Index t1 = std::min<Eigen::Index>(T, T - shift);
  return {t0, std::max<Eigen::Index>(0, t1 - t0), shift};
}

template <typename S>
MatrixT<S> PosConvForward(const MatrixT<S>& x, const Matrix& w, const Matrix& b, int K, int G) {
  const Eigen::Index T = x.rows();
  const int dg = static_cast<int>(x.cols()) / G;
  MatrixT<S> z = MatrixT<S>::Zero(T, x.cols());
  for (int g = 0; g < G; ++g) {
    for (int k = 0; k < K; ++k) {
      const TapRange r = TapRows(T, k, K);
      if (r.n == 0) continue;
      const MatrixT<S> wk = Cast<S>(GroupTap(w, g, k, dg, K));
      z.block(r.t0, g * dg, r.n, dg).noalias() += x.block(r.t0 + r.shift, g * dg, r.n, dg) * wk.transpose();
    }
  }
  z.rowwise() += Cast<S>(b).row(0);
  return z;
}

void PosConvBackward(const Matrix& dz, const Matrix& x, const Matrix& w, int K, int G, Matrix& dw,
                     Matrix& db, Matrix& dx) {
  const Eigen::Index T = x.rows();
  const int dg = static_cast<int>(x.cols()) / G;
  db.row(0) += dz.colwise().sum();
  for (int g = 0; g < G; ++g) {
    for (int k = 0; k < K; ++k) {
      const TapRange r = TapRows(T, k, K);
      if (r.n == 0) continue;
      const Matrix wk = GroupTap(w, g, k, dg, K);
      const auto dzb = dz.block(r.t0, g * dg, r.n, dg);
      const auto xb = x.block(r.t0 + r.shift, g * dg, r.n, dg);
      dx.block(r.t0 + r.shift, g * dg, r.n, dg).noalias() += dzb * wk;
      const Matrix dwk = dzb.transpose() * xb;
      for (int o = 0; o < dg; ++o) {
        for (int i = 0; i < dg; ++i) dw(g * dg + o, i * K + k) += dwk(o, i);
      }
    }
  }
}

// Returns pre-softmax output logits. The cache is filled only in 64-bit mode.
template <typename S>
MatrixT<S> ForwardImpl(const Matrix& features, const ModelParams& p, const ModelConfig& c, Mode mode,
                       Rng* rng, const ForwardOptions& options, ForwardCache* cache) {
  const bool train = mode == Mode::kTrain;
  const Eigen::Index T = features.rows();
  const int d = c.d_model;
  const int dh = d / c.n_heads;
  const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
  if (cache != nullptr) {
    if constexpr (std::is_same_v<S, double>) {
      cache->features = features;
      cache->layers.assign(p.layers.size(), LayerCache{});
    }
  }
  auto store = [&](Matrix& dst, const MatrixT<S>& src) {
    if constexpr (std::is_same_v<S, double>) dst = src;
  };

  MatrixT<S> proj = nn::Affine<S>(Cast<S>(features), Cast<S>(p.proj_w), Cast<S>(p.proj_b));
  if (train && c.feat_proj_dropout > 0.0) {
    const Matrix m = DropoutMask(T, d, c.feat_proj_dropout, *rng);
    proj = proj.cwiseProduct(Cast<S>(m));
    if (cache != nullptr) cache->proj_mask = m;
  }
  const MatrixT<S> z = PosConvForward<S>(proj, p.pos_w, p.pos_b, c.pos_conv_kernel, c.pos_conv_groups);
  MatrixT<S> h = proj + nn::GeluForward<S>(z);
  if (cache != nullptr) {
    store(cache->proj, proj);
    store(cache->pos_pre, z);
  }

  for (size_t li = 0; li < p.layers.size(); ++li) {
    const TransformerLayerParams& L = p.layers[li];
    LayerCache* lc = cache != nullptr ? &cache->layers[li] : nullptr;
    bool skip = options.skip_all_layers;
    if (!skip && train && c.layerdrop_prob > 0.0) skip = rng->Uniform() < c.layerdrop_prob;
    if (skip) {
      if (lc != nullptr) lc->skipped = true;
      continue;
    }

    const MatrixT<S> a = nn::LayerNormForward<S>(h, Cast<S>(L.attn_ln_gamma), Cast<S>(L.attn_ln_beta),
                                                 lc != nullptr ? &lc->ln1 : nullptr);
    const MatrixT<S> q = nn::Affine<S>(a, Cast<S>(L.wq), Cast<S>(L.bq));
    const MatrixT<S> k = nn::Affine<S>(a, Cast<S>(L.wk), Cast<S>(L.bk));
    const MatrixT<S> v = nn::Affine<S>(a, Cast<S>(L.wv), Cast<S>(L.bv));
    MatrixT<S> ctx(T, d);
    if (lc != nullptr) {
      lc->probs.resize(static_cast<size_t>(c.n_heads));
      lc->prob_masks.resize(static_cast<size_t>(c.n_heads));
    }
    for (int hd = 0; hd < c.n_heads; ++hd) {
      MatrixT<S> s = (q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose()) * scale;
      nn::SoftmaxRowsInPlace<S>(s);
      if (lc != nullptr) store(lc->probs[hd], s);
      if (train && c.attention_dropout > 0.0) {
        const Matrix m = DropoutMask(T, T, c.attention_dropout, *rng);
        s = s.cwiseProduct(Cast<S>(m));
        if (lc != nullptr) lc->prob_masks[hd] = m;
      }
      ctx.middleCols(hd * dh, dh).noalias() = s * v.middleCols(hd * dh, dh);
    }
    MatrixT<S> o = nn::Affine<S>(ctx, Cast<S>(L.wo), Cast<S>(L.bo));
    if (train && c.hidden_dropout > 0.0) {
      const Matrix m = DropoutMask(T, d, c.hidden_dropout, *rng);
      o = o.cwiseProduct(Cast<S>(m));
      if (lc != nullptr) lc->attn_out_mask = m;
    }
    h += o;

    const MatrixT<S> b = nn::LayerNormForward<S>(h, Cast<S>(L.ff_ln_gamma), Cast<S>(L.ff_ln_beta),
                                                 lc != nullptr ? &lc->ln2 : nullptr);
    const MatrixT<S> u = nn::Affine<S>(b, Cast<S>(L.w1), Cast<S>(L.b1));
    const MatrixT<S> gl = nn::GeluForward<S>(u);
    MatrixT<S> f = nn::Affine<S>(gl, Cast<S>(L.w2), Cast<S>(L.b2));
    if (train && c.hidden_dropout > 0.0) {
      const Matrix m = DropoutMask(T, d, c.hidden_dropout, *rng);
      f = f.cwiseProduct(Cast<S>(m));
      if (lc != nullptr) lc->ff_out_mask = m;
    }
    h += f;
    if (lc != nullptr) {
      store(lc->a, a);
      store(lc->q, q);
      store(lc->k, k);
      store(lc->v, v);
      store(lc->ctx, ctx);
      store(lc->b, b);
      store(lc->u, u);
      store(lc->gl, gl);
    }
  }

  const MatrixT<S> y = nn::LayerNormForward<S>(h, Cast<S>(p.final_ln_gamma), Cast<S>(p.final_ln_beta),
                                               cache != nullptr ? &cache->final_ln : nullptr);
  if (cache != nullptr) store(cache->y, y);
  return nn::Affine<S>(y, Cast<S>(p.out_w), Cast<S>(p.out_b));
}

void Backward(const ForwardCache& c, const Matrix& dlogits, const ModelParams& p, const ModelConfig& cfg,
              ModelParams& g) {
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index T = dlogits.rows();

  const Matrix dy = nn::AffineBackward(dlogits, c.y, p.out_w, g.out_w, g.out_b);
  Matrix dh_state = nn::LayerNormBackward(dy, p.final_ln_gamma, c.final_ln, g.final_ln_gamma, g.final_ln_beta);

  for (size_t li = p.layers.size(); li-- > 0;) {
    const LayerCache& lc = c.layers[li];
    if (lc.skipped) continue;
    const TransformerLayerParams& L = p.layers[li];
    TransformerLayerParams& G = g.layers[li];

    // Feed-forward branch.
    Matrix df = dh_state;
    if (lc.ff_out_mask.size() > 0) df = df.cwiseProduct(lc.ff_out_mask);
    const Matrix dgl = nn::AffineBackward(df, lc.gl, L.w2, G.w2, G.b2);
    const Matrix du = dgl.cwiseProduct(lc.u.unaryExpr([](double x) { return nn::GeluGrad(x); }));
    const Matrix db = nn::AffineBackward(du, lc.b, L.w1, G.w1, G.b1);
    dh_state += nn::LayerNormBackward(db, L.ff_ln_gamma, lc.ln2, G.ff_ln_gamma, G.ff_ln_beta);

    // Attention branch.
    Matrix dout = dh_state;
    if (lc.attn_out_mask.size() > 0) dout = dout.cwiseProduct(lc.attn_out_mask);
    const Matrix dctx = nn::AffineBackward(dout, lc.ctx, L.wo, G.wo, G.bo);
    Matrix dq = Matrix::Zero(T, d);
    Matrix dk = Matrix::Zero(T, d);
    Matrix dv = Matrix::Zero(T, d);
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const Matrix& P = lc.probs[hd];
      const Matrix& mask = lc.prob_masks[hd];
      const bool masked = mask.size() > 0;
      const Matrix Pd = masked ? Matrix(P.cwiseProduct(mask)) : P;
      const auto dctx_h = dctx.middleCols(hd * dh, dh);
      dv.middleCols(hd * dh, dh).noalias() = Pd.transpose() * dctx_h;
      Matrix dP = dctx_h * lc.v.middleCols(hd * dh, dh).transpose();
      if (masked) dP = dP.cwiseProduct(mask);
      const Eigen::VectorXd row_dot = dP.cwiseProduct(P).rowwise().sum();
      Matrix ds = P.cwiseProduct((dP.colwise() - row_dot).matrix());
      ds *= scale;
      dq.middleCols(hd * dh, dh).noalias() = ds * lc.k.middleCols(hd * dh, dh);
      dk.middleCols(hd * dh, dh).noalias() = ds.transpose() * lc.q.middleCols(hd * dh, dh);
    }
    Matrix da = nn::AffineBackward(dq, lc.a, L.wq, G.wq, G.bq);
    da += nn::AffineBackward(dk, lc.a, L.wk, G.wk, G.bk);
    da += nn::AffineBackward(dv, lc.a, L.wv, G.wv, G.bv);
    dh_state += nn::LayerNormBackward(da, L.attn_ln_gamma, lc.ln1, G.attn_ln_gamma, G.attn_ln_beta);
  }

  // h0 = proj + gelu(posconv(proj))
  const Matrix dz = dh_state.cwiseProduct(c.pos_pre.unaryExpr([](double x) { return nn::GeluGrad(x); }));
  Matrix dproj = dh_state;
  PosConvBackward(dz, c.proj, p.pos_w, cfg.pos_conv_kernel, cfg.pos_conv_groups, g.pos_w, g.pos_b, dproj);
  if (c.proj_mask.size() > 0) dproj = dproj.cwiseProduct(c.proj_mask);
  g.proj_w.noalias() += c.features.transpose() * dproj;
  g.proj_b.row(0) += dproj.colwise().sum();
}

void CheckFeatures(const FeatureSequence& features, const ModelParams& params) {
  if (features.frames.rows() < 1) throw ValidationError("feature sequence has no frames");
  if (features.frames.cols() != params.proj_w.rows()) {
    throw ValidationError("feature dimension " + std::to_string(features.frames.cols()) +
                          " does not match projection input " + std::to_string(params.proj_w.rows()));
  }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename F>
void ParallelFor(size_t n, int threads, F&& fn) {
  const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

LogitSequence Forward(const FeatureSequence& features, const ModelParams& params, const ModelConfig& config,
                      Mode mode, Rng& rng, const ForwardOptions& options) {
  CheckFeatures(features, params);
  const Matrix logits = ForwardImpl<double>(features.frames, params, config, mode, &rng, options, nullptr);
  return {nn::LogSoftmaxRows<double>(logits)};
}

LogitSequence ForwardFloat(const FeatureSequence& features, const ModelParams& params,
                           const ModelConfig& config) {
  CheckFeatures(features, params);
  const MatrixT<float> logits =
      ForwardImpl<float>(features.frames, params, config, Mode::kEval, nullptr, {}, nullptr);
  return {nn::LogSoftmaxRows<double>(logits.cast<double>())};
}

FeatureSequence PrepareFeatures(const Waveform& waveform, const ModelParams& params,
                                const ModelConfig& config, double fix_duration_seconds) {
  Waveform w = waveform.sample_rate == kModelSampleRate ? waveform : Resample(waveform, kModelSampleRate);
  if (fix_duration_seconds > 0.0) w = FixDuration(w, fix_duration_seconds);
  return EncodeFeatures(NormalizeWaveform(w), params.encoder, config.encoder, Mode::kEval);
}

std::vector<TrainingExample> PrepareExamples(const std::vector<ManifestEntry>& entries,
                                             const std::filesystem::path& audio_root,
                                             const Vocabulary& vocab, const ModelParams& params,
                                             const ModelConfig& config, double fix_duration_seconds,
                                             int num_threads) {
  std::vector<TrainingExample> out(entries.size());
  ParallelFor(entries.size(), num_threads, [&](size_t i) {
    const ManifestEntry& e = entries[i];
    const Waveform w = LoadWaveform(audio_root / e.audio_filename);
    out[i].features = PrepareFeatures(w, params, config, fix_duration_seconds);
    out[i].labels = EncodeLabels(NormalizeText(e.transcript).text, vocab);
    const int64_t need = CtcMinFrames(out[i].labels);
    if (out[i].features.frame_count() < need) {
      throw InfeasibleLabelError(e.audio_filename + ": " + std::to_string(out[i].features.frame_count()) +
                                 " frames cannot carry a transcript needing " + std::to_string(need));
    }
  });
  return out;
}

GradientResult ComputeGradients(std::span<const TrainingExample* const> batch, const ModelParams& params,
                                const ModelConfig& config, Rng& rng, Mode mode, int num_threads,
                                const ForwardOptions& options) {
  if (batch.empty()) throw ValidationError("gradient batch is empty");
  for (const TrainingExample* ex : batch) CheckFeatures(ex->features, params);
  std::vector<uint64_t> seeds(batch.size());
  for (uint64_t& s : seeds) s = rng.NextU64();

  struct Slot {
    double loss = 0.0;
    ModelParams grads;
  };
  std::vector<Slot> slots(batch.size());
  ParallelFor(batch.size(), num_threads, [&](size_t i) {
    Rng local(seeds[i]);
    ForwardCache cache;
    const Matrix logits =
        ForwardImpl<double>(batch[i]->features.frames, params, config, mode, &local, options, &cache);
    const CtcLossAndGrad ctc = CtcForwardBackward(nn::LogSoftmaxRows<double>(logits), batch[i]->labels);
    slots[i].loss = ctc.loss;
    slots[i].grads = TrainableZeros(params);
    Backward(cache, ctc.grad, params, config, slots[i].grads);
  });

  GradientResult out;
  out.grads = std::move(slots[0].grads);
  out.loss = slots[0].loss;
  std::vector<Matrix*> acc = TrainableTensors(out.grads);
  for (size_t i = 1; i < slots.size(); ++i) {
    out.loss += slots[i].loss;
    const std::vector<const Matrix*> add = TrainableTensors(std::as_const(slots[i].grads));
    for (size_t t = 0; t < acc.size(); ++t) *acc[t] += *add[t];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (Matrix* m : acc) *m *= inv;
  return out;
}

// ---------------------------------------------------------------------------
// Adadelta

AdadeltaState AdadeltaState::Create(const ModelParams& params, const AdadeltaOptions& options) {
  AdadeltaState s;
  s.options = options;
  params.VisitTrainable([&](const std::string&, const Matrix& m) {
    s.sq_grad.emplace_back(static_cast<size_t>(m.size()), 0.0);
    s.sq_update.emplace_back(static_cast<size_t>(m.size()), 0.0);
  });
  return s;
}

void AdadeltaUpdate(std::span<double> x, std::span<const double> g, std::span<double> sq_grad,
                    std::span<double> sq_update, const AdadeltaOptions& o) {
  CKB_CHECK(x.size() == g.size() && x.size() == sq_grad.size() && x.size() == sq_update.size(),
            "adadelta buffers disagree in size");
  for (size_t i = 0; i < x.size(); ++i) {
    sq_grad[i] = o.rho * sq_grad[i] + (1.0 - o.rho) * g[i] * g[i];
    const double dx = -std::sqrt(sq_update[i] + o.epsilon) / std::sqrt(sq_grad[i] + o.epsilon) * g[i];
    sq_update[i] = o.rho * sq_update[i] + (1.0 - o.rho) * dx * dx;
    x[i] += dx;
  }
}

void AdadeltaStep(ModelParams& params, const ModelParams& grads, AdadeltaState& state) {
  const std::vector<Matrix*> xs = TrainableTensors(params);
  const std::vector<const Matrix*> gs = TrainableTensors(grads);
  if (xs.size() != gs.size() || xs.size() != state.sq_grad.size()) {
    throw ValidationError("optimizer state does not match the parameter set");
  }
  for (size_t t = 0; t < xs.size(); ++t) {
    if (xs[t]->size() != gs[t]->size() || static_cast<size_t>(xs[t]->size()) != state.sq_grad[t].size()) {
      throw ValidationError("gradient tensor " + std::to_string(t) + " does not match its parameter");
    }
    AdadeltaUpdate({xs[t]->data(), static_cast<size_t>(xs[t]->size())},
                   {gs[t]->data(), static_cast<size_t>(gs[t]->size())}, state.sq_grad[t], state.sq_update[t],
                   state.options);
  }
}

// ---------------------------------------------------------------------------
// Training

EvalSummary Evaluate(const std::vector<TrainingExample>& data, const Vocabulary& vocab,
                     const ModelParams& params, const ModelConfig& config, int num_threads) {
  if (data.empty()) throw ValidationError("evaluation set is empty");
  std::vector<double> losses(data.size());
  std::vector<EditCounts> edits(data.size());
  ParallelFor(data.size(), num_threads, [&](size_t i) {
    Rng rng(0);
    const LogitSequence lp = Forward(data[i].features, params, config, Mode::kEval, rng);
    losses[i] = CtcLoss(lp.log_probs, data[i].labels);
    const Hypothesis hyp = GreedyDecode(lp, vocab);
    edits[i] = AlignWords(DecodeLabels(data[i].labels, vocab), hyp.text);
  });
  EvalSummary s;
  EditCounts total;
  for (size_t i = 0; i < data.size(); ++i) {
    s.loss += losses[i];
    total += edits[i];
  }
  s.loss /= static_cast<double>(data.size());
  if (total.reference_count == 0) throw ValidationError("evaluation set has no reference words");
  s.wer = static_cast<double>(total.errors()) / static_cast<double>(total.reference_count);
  return s;
}

TrainResult Train(const std::vector<TrainingExample>& train, const std::vector<TrainingExample>& validation,
                  const Vocabulary& vocab, const ModelParams& init, const ModelConfig& config,
                  const TrainOptions& options) {
  if (train.empty()) throw ValidationError("training set is empty");
  if (options.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (options.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  CheckShapes(init, config);
  if (vocab.size() != config.vocab_size) {
    throw ValidationError("vocabulary has " + std::to_string(vocab.size()) + " symbols, model expects " +
                          std::to_string(config.vocab_size));
  }
  for (size_t i = 0; i < train.size(); ++i) {
    if (train[i].features.frame_count() < CtcMinFrames(train[i].labels)) {
      throw InfeasibleLabelError("training utterance " + std::to_string(i) + " has " +
                                 std::to_string(train[i].features.frame_count()) + " frames but its labels need " +
                                 std::to_string(CtcMinFrames(train[i].labels)));
    }
  }
  const std::vector<TrainingExample>& valid = validation.empty() ? train : validation;

  TrainResult result;
  result.params = init;
  ModelParams params = init;
  AdadeltaState state = AdadeltaState::Create(params, options.adadelta);
  Rng rng(options.seed);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best_wer = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.Shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(options.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(options.batch_size));
      std::vector<const TrainingExample*> batch;
      for (size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      const GradientResult g = ComputeGradients(batch, params, config, rng, Mode::kTrain, options.num_threads);
      AdadeltaStep(params, g.grads, state);
      loss_sum += g.loss * static_cast<double>(batch.size());
    }
    const EvalSummary ev = Evaluate(valid, vocab, params, config, options.num_threads);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), ev.loss, ev.wer};
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (ev.wer < best_wer || (ev.wer == best_wer && ev.loss < best_loss)) {
      best_wer = ev.wer;
      best_loss = ev.loss;
      result.params = params;
      result.best_epoch = epoch;
    }
    if (options.stop_at_valid_wer >= 0.0 && ev.wer <= options.stop_at_valid_wer) break;
  }
  return result;
}

std::string FormatHistoryLine(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch=%d,train_loss=%.6f,valid_loss=%.6f,valid_wer=%.6f", r.epoch,
                r.train_loss, r.valid_loss, r.valid_wer);
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'K', 'B', 'A', 'S', 'R', 'C', 'K'};

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutBlob(std::string& out, std::string_view s) {
  PutU32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view Take(size_t n) {
    if (data_.size() - pos_ < n) throw ValidationError("checkpoint is truncated");
    const std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  uint64_t U(int bytes) {
    const std::string_view b = Take(static_cast<size_t>(bytes));
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::string_view Blob() { return Take(static_cast<size_t>(U(4))); }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  size_t pos_ = 0;
};

}  // namespace

std::string EncodeCheckpoint(const Checkpoint& ck) {
  ck.config.Validate();
  CheckShapes(ck.params, ck.config);
  if (ck.vocab.size() != ck.config.vocab_size) {
    throw ValidationError("vocabulary size does not match the model config");
  }
  std::string out(kMagic, sizeof(kMagic));
  PutU32(out, kCheckpointVersion);
  PutU64(out, ck.vocab.Hash());
  PutBlob(out, ck.config.Serialize());
  PutBlob(out, EncodeUtf8(ck.vocab.letters()));
  uint64_t count = 0;
  ck.params.VisitAll([&](const std::string&, const Matrix& m) { count += static_cast<uint64_t>(m.size()); });
  PutU64(out, count);
  out.reserve(out.size() + 8 * count + 8);
  ck.params.VisitAll([&](const std::string&, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) PutU64(out, std::bit_cast<uint64_t>(m.data()[i]));
  });
  Fnv1a h;
  h.Update(out);
  PutU64(out, h.digest());
  return out;
}

Checkpoint DecodeCheckpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 8) throw ValidationError("checkpoint checksum mismatch: file too short");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Fnv1a h;
  h.Update(body);
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[body.size() + i])) << (8 * i);
  }
  if (stored != h.digest()) {
    throw ValidationError("checkpoint checksum mismatch: file is truncated or corrupt");
  }
  Reader r(body);
  if (r.Take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw ValidationError("not a checkpoint file (bad magic)");
  }
  const uint32_t version = static_cast<uint32_t>(r.U(4));
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const uint64_t vocab_hash = r.U(8);
  Checkpoint ck;
  ck.config = ModelConfig::Parse(r.Blob());
  ck.config.Validate();
  ck.vocab = Vocabulary::FromLetters(DecodeUtf8(r.Blob()));
  if (ck.vocab.Hash() != vocab_hash) throw ValidationError("checkpoint vocabulary hash mismatch");
  if (ck.vocab.size() != ck.config.vocab_size) {
    throw ValidationError("checkpoint vocabulary size does not match its config");
  }
  ck.params = AllocateParams(ck.config);
  const uint64_t count = r.U(8);
  uint64_t expected = 0;
  ck.params.VisitAll([&](const std::string&, const Matrix& m) { expected += static_cast<uint64_t>(m.size()); });
  if (count != expected || r.remaining() != 8 * count) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                          std::to_string(expected));
  }
  ck.params.VisitAll([&](const std::string& name, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double v = std::bit_cast<double>(r.U(8));
      if (!std::isfinite(v)) throw ValidationError("checkpoint parameter " + name + " is not finite");
      m.data()[i] = v;
    }
  });
  return ck;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  WriteFile(path, EncodeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) { return DecodeCheckpoint(ReadFile(path)); }

}  // namespace ckb
