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

// Dense building blocks shared by the feature encoder and the transformer.
// Activations are row-major T x C matrices, one row per frame.

#include <Eigen/Core>
#include <cmath>

namespace ckb {

template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = MatrixT<double>;

enum class Mode { kTrain, kEval };

namespace nn {

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
S Gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

inline double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

template <typename S>
MatrixT<S> GeluForward(const MatrixT<S>& x) {
  return x.unaryExpr([](S v) { return Gelu(v); });
}

// Saved state of a row-wise layer norm for the backward pass.
struct LayerNormCache {
  Matrix normalized;  // (x - mean) * rstd
  Eigen::VectorXd rstd;
};

// y = (x - mean(x)) / sqrt(var(x) + eps) * gamma + beta, per row. A constant
// row normalizes to zeros before the affine part.
template <typename S>
MatrixT<S> LayerNormForward(const MatrixT<S>& x, const MatrixT<S>& gamma,
                            const MatrixT<S>& beta, LayerNormCache* cache) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  MatrixT<S> y(rows, cols);
  if (cache != nullptr) {
    cache->normalized.resize(rows, cols);
    cache->rstd.resize(rows);
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S mean = x.row(r).mean();
    const S var = (x.row(r).array() - mean).square().mean();
    const S rstd = S(1) / std::sqrt(var + S(kLayerNormEps));
    for (Eigen::Index c = 0; c < cols; ++c) {
      const S n = (x(r, c) - mean) * rstd;
      y(r, c) = n * gamma(0, c) + beta(0, c);
      if (cache != nullptr) cache->normalized(r, c) = static_cast<double>(n);
    }
    if (cache != nullptr) cache->rstd(r) = static_cast<double>(rstd);
  }
  return y;
}

// Returns dL/dx and accumulates into the gamma/beta gradients.
inline Matrix LayerNormBackward(const Matrix& dy, const Matrix& gamma,
                                const LayerNormCache& cache, Matrix& dgamma,
                                Matrix& dbeta) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index cols = dy.cols();
  Matrix dx(rows, cols);
  dgamma.row(0) += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::RowVectorXd dn = dy.row(r).cwiseProduct(gamma.row(0));
    const double mean_dn = dn.mean();
    const double mean_dn_n = dn.dot(cache.normalized.row(r)) / static_cast<double>(cols);
    dx.row(r) = cache.rstd(r) *
                (dn.array() - mean_dn - cache.normalized.row(r).array() * mean_dn_n).matrix();
  }
  return dx;
}

// x W + b with W stored [in, out] and b [1, out].
template <typename S>
MatrixT<S> Affine(const MatrixT<S>& x, const MatrixT<S>& w, const MatrixT<S>& b) {
  MatrixT<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// Accumulates parameter gradients and returns dL/dx.
inline Matrix AffineBackward(const Matrix& dy, const Matrix& x, const Matrix& w,
                             Matrix& dw, Matrix& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

template <typename S>
MatrixT<S> LogSoftmaxRows(const MatrixT<S>& z) {
  MatrixT<S> out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    const S lse = m + std::log((z.row(r).array() - m).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return out;
}

template <typename S>
void SoftmaxRowsInPlace(MatrixT<S>& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - m).exp();
    z.row(r) /= z.row(r).sum();
  }
}

}  // namespace nn
}  // namespace ckb
