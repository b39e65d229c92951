/*
 * Copyright 2026 The cirbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CIRBENCH_NN_HPP_
#define CIRBENCH_NN_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <span>
#include <vector>

// Dense row-major kernels with hand-written backward passes. Weights are
// stored out x in; a linear map is y = W x + b. Reductions use a fixed
// four-way split so results are bit-reproducible and still vectorise.

namespace cirbench::nn {

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

/// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// y = W x + b for one vector; b may be null.
inline void linear(const double* w, const double* b, const double* x, double* y,
                   std::size_t out, std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    y[o] = dot(w + o * in, x, in) + (b ? b[o] : 0.0);
  }
}

/// Accumulates dW += dy x^T, db += dy and (when dx is non-null) dx += W^T dy.
inline void linear_backward(const double* w, const double* x, const double* dy, double* dw,
                            double* db, double* dx, std::size_t out, std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    if (dw) axpy(g, x, dw + o * in, in);
    if (db) db[o] += g;
    if (dx) axpy(g, w + o * in, dx, in);
  }
}

/// Row-wise linear map over an n x in sequence.
inline void linear_rows(const double* w, const double* b, const double* x, double* y,
                        std::size_t rows, std::size_t out, std::size_t in) {
  for (std::size_t r = 0; r < rows; ++r) linear(w, b, x + r * in, y + r * out, out, in);
}

inline void linear_rows_backward(const double* w, const double* x, const double* dy, double* dw,
                                 double* db, double* dx, std::size_t rows, std::size_t out,
                                 std::size_t in) {
  for (std::size_t r = 0; r < rows; ++r) {
    linear_backward(w, x + r * in, dy + r * out, dw, db, dx ? dx + r * in : nullptr, out, in);
  }
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Exact (erf) GELU and its derivative.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
  const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

/// Unit-norm rescaling with its Jacobian-vector product.
struct NormalizeTape {
  std::vector<double> out;
  double norm = 0.0;
  bool degenerate = false;
};

inline void normalize_forward(std::span<const double> z, NormalizeTape& tape) {
  tape.out.assign(z.begin(), z.end());
  tape.norm = std::sqrt(dot(z.data(), z.data(), z.size()));
  if (!std::isfinite(tape.norm)) {
    std::fill(tape.out.begin(), tape.out.end(), std::numeric_limits<double>::quiet_NaN());
    return;
  }
  tape.degenerate = tape.norm < 1e-12;
  if (tape.degenerate) return;
  for (double& v : tape.out) v /= tape.norm;
}

/// dz = (dphi - phi (phi . dphi)) / |z|; written into dz (overwrites).
inline void normalize_backward(const NormalizeTape& tape, std::span<const double> dphi,
                               std::span<double> dz) {
  if (tape.degenerate) {
    std::copy(dphi.begin(), dphi.end(), dz.begin());
    return;
  }
  const double proj = dot(tape.out.data(), dphi.data(), dphi.size());
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = (dphi[i] - tape.out[i] * proj) / tape.norm;
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row layer normalisation; keeps normalised rows and inverse stddevs.
struct LayerNormTape {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

inline void layer_norm_forward(const double* x, const double* gain, const double* bias, double* y,
                               std::size_t rows, std::size_t d, LayerNormTape& tape) {
  tape.xhat.resize(rows * d);
  tape.inv_std.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    tape.inv_std[r] = inv;
    double* xh = tape.xhat.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] = (xr[i] - mean) * inv;
      y[r * d + i] = gain[i] * xh[i] + bias[i];
    }
  }
}

/// Accumulates dgain, dbias; writes dx (overwrites).
inline void layer_norm_backward(const LayerNormTape& tape, const double* gain, const double* dy,
                                double* dgain, double* dbias, double* dx, std::size_t rows,
                                std::size_t d) {
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xh = tape.xhat.data() + r * d;
    const double* dyr = dy + r * d;
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dgain[i] += dyr[i] * xh[i];
      dbias[i] += dyr[i];
      dxhat[i] = dyr[i] * gain[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xh[i];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      dx[r * d + i] = tape.inv_std[r] * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
    }
  }
}

}  // namespace cirbench::nn

#endif  // CIRBENCH_NN_HPP_
