/* Copyright 2026 The teedkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "teed/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace teed::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ContractError(std::string(what) + ": expected rank " + std::to_string(rank) +
                        ", got shape " + shape_str(shape));
  }
}

int conv_out_extent(int in, int k, int stride, int padding, const char* what) {
  if (k < 1 || stride < 1 || padding < 0) {
    throw ContractError(std::string(what) + ": invalid geometry k=" + std::to_string(k) +
                        " stride=" + std::to_string(stride) + " padding=" + std::to_string(padding));
  }
  if (in + 2 * padding < k) {
    throw ContractError(std::string(what) + ": padded extent " + std::to_string(in + 2 * padding) +
                        " smaller than kernel " + std::to_string(k));
  }
  return (in + 2 * padding - k) / stride + 1;
}

// One image: channels×height×width -> (channels·k·k)×(rows·out_w) for output
// rows [row_begin, row_end).
template <typename T>
void im2col(const T* image, int channels, int height, int width, int k, int stride, int padding,
            int row_begin, int row_end, int out_w, T* cols) {
  const std::size_t plane = static_cast<std::size_t>(row_end - row_begin) * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* src = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = oy * stride - padding + ky;
          T* dst = row + static_cast<std::size_t>(oy - row_begin) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * width;
          if (stride == 1) {
            const int lo = std::clamp(padding - kx, 0, out_w);
            const int hi = std::clamp(width + padding - kx, lo, out_w);
            std::fill(dst, dst + lo, T(0));
            std::copy(line + lo - padding + kx, line + hi - padding + kx, dst + lo);
            std::fill(dst + hi, dst + out_w, T(0));
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - padding + kx;
              dst[ox] = (ix >= 0 && ix < width) ? line[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into an image.
template <typename T>
void col2im(const T* cols, int channels, int height, int width, int k, int stride, int padding,
            int row_begin, int row_end, int out_w, T* image) {
  const std::size_t plane = static_cast<std::size_t>(row_end - row_begin) * out_w;
  for (int c = 0; c < channels; ++c) {
    T* dst = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) continue;
          T* line = dst + static_cast<std::size_t>(iy) * width;
          const T* src = row + static_cast<std::size_t>(oy - row_begin) * out_w;
          if (stride == 1) {
            const int lo = std::clamp(padding - kx, 0, out_w);
            const int hi = std::clamp(width + padding - kx, lo, out_w);
            for (int ox = lo; ox < hi; ++ox) line[ox - padding + kx] += src[ox];
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - padding + kx;
              if (ix >= 0 && ix < width) line[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(int k, int stride, int padding) { return k == 1 && stride == 1 && padding == 0; }

// Output rows per im2col band, sized so one band of columns stays in cache.
int band_rows(int col_rows, int out_w) {
  constexpr int kBandElements = 1 << 17;
  return std::max(1, kBandElements / std::max(1, col_rows * out_w));
}

template <typename T>
AlignedVector<T>& scratch(std::size_t n) {
  thread_local AlignedVector<T> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer;
}

template <typename T>
T sigmoid_t(T h) {
  T s;
  if (h >= T(0)) {
    s = T(1) / (T(1) + std::exp(-h));
  } else {
    const T e = std::exp(h);
    s = e / (T(1) + e);
  }
  // Keep the output inside the open interval even where it rounds to 0 or 1.
  return std::clamp(s, std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
}

// tanh(ln(1+s)) = ((1+s)^2 − 1)/((1+s)^2 + 1) = a/(2+a) with a = s(2+s).
template <typename T>
T smish_t(T h) {
  const T s = sigmoid_t(h);
  const T a = s * (T(2) + s);
  return h * a / (T(2) + a);
}

template <typename T>
T smish_derivative_t(T h) {
  const T s = sigmoid_t(h);
  const T a = s * (T(2) + s);
  const T u = T(1) + s;
  const T q = T(2) + a;  // u^2 + 1
  return a / q + h * (T(4) * u / (q * q)) * s * (T(1) - s);
}

}  // namespace

double sigmoid(double h) { return sigmoid_t(h); }
double smish(double h) { return smish_t(h); }
double smish_derivative(double h) { return smish_derivative_t(h); }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int f = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != c || kernel.dim(3) != k) {
    throw ContractError("conv2d: input " + shape_str(input.shape()) +
                        " incompatible with kernel " + shape_str(kernel.shape()));
  }
  if (bias.size() != static_cast<std::size_t>(f)) {
    throw ContractError("conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(f) +
                        " filters");
  }
  const int oh = conv_out_extent(h, k, stride, padding, "conv2d");
  const int ow = conv_out_extent(w, k, stride, padding, "conv2d");
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const int ckk = c * k * k;

  Tensor<T> out({n, f, oh, ow});
  ConstMatMap<T> wmat(kernel.data(), f, ckk);
  const bool pointwise = is_pointwise(k, stride, padding);
  const int band = pointwise ? oh : band_rows(ckk, ow);
  AlignedVector<T>& cols = scratch<T>(pointwise ? 0 : static_cast<std::size_t>(ckk) * band * ow);
  for (int b = 0; b < n; ++b) {
    const T* img = input.data() + static_cast<std::size_t>(b) * c * h * w;
    T* dst = out.data() + static_cast<std::size_t>(b) * f * plane;
    for (int r0 = 0; r0 < oh; r0 += band) {
      const int r1 = std::min(oh, r0 + band);
      const Eigen::Index span = static_cast<Eigen::Index>(r1 - r0) * ow;
      Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>> omat(dst + static_cast<std::size_t>(r0) * ow,
                                                           f, span, Eigen::OuterStride<>(plane));
      if (pointwise) {
        omat.noalias() = wmat * ConstMatMap<T>(img, ckk, span);
      } else {
        im2col(img, c, h, w, k, stride, padding, r0, r1, ow, cols.data());
        omat.noalias() = wmat * ConstMatMap<T>(cols.data(), ckk, span);
      }
    }
    MatMap<T> full(dst, f, plane);
    for (int j = 0; j < f; ++j) full.row(j).array() += bias[j];
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, int stride, int padding) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int f = kernel.dim(0), k = kernel.dim(2);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const int ckk = c * k * k;

  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(kernel.shape()), Tensor<T>({f})};
  const bool pointwise = is_pointwise(k, stride, padding);
  ConstMatMap<T> wmat(kernel.data(), f, ckk);
  MatMap<T> dw(g.kernel.data(), f, ckk);
  const int band = band_rows(ckk, ow);
  AlignedVector<T>& cols = scratch<T>(static_cast<std::size_t>(ckk) * band * ow * 2);
  for (int b = 0; b < n; ++b) {
    const T* img = input.data() + static_cast<std::size_t>(b) * c * h * w;
    const T* dyb = grad_out.data() + static_cast<std::size_t>(b) * f * plane;
    T* dimg = g.input.data() + static_cast<std::size_t>(b) * c * h * w;
    ConstMatMap<T> dy_full(dyb, f, plane);
    for (int j = 0; j < f; ++j) g.bias[j] += dy_full.row(j).sum();
    if (pointwise) {
      ConstMatMap<T> x(img, c, plane);
      dw.noalias() += dy_full * x.transpose();
      MatMap<T>(dimg, c, plane).noalias() = wmat.transpose() * dy_full;
      continue;
    }
    T* colp = cols.data();
    T* dcolp = cols.data() + static_cast<std::size_t>(ckk) * band * ow;
    for (int r0 = 0; r0 < oh; r0 += band) {
      const int r1 = std::min(oh, r0 + band);
      const Eigen::Index span = static_cast<Eigen::Index>(r1 - r0) * ow;
      Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> dy(
          dyb + static_cast<std::size_t>(r0) * ow, f, span, Eigen::OuterStride<>(plane));
      im2col(img, c, h, w, k, stride, padding, r0, r1, ow, colp);
      dw.noalias() += dy * ConstMatMap<T>(colp, ckk, span).transpose();
      MatMap<T> dcols(dcolp, ckk, span);
      dcols.noalias() = wmat.transpose() * dy;
      col2im(dcolp, c, h, w, k, stride, padding, r0, r1, ow, dimg);
    }
  }
  return g;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int stride) {
  require_rank(input.shape(), 4, "conv_transpose2d input");
  require_rank(kernel.shape(), 4, "conv_transpose2d kernel");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int f = kernel.dim(1), k = kernel.dim(2);
  if (kernel.dim(0) != c || kernel.dim(3) != k) {
    throw ContractError("conv_transpose2d: input " + shape_str(input.shape()) +
                        " incompatible with kernel " + shape_str(kernel.shape()));
  }
  if (stride < 1) throw ContractError("conv_transpose2d: stride must be >= 1");
  if (bias.size() != static_cast<std::size_t>(f)) {
    throw ContractError("conv_transpose2d: bias " + shape_str(bias.shape()) + " for " +
                        std::to_string(f) + " filters");
  }
  const int oh = (h - 1) * stride + k, ow = (w - 1) * stride + k;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const int fkk = f * k * k;

  Tensor<T> out({n, f, oh, ow});
  RowMat<T> cols(fkk, in_plane);
  ConstMatMap<T> wmat(kernel.data(), c, fkk);
  for (int b = 0; b < n; ++b) {
    ConstMatMap<T> x(input.data() + static_cast<std::size_t>(b) * c * in_plane, c, in_plane);
    cols.noalias() = wmat.transpose() * x;
    T* dst = out.data() + static_cast<std::size_t>(b) * f * out_plane;
    col2im(cols.data(), f, oh, ow, k, stride, 0, 0, h, w, dst);
    for (int j = 0; j < f; ++j) {
      std::for_each(dst + j * out_plane, dst + (j + 1) * out_plane, [&](T& v) { v += bias[j]; });
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                                       const Tensor<T>& grad_out, int stride) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int f = kernel.dim(1), k = kernel.dim(2);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const int fkk = f * k * k;

  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(kernel.shape()), Tensor<T>({f})};
  AlignedVector<T> dcols(static_cast<std::size_t>(fkk) * in_plane);
  ConstMatMap<T> wmat(kernel.data(), c, fkk);
  MatMap<T> dw(g.kernel.data(), c, fkk);
  for (int b = 0; b < n; ++b) {
    const T* dy = grad_out.data() + static_cast<std::size_t>(b) * f * out_plane;
    im2col(dy, f, oh, ow, k, stride, 0, 0, h, w, dcols.data());
    ConstMatMap<T> dcm(dcols.data(), fkk, in_plane);
    ConstMatMap<T> x(input.data() + static_cast<std::size_t>(b) * c * in_plane, c, in_plane);
    MatMap<T>(g.input.data() + static_cast<std::size_t>(b) * c * in_plane, c, in_plane).noalias() =
        wmat * dcm;
    dw.noalias() += x * dcm.transpose();
    for (int j = 0; j < f; ++j) {
      g.bias[j] += ConstArrayMap<T>(dy + j * out_plane, static_cast<Eigen::Index>(out_plane)).sum();
    }
  }
  return g;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int stride, int padding) {
  require_rank(input.shape(), 4, "depthwise_conv2d input");
  require_rank(kernel.shape(), 4, "depthwise_conv2d kernel");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int m = kernel.dim(1), k = kernel.dim(2);
  if (kernel.dim(0) != c || kernel.dim(3) != k) {
    throw ContractError("depthwise_conv2d: kernel " + shape_str(kernel.shape()) +
                        " does not match input channels of " + shape_str(input.shape()));
  }
  if (bias.size() != static_cast<std::size_t>(c) * m) {
    throw ContractError("depthwise_conv2d: bias " + shape_str(bias.shape()) + " for " +
                        std::to_string(c * m) + " output channels");
  }
  const int oh = conv_out_extent(h, k, stride, padding, "depthwise_conv2d");
  const int ow = conv_out_extent(w, k, stride, padding, "depthwise_conv2d");
  Tensor<T> out({n, c * m, oh, ow});
  for (int b = 0; b < n; ++b) {
    for (int ci = 0; ci < c; ++ci) {
      const T* src = &input.at(b, ci, 0, 0);
      for (int j = 0; j < m; ++j) {
        const int oc = ci * m + j;
        T* dst = &out.at(b, oc, 0, 0);
        std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, bias[oc]);
        const T* kern = kernel.data() + (static_cast<std::size_t>(ci) * m + j) * k * k;
        // Taps innermost so each output row stays in L1.
        for (int oy = 0; oy < oh; ++oy) {
          T* orow = dst + static_cast<std::size_t>(oy) * ow;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            const T* line = src + static_cast<std::size_t>(iy) * w;
            for (int kx = 0; kx < k; ++kx) {
              const T wv = kern[ky * k + kx];
              if (stride == 1) {
                const int lo = std::clamp(padding - kx, 0, ow);
                const int hi = std::clamp(w + padding - kx, lo, ow);
                if (hi > lo) {
                  ArrayMap<T>(orow + lo, hi - lo) +=
                      wv * ConstArrayMap<T>(line - padding + kx + lo, hi - lo);
                }
              } else {
                for (int ox = 0; ox < ow; ++ox) {
                  const int ix = ox * stride - padding + kx;
                  if (ix >= 0 && ix < w) orow[ox] += wv * line[ix];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                                       const Tensor<T>& grad_out, int stride, int padding) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int m = kernel.dim(1), k = kernel.dim(2);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(kernel.shape()), Tensor<T>({c * m})};
  for (int b = 0; b < n; ++b) {
    for (int ci = 0; ci < c; ++ci) {
      const T* src = &input.at(b, ci, 0, 0);
      T* dsrc = &g.input.at(b, ci, 0, 0);
      for (int j = 0; j < m; ++j) {
        const int oc = ci * m + j;
        const T* dy = &grad_out.at(b, oc, 0, 0);
        g.bias[oc] += ConstArrayMap<T>(dy, static_cast<Eigen::Index>(oh) * ow).sum();
        const std::size_t koff = (static_cast<std::size_t>(ci) * m + j) * k * k;
        AlignedVector<T> wacc(static_cast<std::size_t>(k) * k, T(0));
        for (int oy = 0; oy < oh; ++oy) {
          const T* drow = dy + static_cast<std::size_t>(oy) * ow;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            const T* line = src + static_cast<std::size_t>(iy) * w;
            T* dline = dsrc + static_cast<std::size_t>(iy) * w;
            for (int kx = 0; kx < k; ++kx) {
              const T wv = kernel[koff + ky * k + kx];
              T& acc = wacc[ky * k + kx];
              if (stride == 1) {
                const int lo = std::clamp(padding - kx, 0, ow);
                const int hi = std::clamp(w + padding - kx, lo, ow);
                if (hi > lo) {
                  ConstArrayMap<T> d(drow + lo, hi - lo);
                  acc += (d * ConstArrayMap<T>(line - padding + kx + lo, hi - lo)).sum();
                  ArrayMap<T>(dline - padding + kx + lo, hi - lo) += wv * d;
                }
              } else {
                for (int ox = 0; ox < ow; ++ox) {
                  const int ix = ox * stride - padding + kx;
                  if (ix < 0 || ix >= w) continue;
                  acc += drow[ox] * line[ix];
                  dline[ix] += wv * drow[ox];
                }
              }
            }
          }
        }
        for (int t = 0; t < k * k; ++t) g.kernel[koff + t] += wacc[t];
      }
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input, int window, int stride) {
  require_rank(input.shape(), 4, "maxpool2d input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window < 1 || stride < 1) throw ContractError("maxpool2d: window and stride must be >= 1");
  if (window > h || window > w) {
    throw ContractError("maxpool2d: window " + std::to_string(window) + " larger than input " +
                        shape_str(input.shape()));
  }
  const int oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  PoolResult<T> r{Tensor<T>({n, c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int b = 0; b < n; ++b) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best = base + static_cast<std::size_t>(oy * stride) * w + ox * stride;
          for (int dy = 0; dy < window; ++dy) {
            for (int dx = 0; dx < window; ++dx) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(oy * stride + dy) * w + ox * stride + dx;
              if (input[idx] > input[best]) best = idx;
            }
          }
          r.output[o] = input[best];
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_out) {
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

namespace {

// Same clamp as sigmoid_t, over whole buffers.
template <typename T>
void sigmoid_buffer(const T* in, T* out, Eigen::Index n) {
  ConstArrayMap<T> h(in, n);
  ArrayMap<T> s(out, n);
  // exp(−h) may overflow to inf, which still gives 0 before the clamp.
  s = (T(1) / (T(1) + (-h).exp())).max(std::numeric_limits<T>::min()).min(std::nextafter(T(1), T(0)));
}

// Elementwise passes run over cache-sized chunks.
constexpr Eigen::Index kChunk = 4096;

template <typename Fn>
void chunked(std::size_t n, Fn&& fn) {
  for (std::size_t i = 0; i < n; i += kChunk) {
    fn(static_cast<Eigen::Index>(i), std::min<Eigen::Index>(kChunk, static_cast<Eigen::Index>(n - i)));
  }
}

}  // namespace

template <typename T>
Tensor<T> smish(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  chunked(input.size(), [&](Eigen::Index at, Eigen::Index len) {
    sigmoid_buffer(input.data() + at, out.data() + at, len);
    ConstArrayMap<T> h(input.data() + at, len);
    ArrayMap<T> y(out.data() + at, len);
    y = y * (T(2) + y);
    y = h * y / (T(2) + y);
  });
  return out;
}

template <typename T>
Tensor<T> smish_derivative(const Tensor<T>& input) {
  Tensor<T> derivative;
  smish_with_derivative(input, derivative);
  return derivative;
}

template <typename T>
Tensor<T> smish_with_derivative(const Tensor<T>& input, Tensor<T>& derivative) {
  Tensor<T> out(input.shape());
  derivative = Tensor<T>(input.shape());
  Eigen::Array<T, Eigen::Dynamic, 1> q(kChunk);
  chunked(input.size(), [&](Eigen::Index at, Eigen::Index len) {
    sigmoid_buffer(input.data() + at, derivative.data() + at, len);
    ConstArrayMap<T> h(input.data() + at, len);
    ArrayMap<T> s(derivative.data() + at, len);
    ArrayMap<T> y(out.data() + at, len);
    auto qs = q.head(len);
    qs = T(2) + s * (T(2) + s);
    y = (qs - T(2)) / qs;  // tanh(ln(1+s))
    s = y + h * (T(4) * (T(1) + s) / (qs * qs)) * s * (T(1) - s);
    y *= h;
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  chunked(input.size(), [&](Eigen::Index at, Eigen::Index len) {
    sigmoid_buffer(input.data() + at, out.data() + at, len);
  });
  return out;
}

#define TEED_INSTANTIATE_KERNELS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        int, int);                                             \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                      int);                                                    \
  template ConvGrads<T> conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&,          \
                                                  const Tensor<T>&, int);                      \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                      int, int);                                               \
  template ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>&, const Tensor<T>&,          \
                                                  const Tensor<T>&, int, int);                 \
  template PoolResult<T> maxpool2d(const Tensor<T>&, int, int);                                \
  template Tensor<T> maxpool2d_backward(const Shape&, const std::vector<std::size_t>&,         \
                                        const Tensor<T>&);                                     \
  template Tensor<T> smish(const Tensor<T>&);                                                  \
  template Tensor<T> smish_derivative(const Tensor<T>&);                                       \
  template Tensor<T> smish_with_derivative(const Tensor<T>&, Tensor<T>&);                      \
  template Tensor<T> sigmoid(const Tensor<T>&);

TEED_INSTANTIATE_KERNELS(float)
TEED_INSTANTIATE_KERNELS(double)

}  // namespace teed::kernels
