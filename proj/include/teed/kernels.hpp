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

#ifndef TEED_KERNELS_HPP_
#define TEED_KERNELS_HPP_

#include <cstddef>
#include <vector>

#include "teed/tensor.hpp"

// Forward kernels and their analytic adjoints. All functions are pure and
// single-threaded; convolution sums go through an Eigen GEMM in the storage
// precision T.
namespace teed::kernels {

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;
};

// Cross-correlation with zero padding.
// input N×C×H×W, kernel F×C×k×k, bias F -> N×F×H'×W',
// H' = (H + 2·padding − k) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, int stride, int padding);

// Adjoint of conv2d with the same geometry and zero padding.
// input N×C×H×W, kernel C×F×k×k, bias F -> N×F×((H−1)·stride+k)×((W−1)·stride+k).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int stride);
template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                                       const Tensor<T>& grad_out, int stride);

// input N×C×H×W, kernel C×m×k×k, bias C·m. Output channel c·m+j convolves
// input channel c with kernel (c, j).
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int stride, int padding);
template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                                       const Tensor<T>& grad_out, int stride, int padding);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Floor semantics: incomplete border windows are dropped. Ties resolve to the
// first row-major maximum.
template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input, int window, int stride);
template <typename T>
Tensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_out);

double smish(double h);
double smish_derivative(double h);
double sigmoid(double h);

// smish(h) = h·tanh(ln(1 + sigmoid(h))), elementwise.
template <typename T>
Tensor<T> smish(const Tensor<T>& input);
template <typename T>
Tensor<T> smish_derivative(const Tensor<T>& input);
// Both in one pass; the derivative is written to `derivative`.
template <typename T>
Tensor<T> smish_with_derivative(const Tensor<T>& input, Tensor<T>& derivative);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

}  // namespace teed::kernels

#endif  // TEED_KERNELS_HPP_
