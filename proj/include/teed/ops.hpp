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

#ifndef TEED_OPS_HPP_
#define TEED_OPS_HPP_

#include <vector>

#include "teed/autograd.hpp"

// Differentiable wrappers over teed::kernels. Each op computes its value,
// checks it is finite and, when the tape records and an input needs a
// gradient, pushes its adjoint onto the tape.
namespace teed::ops {

template <typename T>
Var<T> conv2d(GradTape<T>& tape, const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
              int stride, int padding);

template <typename T>
Var<T> conv_transpose2d(GradTape<T>& tape, const Var<T>& input, const Var<T>& kernel,
                        const Var<T>& bias, int stride);

template <typename T>
Var<T> depthwise_conv2d(GradTape<T>& tape, const Var<T>& input, const Var<T>& kernel,
                        const Var<T>& bias, int stride, int padding);

template <typename T>
Var<T> maxpool2d(GradTape<T>& tape, const Var<T>& input, int window, int stride);

template <typename T>
Var<T> smish(GradTape<T>& tape, const Var<T>& input);

template <typename T>
Var<T> sigmoid(GradTape<T>& tape, const Var<T>& input);

template <typename T>
Var<T> add(GradTape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(GradTape<T>& tape, const Var<T>& input, T factor);

// N×C×H×W -> N×1×H×W.
template <typename T>
Var<T> channel_sum(GradTape<T>& tape, const Var<T>& input);

// Concatenate N×Ci×H×W tensors along channels.
template <typename T>
Var<T> concat_channels(GradTape<T>& tape, const std::vector<Var<T>>& inputs);

// Keep the top-left height×width window of every plane.
template <typename T>
Var<T> crop(GradTape<T>& tape, const Var<T>& input, int height, int width);

template <typename T>
Var<T> reshape(GradTape<T>& tape, const Var<T>& input, Shape shape);

template <typename T>
Var<T> sum(GradTape<T>& tape, const Var<T>& input);

template <typename T>
Var<T> mean(GradTape<T>& tape, const Var<T>& input);

/// Σ input·weights with a constant weight tensor of the same shape.
template <typename T>
Var<T> dot(GradTape<T>& tape, const Var<T>& input, const Tensor<T>& weights);

}  // namespace teed::ops

#endif  // TEED_OPS_HPP_
