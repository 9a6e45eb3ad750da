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

#include "teed/ops.hpp"

#include <algorithm>

#include "teed/kernels.hpp"

namespace teed::ops {
namespace {

template <typename T, typename... Vars>
bool any_requires_grad(const Vars&... vars) {
  return (vars->requires_grad || ...);
}

template <typename T>
Var<T> make_output(Tensor<T> value, const char* op, bool requires_grad) {
  value.check_finite(op);
  auto out = constant(std::move(value));
  out->requires_grad = requires_grad;
  return out;
}

template <typename T>
bool should_record(const GradTape<T>& tape, const Var<T>& out) {
  return tape.recording() && out->requires_grad;
}

}  // namespace

template <typename T>
Var<T> conv2d(GradTape<T>& tape, const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
              int stride, int padding) {
  auto out = make_output(kernels::conv2d(input->value, kernel->value, bias->value, stride, padding),
                         "conv2d", any_requires_grad<T>(input, kernel, bias));
  if (should_record(tape, out)) {
    tape.record([input, kernel, bias, out, stride, padding] {
      if (out->grad.empty()) return;
      auto g = kernels::conv2d_backward(input->value, kernel->value, out->grad, stride, padding);
      if (input->requires_grad) input->accumulate(std::move(g.input));
      if (kernel->requires_grad) kernel->accumulate(std::move(g.kernel));
      if (bias->requires_grad) bias->accumulate(std::move(g.bias));
    });
  }
  return out;
}

template <typename T>
Var<T> conv_transpose2d(GradTape<T>& tape, const Var<T>& input, const Var<T>& kernel,
                        const Var<T>& bias, int stride) {
  auto out = make_output(kernels::conv_transpose2d(input->value, kernel->value, bias->value, stride),
                         "conv_transpose2d", any_requires_grad<T>(input, kernel, bias));
  if (should_record(tape, out)) {
    tape.record([input, kernel, bias, out, stride] {
      if (out->grad.empty()) return;
      auto g = kernels::conv_transpose2d_backward(input->value, kernel->value, out->grad, stride);
      if (input->requires_grad) input->accumulate(std::move(g.input));
      if (kernel->requires_grad) kernel->accumulate(std::move(g.kernel));
      if (bias->requires_grad) bias->accumulate(std::move(g.bias));
    });
  }
  return out;
}

template <typename T>
Var<T> depthwise_conv2d(GradTape<T>& tape, const Var<T>& input, const Var<T>& kernel,
                        const Var<T>& bias, int stride, int padding) {
  auto out = make_output(
      kernels::depthwise_conv2d(input->value, kernel->value, bias->value, stride, padding),
      "depthwise_conv2d", any_requires_grad<T>(input, kernel, bias));
  if (should_record(tape, out)) {
    tape.record([input, kernel, bias, out, stride, padding] {
      if (out->grad.empty()) return;
      auto g = kernels::depthwise_conv2d_backward(input->value, kernel->value, out->grad, stride,
                                                  padding);
      if (input->requires_grad) input->accumulate(std::move(g.input));
      if (kernel->requires_grad) kernel->accumulate(std::move(g.kernel));
      if (bias->requires_grad) bias->accumulate(std::move(g.bias));
    });
  }
  return out;
}

template <typename T>
Var<T> maxpool2d(GradTape<T>& tape, const Var<T>& input, int window, int stride) {
  auto pooled = kernels::maxpool2d(input->value, window, stride);
  auto out = make_output(std::move(pooled.output), "maxpool2d", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out, argmax = std::move(pooled.argmax)] {
      if (out->grad.empty()) return;
      input->accumulate(kernels::maxpool2d_backward(input->value.shape(), argmax, out->grad));
    });
  }
  return out;
}

template <typename T>
Var<T> smish(GradTape<T>& tape, const Var<T>& input) {
  if (!tape.recording() || !input->requires_grad) {
    return make_output(kernels::smish(input->value), "smish", input->requires_grad);
  }
  Tensor<T> derivative;
  auto out = make_output(kernels::smish_with_derivative(input->value, derivative), "smish", true);
  tape.record([input, out, derivative = std::move(derivative)] {
    if (out->grad.empty()) return;
    Tensor<T> g = std::move(out->grad);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= derivative[i];
    input->accumulate(std::move(g));
  });
  return out;
}

template <typename T>
Var<T> sigmoid(GradTape<T>& tape, const Var<T>& input) {
  auto out = make_output(kernels::sigmoid(input->value), "sigmoid", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out] {
      if (out->grad.empty()) return;
      Tensor<T> g = std::move(out->grad);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T s = out->value[i];
        g[i] *= s * (T(1) - s);
      }
      input->accumulate(std::move(g));
    });
  }
  return out;
}

template <typename T>
Var<T> add(GradTape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a->value.shape() != b->value.shape()) {
    throw ContractError("add: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                        shape_str(b->value.shape()));
  }
  Tensor<T> sum_value = a->value;
  T* dst = sum_value.data();
  const T* src = b->value.data();
  for (std::size_t i = 0; i < sum_value.size(); ++i) dst[i] += src[i];
  auto out = make_output(std::move(sum_value), "add", any_requires_grad<T>(a, b));
  if (should_record(tape, out)) {
    tape.record([a, b, out] {
      if (out->grad.empty()) return;
      if (a->requires_grad) a->accumulate(out->grad);
      if (b->requires_grad) b->accumulate(out->grad);
    });
  }
  return out;
}

template <typename T>
Var<T> scale(GradTape<T>& tape, const Var<T>& input, T factor) {
  Tensor<T> value = input->value;
  for (auto& v : value.values()) v *= factor;
  auto out = make_output(std::move(value), "scale", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out, factor] {
      if (out->grad.empty()) return;
      Tensor<T> g = out->grad;
      for (auto& v : g.values()) v *= factor;
      input->accumulate(std::move(g));
    });
  }
  return out;
}

template <typename T>
Var<T> channel_sum(GradTape<T>& tape, const Var<T>& input) {
  const Shape& s = input->value.shape();
  if (s.size() != 4) throw ContractError("channel_sum: expected rank 4, got " + shape_str(s));
  const int n = s[0], c = s[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<T> value({n, 1, s[2], s[3]});
  for (int b = 0; b < n; ++b) {
    T* dst = value.data() + b * plane;
    for (int ci = 0; ci < c; ++ci) {
      const T* src = input->value.data() + (static_cast<std::size_t>(b) * c + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
  auto out = make_output(std::move(value), "channel_sum", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out, n, c, plane] {
      if (out->grad.empty()) return;
      Tensor<T> g(input->value.shape());
      for (int b = 0; b < n; ++b) {
        const T* src = out->grad.data() + b * plane;
        for (int ci = 0; ci < c; ++ci) {
          std::copy(src, src + plane, g.data() + (static_cast<std::size_t>(b) * c + ci) * plane);
        }
      }
      input->accumulate(std::move(g));
    });
  }
  return out;
}

template <typename T>
Var<T> concat_channels(GradTape<T>& tape, const std::vector<Var<T>>& inputs) {
  if (inputs.empty()) throw ContractError("concat_channels: no inputs");
  const Shape& first = inputs.front()->value.shape();
  if (first.size() != 4) throw ContractError("concat_channels: expected rank 4 inputs");
  int channels = 0;
  bool requires_grad = false;
  for (const auto& v : inputs) {
    const Shape& s = v->value.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ContractError("concat_channels: incompatible shapes " + shape_str(first) + " and " +
                          shape_str(s));
    }
    channels += s[1];
    requires_grad = requires_grad || v->requires_grad;
  }
  const int n = first[0];
  const std::size_t plane = static_cast<std::size_t>(first[2]) * first[3];
  Tensor<T> value({n, channels, first[2], first[3]});
  for (int b = 0; b < n; ++b) {
    T* dst = value.data() + static_cast<std::size_t>(b) * channels * plane;
    for (const auto& v : inputs) {
      const std::size_t chunk = static_cast<std::size_t>(v->value.dim(1)) * plane;
      const T* src = v->value.data() + b * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  auto out = make_output(std::move(value), "concat_channels", requires_grad);
  if (should_record(tape, out)) {
    tape.record([inputs, out, n, channels, plane] {
      if (out->grad.empty()) return;
      std::size_t channel_offset = 0;
      for (const auto& v : inputs) {
        const int ci = v->value.dim(1);
        if (v->requires_grad) {
          Tensor<T> g(v->value.shape());
          for (int b = 0; b < n; ++b) {
            const T* src = out->grad.data() +
                           (static_cast<std::size_t>(b) * channels + channel_offset) * plane;
            std::copy(src, src + ci * plane, g.data() + static_cast<std::size_t>(b) * ci * plane);
          }
          v->accumulate(std::move(g));
        }
        channel_offset += ci;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> crop(GradTape<T>& tape, const Var<T>& input, int height, int width) {
  const Shape& s = input->value.shape();
  if (s.size() < 2) throw ContractError("crop: rank must be >= 2");
  const std::size_t r = s.size();
  const int h = s[r - 2], w = s[r - 1];
  if (height < 1 || width < 1 || height > h || width > w) {
    throw ContractError("crop: window " + std::to_string(height) + "x" + std::to_string(width) +
                        " outside " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[r - 2] = height;
  out_shape[r - 1] = width;
  const std::size_t planes = input->value.size() / (static_cast<std::size_t>(h) * w);
  Tensor<T> value(out_shape);
  for (std::size_t p = 0; p < planes; ++p) {
    for (int y = 0; y < height; ++y) {
      const T* src = input->value.data() + (p * h + y) * w;
      std::copy(src, src + width, value.data() + (p * height + y) * width);
    }
  }
  auto out = make_output(std::move(value), "crop", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out, planes, h, w, height, width] {
      if (out->grad.empty()) return;
      Tensor<T> g(input->value.shape());
      for (std::size_t p = 0; p < planes; ++p) {
        for (int y = 0; y < height; ++y) {
          const T* src = out->grad.data() + (p * height + y) * width;
          std::copy(src, src + width, g.data() + (p * h + y) * w);
        }
      }
      input->accumulate(std::move(g));
    });
  }
  return out;
}

template <typename T>
Var<T> reshape(GradTape<T>& tape, const Var<T>& input, Shape shape) {
  auto out = make_output(input->value.reshaped(std::move(shape)), "reshape", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out] {
      if (out->grad.empty()) return;
      input->accumulate(out->grad.reshaped(input->value.shape()));
    });
  }
  return out;
}

template <typename T>
Var<T> sum(GradTape<T>& tape, const Var<T>& input) {
  T total = 0;
  for (const T v : input->value.values()) total += v;
  auto out = make_output(Tensor<T>({1}, std::vector<T>{total}), "sum", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out] {
      if (out->grad.empty()) return;
      input->accumulate(Tensor<T>(input->value.shape(), out->grad[0]));
    });
  }
  return out;
}

template <typename T>
Var<T> mean(GradTape<T>& tape, const Var<T>& input) {
  return scale(tape, sum(tape, input), T(1) / static_cast<T>(input->value.size()));
}

template <typename T>
Var<T> dot(GradTape<T>& tape, const Var<T>& input, const Tensor<T>& weights) {
  if (input->value.shape() != weights.shape()) {
    throw ContractError("dot: shape mismatch " + shape_str(input->value.shape()) + " vs " +
                        shape_str(weights.shape()));
  }
  T total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += input->value[i] * weights[i];
  auto out = make_output(Tensor<T>({1}, std::vector<T>{total}), "dot", input->requires_grad);
  if (should_record(tape, out)) {
    tape.record([input, out, weights] {
      if (out->grad.empty()) return;
      Tensor<T> g = weights;
      for (auto& v : g.values()) v *= out->grad[0];
      input->accumulate(std::move(g));
    });
  }
  return out;
}

#define TEED_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> conv2d(GradTape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int, int); \
  template Var<T> conv_transpose2d(GradTape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,  \
                                   int);                                                       \
  template Var<T> depthwise_conv2d(GradTape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,  \
                                   int, int);                                                  \
  template Var<T> maxpool2d(GradTape<T>&, const Var<T>&, int, int);                            \
  template Var<T> smish(GradTape<T>&, const Var<T>&);                                          \
  template Var<T> sigmoid(GradTape<T>&, const Var<T>&);                                        \
  template Var<T> add(GradTape<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> scale(GradTape<T>&, const Var<T>&, T);                                       \
  template Var<T> channel_sum(GradTape<T>&, const Var<T>&);                                    \
  template Var<T> concat_channels(GradTape<T>&, const std::vector<Var<T>>&);                   \
  template Var<T> crop(GradTape<T>&, const Var<T>&, int, int);                                 \
  template Var<T> reshape(GradTape<T>&, const Var<T>&, Shape);                                 \
  template Var<T> sum(GradTape<T>&, const Var<T>&);                                            \
  template Var<T> mean(GradTape<T>&, const Var<T>&);                                           \
  template Var<T> dot(GradTape<T>&, const Var<T>&, const Tensor<T>&);

TEED_INSTANTIATE_OPS(float)
TEED_INSTANTIATE_OPS(double)

}  // namespace teed::ops
