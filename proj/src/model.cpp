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

#include "teed/model.hpp"

#include <cmath>
#include <random>

#include "teed/ops.hpp"

namespace teed {

void ModelConfig::validate() const {
  if (blocks != 3) {
    throw ContractError("only the three-block network is supported, got blocks=" +
                        std::to_string(blocks));
  }
  for (const int c : block_channels) {
    if (c < 1) throw ContractError("block channel widths must be positive");
  }
  if (dfuse_multiplier < 1) throw ContractError("dfuse multiplier must be >= 1");
  if (usnet3_channels < 1) throw ContractError("usnet3 width must be >= 1");
  if (!(input_scale > 0.0)) throw ContractError("input scale must be positive");
}

std::vector<LayerSpec> layer_table(const ModelConfig& config) {
  config.validate();
  const int c1 = config.block_channels[0];
  const int c2 = config.block_channels[1];
  const int c3 = config.block_channels[2];
  const int u3 = config.usnet3_channels;
  const int m = config.dfuse_multiplier;
  using K = LayerKind;
  return {
      {"block1.conv1", K::kConv, {c1, 3, 3, 3}, c1},
      {"block1.conv2", K::kConv, {c1, c1, 3, 3}, c1},
      {"block2.conv1", K::kConv, {c2, c1, 3, 3}, c2},
      {"block2.conv2", K::kConv, {c2, c2, 3, 3}, c2},
      {"skip1.proj", K::kConv, {c2, c1, 1, 1}, c2},
      {"block3.conv1", K::kConv, {c3, c2, 3, 3}, c3},
      {"skip2.proj", K::kConv, {c3, c2, 1, 1}, c3},
      {"block3.conv2", K::kConv, {c3, c3, 3, 3}, c3},
      {"usnet1.conv", K::kConv, {1, c1, 1, 1}, 1},
      {"usnet1.deconv", K::kDeconv, {1, 1, 2, 2}, 1},
      {"usnet2.conv", K::kConv, {1, c2, 1, 1}, 1},
      {"usnet2.deconv", K::kDeconv, {1, 1, 2, 2}, 1},
      {"usnet3.conv1", K::kConv, {u3, c3, 1, 1}, u3},
      {"usnet3.deconv1", K::kDeconv, {u3, u3, 2, 2}, u3},
      {"usnet3.conv2", K::kConv, {1, u3, 1, 1}, 1},
      {"usnet3.deconv2", K::kDeconv, {1, 1, 2, 2}, 1},
      {"dfuse.dw1", K::kDepthwise, {3, m, 3, 3}, 3 * m},
      {"dfuse.dw2", K::kDepthwise, {3 * m, 1, 3, 3}, 3 * m},
  };
}

namespace {

// Fan sizes follow the usual framework convention for each weight layout.
std::pair<double, double> fans(const LayerSpec& layer) {
  const auto& s = layer.weight_shape;
  const double field = static_cast<double>(s[2]) * s[3];
  switch (layer.kind) {
    case LayerKind::kConv:
      return {s[1] * field, s[0] * field};
    case LayerKind::kDeconv:
      return {s[1] * field, s[0] * field};
    case LayerKind::kDepthwise:
      return {field, static_cast<double>(s[0]) * s[1] * field};
  }
  return {1.0, 1.0};
}

}  // namespace

template <typename T>
ParamStore<T> build(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore<T> store;
  for (const auto& layer : layer_table(config)) {
    const auto [fan_in, fan_out] = fans(layer);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor<T> weight(layer.weight_shape);
    for (auto& v : weight.values()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = static_cast<T>(bound * (2.0 * u - 1.0));
    }
    store.add(layer.name + ".weight", std::move(weight));
    store.add(layer.name + ".bias", Tensor<T>({layer.bias_size}));
  }
  return store;
}

template <typename T>
ParamVars<T>::ParamVars(const ParamStore<T>& store, bool requires_grad) {
  leaves_.reserve(store.size());
  for (const auto& e : store.entries()) {
    index_.emplace(e.name, leaves_.size());
    leaves_.push_back(requires_grad ? parameter(e.tensor) : constant(e.tensor));
  }
}

template <typename T>
const Var<T>& ParamVars<T>::operator()(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("missing parameter " + std::string(name));
  return leaves_[it->second];
}

template <typename T>
Tensor<T> reflect_pad_to_multiple(const Tensor<T>& image, int multiple) {
  const std::size_t r = image.rank();
  if (r < 2) throw ContractError("reflect_pad_to_multiple: rank must be >= 2");
  const int h = image.dim(r - 2), w = image.dim(r - 1);
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image;
  if (ph - h >= h || pw - w >= w) throw ContractError("reflect padding larger than the image");
  Shape shape = image.shape();
  shape[r - 2] = ph;
  shape[r - 1] = pw;
  Tensor<T> out(shape);
  const std::size_t planes = image.size() / (static_cast<std::size_t>(h) * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (int y = 0; y < ph; ++y) {
      const int sy = y < h ? y : 2 * (h - 1) - y;
      for (int x = 0; x < pw; ++x) {
        const int sx = x < w ? x : 2 * (w - 1) - x;
        out[(p * ph + y) * pw + x] = image[(p * h + sy) * w + sx];
      }
    }
  }
  return out;
}

namespace {

template <typename T>
Var<T> conv(GradTape<T>& tape, const ParamVars<T>& p, const Var<T>& x, const std::string& layer,
            int stride, int padding) {
  return ops::conv2d(tape, x, p(layer + ".weight"), p(layer + ".bias"), stride, padding);
}

template <typename T>
Var<T> conv_smish(GradTape<T>& tape, const ParamVars<T>& p, const Var<T>& x,
                  const std::string& layer, int stride, int padding) {
  return ops::smish(tape, conv(tape, p, x, layer, stride, padding));
}

template <typename T>
Var<T> deconv(GradTape<T>& tape, const ParamVars<T>& p, const Var<T>& x, const std::string& layer) {
  return ops::conv_transpose2d(tape, x, p(layer + ".weight"), p(layer + ".bias"), 2);
}

}  // namespace

template <typename T>
Var<T> dfuse_head(GradTape<T>& tape, const ParamVars<T>& p, const std::array<Var<T>, 3>& side_maps) {
  auto stacked = ops::concat_channels(tape, {side_maps[0], side_maps[1], side_maps[2]});
  auto a = ops::depthwise_conv2d(tape, ops::smish(tape, stacked), p("dfuse.dw1.weight"),
                                 p("dfuse.dw1.bias"), 1, 1);
  auto b = ops::depthwise_conv2d(tape, ops::smish(tape, a), p("dfuse.dw2.weight"),
                                 p("dfuse.dw2.bias"), 1, 1);
  auto fused = ops::smish(tape, ops::channel_sum(tape, ops::add(tape, a, b)));
  return ops::sigmoid(tape, fused);
}

template <typename T>
TapedForward<T> forward(GradTape<T>& tape, const ParamStore<T>& params, const Tensor<T>& image,
                        bool requires_grad) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractError("forward expects a 3xHxW image, got " + shape_str(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  if (h < 16 || w < 16) {
    throw ContractError("forward needs H, W >= 16, got " + shape_str(image.shape()));
  }
  TapedForward<T> out{ParamVars<T>(params, requires_grad), {}};
  const auto& p = out.params;

  Tensor<T> padded = reflect_pad_to_multiple(image, 4);
  const int ph = padded.dim(1), pw = padded.dim(2);
  auto x = constant(padded.reshaped({1, 3, ph, pw}));

  // Backbone: h1, h2 at 1/2 resolution, h3 at 1/4.
  auto h1 = conv_smish(tape, p, conv_smish(tape, p, x, "block1.conv1", 2, 1), "block1.conv2", 1, 1);
  auto h2 = conv_smish(tape, p, conv_smish(tape, p, h1, "block2.conv1", 1, 1), "block2.conv2", 1, 1);
  auto skip1 = ops::maxpool2d(tape, ops::add(tape, conv(tape, p, h1, "skip1.proj", 1, 0), h2), 2, 2);
  auto b31 = conv_smish(tape, p, skip1, "block3.conv1", 1, 1);
  auto skip2 = conv(tape, p, ops::maxpool2d(tape, h2, 2, 2), "skip2.proj", 1, 0);
  auto b32_in = ops::scale(tape, ops::add(tape, b31, skip2), T(0.5));
  auto h3 = conv_smish(tape, p, b32_in, "block3.conv2", 1, 1);

  // Upsamplers back to full resolution.
  auto y1 = ops::sigmoid(tape, deconv(tape, p, conv_smish(tape, p, h1, "usnet1.conv", 1, 0), "usnet1.deconv"));
  auto y2 = ops::sigmoid(tape, deconv(tape, p, conv_smish(tape, p, h2, "usnet2.conv", 1, 0), "usnet2.deconv"));
  auto u3 = deconv(tape, p, conv_smish(tape, p, h3, "usnet3.conv1", 1, 0), "usnet3.deconv1");
  auto y3 = ops::sigmoid(tape, deconv(tape, p, conv_smish(tape, p, u3, "usnet3.conv2", 1, 0), "usnet3.deconv2"));

  auto yd = dfuse_head(tape, p, {y1, y2, y3});

  const std::array<Var<T>, 4> full{y1, y2, y3, yd};
  for (std::size_t i = 0; i < full.size(); ++i) {
    auto m = full[i];
    if (ph != h || pw != w) m = ops::crop(tape, m, h, w);
    out.maps[i] = ops::reshape(tape, m, {1, h, w});
  }
  return out;
}

template <typename T>
EdgeMapSet<T> predict_maps(const ParamStore<T>& params, const Tensor<T>& image) {
  GradTape<T> tape(GradTape<T>::Mode::kInference);
  auto taped = forward(tape, params, image, false);
  EdgeMapSet<T> maps;
  for (std::size_t i = 0; i < 4; ++i) maps.maps[i] = std::move(taped.maps[i]->value);
  return maps;
}

template <typename T>
ParamStore<T> backward(GradTape<T>& tape, const Var<T>& loss, const TapedForward<T>& taped,
                       const ParamStore<T>& params) {
  tape.backward(loss);
  ParamStore<T> grads;
  const auto& leaves = taped.params.leaves();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entries()[i];
    grads.add(e.name, leaves[i]->grad.empty() ? Tensor<T>(e.tensor.shape()) : leaves[i]->grad);
  }
  return grads;
}

#define TEED_INSTANTIATE_MODEL(T)                                                              \
  template ParamStore<T> build(const ModelConfig&, std::uint64_t);                            \
  template class ParamVars<T>;                                                                \
  template Tensor<T> reflect_pad_to_multiple(const Tensor<T>&, int);                          \
  template Var<T> dfuse_head(GradTape<T>&, const ParamVars<T>&, const std::array<Var<T>, 3>&); \
  template TapedForward<T> forward(GradTape<T>&, const ParamStore<T>&, const Tensor<T>&, bool); \
  template EdgeMapSet<T> predict_maps(const ParamStore<T>&, const Tensor<T>&);                \
  template ParamStore<T> backward(GradTape<T>&, const Var<T>&, const TapedForward<T>&,        \
                                  const ParamStore<T>&);

TEED_INSTANTIATE_MODEL(float)
TEED_INSTANTIATE_MODEL(double)

}  // namespace teed
