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

#ifndef TEED_MODEL_HPP_
#define TEED_MODEL_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "teed/autograd.hpp"
#include "teed/tensor.hpp"

namespace teed {

enum class Activation { kSmish };

struct ModelConfig {
  std::array<int, 3> block_channels{16, 32, 48};
  int blocks = 3;             // only the three-block network is supported
  int dfuse_multiplier = 8;   // dfuse width = 3 × multiplier
  int usnet3_channels = 8;    // width between the two deconvs of the deepest upsampler
  double input_scale = 1.0;   // 1.5 runs the upscaled-input variant
  Activation activation = Activation::kSmish;

  int dfuse_channels() const noexcept { return 3 * dfuse_multiplier; }
  void validate() const;

  static ModelConfig upscaled() {
    ModelConfig c;
    c.input_scale = 1.5;
    return c;
  }
};

enum class LayerKind { kConv, kDeconv, kDepthwise };

/// One row of the pinned layer table. Parameter tensors are named
/// "<name>.weight" and "<name>.bias".
struct LayerSpec {
  std::string name;
  LayerKind kind;
  Shape weight_shape;
  int bias_size;

  std::size_t param_count() const { return shape_numel(weight_shape) + bias_size; }
};

std::vector<LayerSpec> layer_table(const ModelConfig& config);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Learnable tensors in layer-table order.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, Tensor<T> tensor) {
    if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(tensor)});
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  const Tensor<T>& at(std::string_view name) const { return entries_[lookup(name)].tensor; }
  Tensor<T>& at(std::string_view name) { return entries_[lookup(name)].tensor; }

  const std::vector<NamedTensor<T>>& entries() const noexcept { return entries_; }
  std::vector<NamedTensor<T>>& entries() noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name ||
          !(a.entries_[i].tensor == b.entries_[i].tensor)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::size_t lookup(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + std::string(name));
    return it->second;
  }

  std::vector<NamedTensor<T>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

template <typename T>
std::size_t count_params(const ParamStore<T>& params) {
  std::size_t n = 0;
  for (const auto& e : params.entries()) n += e.tensor.size();
  return n;
}

/// Xavier-uniform kernels, zero biases. Deterministic in `seed`.
template <typename T>
ParamStore<T> build(const ModelConfig& config, std::uint64_t seed);

/// The four sigmoid maps, each 1×H×W at the input resolution.
template <typename T>
struct EdgeMapSet {
  std::array<Tensor<T>, 4> maps;

  const Tensor<T>& y1() const { return maps[0]; }
  const Tensor<T>& y2() const { return maps[1]; }
  const Tensor<T>& y3() const { return maps[2]; }
  const Tensor<T>& dfuse() const { return maps[3]; }
};

inline constexpr std::array<std::string_view, 4> kMapNames{"y1", "y2", "y3", "dfuse"};

/// Parameters bound as graph leaves for one forward pass.
template <typename T>
class ParamVars {
 public:
  ParamVars(const ParamStore<T>& store, bool requires_grad);

  const Var<T>& operator()(std::string_view name) const;
  const std::vector<Var<T>>& leaves() const noexcept { return leaves_; }

 private:
  std::vector<Var<T>> leaves_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

template <typename T>
struct TapedForward {
  ParamVars<T> params;
  std::array<Var<T>, 4> maps;  // y1, y2, y3, dfuse; each 1×H×W
};

/// Full network on one 3×H×W image (H, W >= 16). Inputs whose sides are not
/// multiples of 4 are reflect-padded and the maps cropped back.
template <typename T>
TapedForward<T> forward(GradTape<T>& tape, const ParamStore<T>& params, const Tensor<T>& image,
                        bool requires_grad = true);

/// Inference-only forward.
template <typename T>
EdgeMapSet<T> predict_maps(const ParamStore<T>& params, const Tensor<T>& image);

/// Fusion head on three N×1×H×W side maps; returns the N×1×H×W fused map.
template <typename T>
Var<T> dfuse_head(GradTape<T>& tape, const ParamVars<T>& params,
                  const std::array<Var<T>, 3>& side_maps);

/// Replays the tape from `loss` and gathers one gradient per parameter, in
/// store order. Parameters the loss does not reach get zeros.
template <typename T>
ParamStore<T> backward(GradTape<T>& tape, const Var<T>& loss, const TapedForward<T>& taped,
                       const ParamStore<T>& params);

/// Reflect-pads the bottom and right edges (mirror without repeating the
/// border pixel) so both sides become multiples of `multiple`.
template <typename T>
Tensor<T> reflect_pad_to_multiple(const Tensor<T>& image, int multiple);

}  // namespace teed

#endif  // TEED_MODEL_HPP_
