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

#ifndef TEED_AUTOGRAD_HPP_
#define TEED_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <vector>

#include "teed/tensor.hpp"

namespace teed {

/// A value in the computation plus its accumulated gradient.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;

  void accumulate(const Tensor<T>& g) {
    check_shape(g);
    if (grad.empty()) {
      grad = g;
      return;
    }
    add_into(g);
  }

  void accumulate(Tensor<T>&& g) {
    check_shape(g);
    if (grad.empty()) {
      grad = std::move(g);
      return;
    }
    add_into(g);
  }

 private:
  void check_shape(const Tensor<T>& g) const {
    if (g.shape() != value.shape()) {
      throw ContractError("gradient " + shape_str(g.shape()) + " does not match value " +
                          shape_str(value.shape()));
    }
  }

  void add_into(const Tensor<T>& g) {
    T* dst = grad.data();
    const T* src = g.data();
    for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto node = constant(std::move(value));
  node->requires_grad = true;
  return node;
}

/// Ordered record of executed ops. backward() replays the record in reverse,
/// once; a second call is a contract error. A tape in inference mode records
/// nothing and cannot be replayed.
template <typename T>
class GradTape {
 public:
  enum class Mode { kRecord, kInference };

  explicit GradTape(Mode mode = Mode::kRecord) : mode_(mode) {}
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;
  GradTape(GradTape&&) noexcept = default;
  GradTape& operator=(GradTape&&) noexcept = default;

  bool recording() const noexcept { return mode_ == Mode::kRecord && !consumed_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void record(std::function<void()> backward_fn) {
    if (consumed_) throw ContractError("cannot record on a consumed tape");
    if (mode_ == Mode::kRecord) entries_.push_back(std::move(backward_fn));
  }

  void backward(const Var<T>& loss) {
    if (mode_ != Mode::kRecord) throw ContractError("backward on an inference tape");
    if (consumed_) throw ContractError("tape already consumed by a previous backward");
    if (!loss || loss->value.size() != 1) {
      throw ContractError("backward needs a scalar loss");
    }
    consumed_ = true;
    loss->accumulate(Tensor<T>(loss->value.shape(), T(1)));
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  Mode mode_;
  bool consumed_ = false;
  std::vector<std::function<void()>> entries_;
};

}  // namespace teed

#endif  // TEED_AUTOGRAD_HPP_
