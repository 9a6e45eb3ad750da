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

#ifndef TEED_OPTIMIZER_HPP_
#define TEED_OPTIMIZER_HPP_

#include <cstdint>

#include "teed/model.hpp"

namespace teed {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 2e-4;  // decoupled: θ ← θ − lr·wd·θ
};

/// Step schedule: `initial` before `decay_epoch`, `decayed` from it on.
/// Epochs are 0-based.
struct LrSchedule {
  double initial = 8e-4;
  double decayed = 8e-5;
  int decay_epoch = 5;

  double at(int epoch) const;
};

double lr_at_epoch(int epoch);

template <typename T>
struct OptimState {
  ParamStore<T> first_moment;
  ParamStore<T> second_moment;
  std::int64_t step = 0;
  AdamConfig config;
};

template <typename T>
OptimState<T> make_optim_state(const ParamStore<T>& params, const AdamConfig& config = {});

/// One bias-corrected Adam update with decoupled weight decay. Throws
/// NumericError naming the parameter if a gradient is not finite.
template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, OptimState<T>& state, double lr);

}  // namespace teed

#endif  // TEED_OPTIMIZER_HPP_
