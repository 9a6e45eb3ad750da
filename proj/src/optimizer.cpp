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

#include "teed/optimizer.hpp"

#include <cmath>

namespace teed {

double LrSchedule::at(int epoch) const {
  if (epoch < 0) throw ContractError("epoch must be >= 0");
  return epoch < decay_epoch ? initial : decayed;
}

double lr_at_epoch(int epoch) { return LrSchedule{}.at(epoch); }

template <typename T>
OptimState<T> make_optim_state(const ParamStore<T>& params, const AdamConfig& config) {
  OptimState<T> state;
  state.config = config;
  for (const auto& e : params.entries()) {
    state.first_moment.add(e.name, Tensor<T>(e.tensor.shape()));
    state.second_moment.add(e.name, Tensor<T>(e.tensor.shape()));
  }
  return state;
}

template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, OptimState<T>& state, double lr) {
  if (grads.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads.entries()[i];
    if (g.name != params.entries()[i].name || g.tensor.shape() != params.entries()[i].tensor.shape()) {
      throw ContractError("adam_step: gradient " + g.name + " does not match parameter " +
                          params.entries()[i].name);
    }
    if (!g.tensor.all_finite()) throw NumericError("non-finite gradient for parameter " + g.name);
  }

  const AdamConfig& c = state.config;
  const std::int64_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& theta = params.entries()[i].tensor;
    const Tensor<T>& g = grads.entries()[i].tensor;
    Tensor<T>& m = state.first_moment.entries()[i].tensor;
    Tensor<T>& v = state.second_moment.entries()[i].tensor;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + c.epsilon);
      const double decayed = static_cast<double>(theta[j]) * (1.0 - lr * c.weight_decay);
      theta[j] = static_cast<T>(decayed - lr * update);
    }
  }
}

template OptimState<float> make_optim_state(const ParamStore<float>&, const AdamConfig&);
template OptimState<double> make_optim_state(const ParamStore<double>&, const AdamConfig&);
template void adam_step(ParamStore<float>&, const ParamStore<float>&, OptimState<float>&, double);
template void adam_step(ParamStore<double>&, const ParamStore<double>&, OptimState<double>&, double);

}  // namespace teed
