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

#ifndef TEED_LOSSES_HPP_
#define TEED_LOSSES_HPP_

#include <array>

#include "teed/autograd.hpp"
#include "teed/tensor.hpp"

namespace teed {

/// Ground-truth values strictly between `ignore_lo` and `ignore_hi` are
/// ambiguous and excluded from the cross-entropy. Pixels at or above
/// `ignore_hi` are edges; pixels at or below `ignore_lo` are background.
struct LossConfig {
  double positive_weight = 1.1;  // λ, multiplies #neg/#valid on edge pixels
  double negative_weight = 1.1;  // multiplies #pos/#valid on background pixels
  double ignore_lo = 0.1;
  double ignore_hi = 0.3;
  double boundary_weight = 1.0;  // Dice-style overlap over the edge band
  double texture_weight = 1.0;   // −log(1−p) over non-edge pixels
  int band_radius = 2;           // Chebyshev radius of the confusing band
  double epsilon = 1e-7;         // prediction clamp and Dice floor

  void validate() const;
};

/// Weighted binary cross-entropy, summed over valid pixels. When `grad` is
/// non-null it receives ∂loss/∂pred.
template <typename T>
double wce_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& config,
                Tensor<T>* grad = nullptr);

/// wce_loss + boundary_weight·L_bdr + texture_weight·L_tex.
template <typename T>
double tracing_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& config,
                    Tensor<T>* grad = nullptr);

/// Edge pixels dilated by the band radius (Chebyshev), as a 0/1 mask.
template <typename T>
std::vector<unsigned char> edge_band(const Tensor<T>& gt, const LossConfig& config);

struct LossTerms {
  std::array<double, 3> wce{};
  double tracing = 0;
  double total = 0;
};

/// Σᵢ wce(yᵢ) + tracing(y_dfuse) for maps ordered y1, y2, y3, dfuse.
template <typename T>
LossTerms dloss(const std::array<Tensor<T>, 4>& maps, const Tensor<T>& gt, const LossConfig& config);

namespace ops {

template <typename T>
Var<T> wce_loss(GradTape<T>& tape, const Var<T>& pred, const Tensor<T>& gt, const LossConfig& config);

template <typename T>
Var<T> tracing_loss(GradTape<T>& tape, const Var<T>& pred, const Tensor<T>& gt,
                    const LossConfig& config);

template <typename T>
struct DLoss {
  Var<T> total;
  LossTerms terms;
};

template <typename T>
DLoss<T> dloss(GradTape<T>& tape, const std::array<Var<T>, 4>& maps, const Tensor<T>& gt,
               const LossConfig& config);

}  // namespace ops
}  // namespace teed

#endif  // TEED_LOSSES_HPP_
