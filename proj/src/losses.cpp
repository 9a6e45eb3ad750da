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

#include "teed/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "teed/ops.hpp"

namespace teed {

void LossConfig::validate() const {
  if (!(0.0 <= ignore_lo && ignore_lo < ignore_hi && ignore_hi <= 1.0)) {
    throw ContractError("loss config needs 0 <= ignore_lo < ignore_hi <= 1");
  }
  if (positive_weight < 0 || negative_weight < 0 || boundary_weight < 0 || texture_weight < 0) {
    throw ContractError("loss weights must be non-negative");
  }
  if (!(epsilon > 0)) throw ContractError("loss epsilon must be positive");
  if (band_radius < 0) throw ContractError("band radius must be >= 0");
}

namespace {

template <typename T>
void check_inputs(const Tensor<T>& pred, const Tensor<T>& gt, const char* what) {
  if (pred.shape() != gt.shape()) {
    throw ContractError(std::string(what) + ": prediction " + shape_str(pred.shape()) +
                        " vs ground truth " + shape_str(gt.shape()));
  }
  for (const T g : gt.values()) {
    if (!(g >= T(0) && g <= T(1))) {
      throw ContractError(std::string(what) + ": ground truth outside [0, 1]");
    }
  }
}

template <typename T>
void prepare_grad(Tensor<T>* grad, const Tensor<T>& pred) {
  if (grad) *grad = Tensor<T>(pred.shape());
}

}  // namespace

template <typename T>
double wce_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& config,
                Tensor<T>* grad) {
  config.validate();
  check_inputs(pred, gt, "wce_loss");
  prepare_grad(grad, pred);
  std::size_t positives = 0, negatives = 0;
  for (const T g : gt.values()) {
    if (g >= config.ignore_hi) {
      ++positives;
    } else if (g <= config.ignore_lo) {
      ++negatives;
    }
  }
  const double valid = static_cast<double>(positives + negatives);
  if (valid == 0) return 0.0;
  const double w_pos = config.positive_weight * static_cast<double>(negatives) / valid;
  const double w_neg = config.negative_weight * static_cast<double>(positives) / valid;
  const double eps = config.epsilon;

  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = gt[i];
    double weight;
    if (g >= config.ignore_hi) {
      weight = w_pos;
    } else if (g <= config.ignore_lo) {
      weight = w_neg;
    } else {
      continue;
    }
    const double raw = pred[i];
    const double p = std::clamp(raw, eps, 1.0 - eps);
    loss -= weight * (g * std::log(p) + (1.0 - g) * std::log(1.0 - p));
    if (grad && raw >= eps && raw <= 1.0 - eps) {
      (*grad)[i] = static_cast<T>(-weight * (g / p - (1.0 - g) / (1.0 - p)));
    }
  }
  return loss;
}

template <typename T>
std::vector<unsigned char> edge_band(const Tensor<T>& gt, const LossConfig& config) {
  const std::size_t r = gt.rank();
  if (r < 2) throw ContractError("edge_band: rank must be >= 2");
  const int h = gt.dim(r - 2), w = gt.dim(r - 1);
  const std::size_t planes = gt.size() / (static_cast<std::size_t>(h) * w);
  const int rad = config.band_radius;
  std::vector<unsigned char> rows(gt.size(), 0), band(gt.size(), 0);
  // Separable square dilation: along rows, then along columns.
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (gt[base + y * w + x] < config.ignore_hi) continue;
        for (int dx = std::max(0, x - rad); dx <= std::min(w - 1, x + rad); ++dx) {
          rows[base + y * w + dx] = 1;
        }
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!rows[base + y * w + x]) continue;
        for (int dy = std::max(0, y - rad); dy <= std::min(h - 1, y + rad); ++dy) {
          band[base + dy * w + x] = 1;
        }
      }
    }
  }
  return band;
}

template <typename T>
double tracing_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig& config,
                    Tensor<T>* grad) {
  double loss = wce_loss(pred, gt, config, grad);
  const auto band = edge_band(gt, config);
  const double eps = config.epsilon;

  double overlap = 0, pred_mass = 0, gt_mass = 0;
  std::size_t non_edge = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (band[i]) {
      const double p = std::clamp(static_cast<double>(pred[i]), eps, 1.0 - eps);
      overlap += p * gt[i];
      pred_mass += p;
      gt_mass += gt[i];
    } else {
      ++non_edge;
    }
  }
  const double numer = 2.0 * overlap + eps;
  const double denom = pred_mass + gt_mass + eps;
  const double boundary = std::log(denom) - std::log(numer);

  double texture = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (band[i]) continue;
    texture -= std::log(1.0 - std::clamp(static_cast<double>(pred[i]), eps, 1.0 - eps));
  }
  if (non_edge > 0) texture /= static_cast<double>(non_edge);
  loss += config.boundary_weight * boundary + config.texture_weight * texture;

  if (grad) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double raw = pred[i];
      if (raw < eps || raw > 1.0 - eps) continue;
      double d;
      if (band[i]) {
        d = config.boundary_weight * (1.0 / denom - 2.0 * gt[i] / numer);
      } else {
        d = config.texture_weight / (static_cast<double>(non_edge) * (1.0 - raw));
      }
      (*grad)[i] += static_cast<T>(d);
    }
  }
  return loss;
}

template <typename T>
LossTerms dloss(const std::array<Tensor<T>, 4>& maps, const Tensor<T>& gt, const LossConfig& config) {
  LossTerms terms;
  for (int i = 0; i < 3; ++i) terms.wce[i] = wce_loss(maps[i], gt, config);
  terms.tracing = tracing_loss(maps[3], gt, config);
  terms.total = terms.wce[0] + terms.wce[1] + terms.wce[2] + terms.tracing;
  return terms;
}

namespace ops {
namespace {

template <typename T, typename LossFn>
Var<T> scalar_loss(GradTape<T>& tape, const Var<T>& pred, const Tensor<T>& gt,
                   const LossConfig& config, LossFn fn, const char* what) {
  const bool want_grad = tape.recording() && pred->requires_grad;
  Tensor<T> grad;
  const double value = fn(pred->value, gt, config, want_grad ? &grad : nullptr);
  if (!std::isfinite(value)) throw NumericError(std::string(what) + " is not finite");
  auto out = constant(Tensor<T>({1}, std::vector<T>{static_cast<T>(value)}));
  out->requires_grad = pred->requires_grad;
  if (want_grad) {
    tape.record([pred, out, grad = std::move(grad)] {
      if (out->grad.empty()) return;
      Tensor<T> g = grad;
      const T upstream = out->grad[0];
      for (auto& v : g.values()) v *= upstream;
      pred->accumulate(g);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> wce_loss(GradTape<T>& tape, const Var<T>& pred, const Tensor<T>& gt, const LossConfig& config) {
  return scalar_loss(tape, pred, gt, config, &teed::wce_loss<T>, "wce_loss");
}

template <typename T>
Var<T> tracing_loss(GradTape<T>& tape, const Var<T>& pred, const Tensor<T>& gt,
                    const LossConfig& config) {
  return scalar_loss(tape, pred, gt, config, &teed::tracing_loss<T>, "tracing_loss");
}

template <typename T>
DLoss<T> dloss(GradTape<T>& tape, const std::array<Var<T>, 4>& maps, const Tensor<T>& gt,
               const LossConfig& config) {
  DLoss<T> out;
  Var<T> total;
  for (int i = 0; i < 3; ++i) {
    auto term = wce_loss(tape, maps[i], gt, config);
    out.terms.wce[i] = term->value[0];
    total = total ? add(tape, total, term) : term;
  }
  auto trcg = tracing_loss(tape, maps[3], gt, config);
  out.terms.tracing = trcg->value[0];
  out.total = add(tape, total, trcg);
  out.terms.total = out.total->value[0];
  return out;
}

}  // namespace ops

#define TEED_INSTANTIATE_LOSSES(T)                                                              \
  template double wce_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&, Tensor<T>*);  \
  template double tracing_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&,           \
                               Tensor<T>*);                                                     \
  template std::vector<unsigned char> edge_band(const Tensor<T>&, const LossConfig&);           \
  template LossTerms dloss(const std::array<Tensor<T>, 4>&, const Tensor<T>&, const LossConfig&); \
  template Var<T> ops::wce_loss(GradTape<T>&, const Var<T>&, const Tensor<T>&,                  \
                                const LossConfig&);                                             \
  template Var<T> ops::tracing_loss(GradTape<T>&, const Var<T>&, const Tensor<T>&,              \
                                    const LossConfig&);                                         \
  template ops::DLoss<T> ops::dloss(GradTape<T>&, const std::array<Var<T>, 4>&, const Tensor<T>&, \
                                    const LossConfig&);

TEED_INSTANTIATE_LOSSES(float)
TEED_INSTANTIATE_LOSSES(double)

}  // namespace teed
