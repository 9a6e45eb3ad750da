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

#ifndef TEED_TESTS_TEST_UTIL_HPP_
#define TEED_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "teed/autograd.hpp"
#include "teed/benchmark.hpp"
#include "teed/data.hpp"
#include "teed/kernels.hpp"
#include "teed/model.hpp"
#include "teed/ops.hpp"
#include "teed/random.hpp"
#include "teed/tensor.hpp"

namespace teed::testing {

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using ScalarFn = std::function<Var<double>(GradTape<double>&, const std::vector<Var<double>>&)>;

/// Largest relative error between tape gradients and central differences.
/// `picks` limits the checked entries per input (0 = all).
inline double gradient_error(const std::vector<Tensor<double>>& inputs, const ScalarFn& fn, Rng& rng,
                             std::size_t picks = 0, double step = 1e-5, double floor = 1e-6) {
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(parameter(t));
  GradTape<double> tape;
  auto loss = fn(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> vs;
    for (const auto& t : xs) vs.push_back(constant(t));
    GradTape<double> t(GradTape<double>::Mode::kInference);
    return fn(t, vs)->value[0];
  };

  double worst = 0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].size();
    std::vector<std::size_t> idx;
    if (picks == 0 || picks >= n) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (std::size_t i = 0; i < picks; ++i) idx.push_back(rng.below(n));
    }
    for (const std::size_t i : idx) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + step;
      const double up = eval(probe);
      probe[k][i] = x0 - step;
      const double down = eval(probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2 * step);
      const double analytic = vars[k]->grad.empty() ? 0.0 : vars[k]->grad[i];
      worst = std::max(worst, rel_error(analytic, numeric, floor));
    }
  }
  return worst;
}

/// One differentiable op with the input shapes to probe it at.
struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  ScalarFn op;  // returns the op output, not a scalar
};

inline std::vector<OpCase> op_cases() {
  using V = std::vector<Var<double>>;
  using G = GradTape<double>;
  return {
      {"conv2d s1", {{1, 2, 5, 5}, {3, 2, 3, 3}, {3}},
       [](G& t, const V& v) { return ops::conv2d(t, v[0], v[1], v[2], 1, 1); }},
      {"conv2d s2", {{1, 2, 6, 5}, {2, 2, 3, 3}, {2}},
       [](G& t, const V& v) { return ops::conv2d(t, v[0], v[1], v[2], 2, 1); }},
      {"conv2d 1x1", {{1, 3, 4, 4}, {2, 3, 1, 1}, {2}},
       [](G& t, const V& v) { return ops::conv2d(t, v[0], v[1], v[2], 1, 0); }},
      {"conv_transpose2d", {{1, 2, 3, 3}, {2, 3, 2, 2}, {3}},
       [](G& t, const V& v) { return ops::conv_transpose2d(t, v[0], v[1], v[2], 2); }},
      {"depthwise_conv2d", {{1, 2, 5, 5}, {2, 3, 3, 3}, {6}},
       [](G& t, const V& v) { return ops::depthwise_conv2d(t, v[0], v[1], v[2], 1, 1); }},
      {"maxpool2d", {{1, 2, 6, 6}}, [](G& t, const V& v) { return ops::maxpool2d(t, v[0], 2, 2); }},
      {"smish", {{2, 3, 4}}, [](G& t, const V& v) { return ops::smish(t, v[0]); }},
      {"sigmoid", {{2, 3, 4}}, [](G& t, const V& v) { return ops::sigmoid(t, v[0]); }},
      {"add", {{2, 3}, {2, 3}}, [](G& t, const V& v) { return ops::add(t, v[0], v[1]); }},
      {"scale", {{2, 3}}, [](G& t, const V& v) { return ops::scale(t, v[0], 0.37); }},
      {"channel_sum", {{1, 3, 3, 3}}, [](G& t, const V& v) { return ops::channel_sum(t, v[0]); }},
      {"concat_channels", {{1, 1, 3, 3}, {1, 2, 3, 3}},
       [](G& t, const V& v) { return ops::concat_channels(t, V{v[0], v[1]}); }},
      {"crop", {{1, 2, 5, 6}}, [](G& t, const V& v) { return ops::crop(t, v[0], 3, 4); }},
      {"reshape", {{2, 6}}, [](G& t, const V& v) { return ops::reshape(t, v[0], Shape{3, 4}); }},
      {"mean", {{2, 3}}, [](G& t, const V& v) { return ops::mean(t, v[0]); }},
      {"sum(smish(conv2d))", {{1, 2, 5, 5}, {2, 2, 3, 3}, {2}},
       [](G& t, const V& v) { return ops::sum(t, ops::smish(t, ops::conv2d(t, v[0], v[1], v[2], 1, 1))); }},
  };
}

/// Every entry checked; a fixed random projection makes the scalar depend
/// on every output entry.
inline double op_gradient_error(const OpCase& c, int seed) {
  Rng rng(1000 + seed);
  std::vector<Tensor<double>> inputs;
  for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng));
  GradTape<double> probe(GradTape<double>::Mode::kInference);
  std::vector<Var<double>> cs;
  for (const auto& t : inputs) cs.push_back(constant(t));
  const Tensor<double> weights = random_tensor(c.op(probe, cs)->value.shape(), rng);
  return gradient_error(
      inputs,
      [&](GradTape<double>& tape, const std::vector<Var<double>>& v) { return ops::dot(tape, c.op(tape, v), weights); },
      rng);
}

/// Mean of the fused map on a random 3×32×32 image against central
/// differences at `picks` random entries of every parameter tensor.
inline double full_model_gradient_error(std::uint64_t seed, int picks = 3) {
  const auto params = build<double>(ModelConfig{}, 21 + seed);
  Rng rng(8 + seed);
  const auto image = random_tensor<double>({3, 32, 32}, rng, 0.0, 1.0);
  GradTape<double> tape;
  auto taped = forward(tape, params, image);
  auto loss = ops::mean(tape, taped.maps[3]);
  const auto grads = backward(tape, loss, taped, params);
  auto eval = [&](const ParamStore<double>& p) {
    double s = 0;
    const auto maps = predict_maps(p, image);
    for (double v : maps.dfuse().values()) s += v;
    return s / (32 * 32);
  };
  double worst = 0;
  auto probe = params;
  for (const auto& e : params.entries()) {
    for (int k = 0; k < picks; ++k) {
      const std::size_t i = rng.below(e.tensor.size());
      const double x0 = e.tensor[i];
      probe.at(e.name)[i] = x0 + 1e-5;
      const double up = eval(probe);
      probe.at(e.name)[i] = x0 - 1e-5;
      const double down = eval(probe);
      probe.at(e.name)[i] = x0;
      worst = std::max(worst, rel_error(grads.at(e.name)[i], (up - down) / 2e-5, 1e-6));
    }
  }
  return worst;
}

/// Global minimum of smish: grid scan, then golden-section refinement.
inline double smish_minimum() {
  double best = 0;
  for (double h = -8.0; h <= 0.0; h += 1e-3) best = std::min(best, kernels::smish(h));
  double lo = -8.0, hi = 0.0;
  for (double h = -8.0; h <= 0.0; h += 1e-3) {
    if (kernels::smish(h) == best) {
      lo = h - 1e-3;
      hi = h + 1e-3;
    }
  }
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int i = 0; i < 80; ++i) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (kernels::smish(a) < kernels::smish(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return kernels::smish(0.5 * (lo + hi));
}

/// The fused map is sigmoid(smish(.)), so it never drops below this.
inline double fused_map_floor() { return 1.0 / (1.0 + std::exp(-smish_minimum())); }

/// A unique scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("teed_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Image of a few non-touching anti-aliased rectangles and ellipses with
/// their exact one-pixel inner outlines as ground truth.
inline Sample synthetic_shapes(int size, std::uint64_t seed) {
  Rng rng(seed);
  const int cells = 2;
  const double cell = static_cast<double>(size) / cells;
  struct Shape2 {
    bool ellipse;
    double cx, cy, rx, ry, angle;
    double color[3];
  };
  std::vector<Shape2> shapes;
  double background[3];
  for (auto& b : background) b = rng.uniform(0.0, 0.35);
  for (int gy = 0; gy < cells; ++gy) {
    for (int gx = 0; gx < cells; ++gx) {
      if (rng.uniform() < 0.25) continue;
      Shape2 s;
      s.ellipse = rng.uniform() < 0.5;
      s.cx = (gx + 0.5) * cell + rng.uniform(-0.08, 0.08) * cell;
      s.cy = (gy + 0.5) * cell + rng.uniform(-0.08, 0.08) * cell;
      s.rx = rng.uniform(0.18, 0.32) * cell;
      s.ry = rng.uniform(0.18, 0.32) * cell;
      s.angle = s.ellipse ? rng.uniform(0.0, 3.14159265358979) : 0.0;
      for (auto& c : s.color) c = rng.uniform(0.6, 1.0);
      shapes.push_back(s);
    }
  }
  if (shapes.empty()) shapes.push_back({true, size / 2.0, size / 2.0, cell * 0.3, cell * 0.2, 0.4, {0.9, 0.8, 0.7}});

  auto inside = [](const Shape2& s, double x, double y) {
    const double dx = x - s.cx, dy = y - s.cy;
    const double c = std::cos(s.angle), sn = std::sin(s.angle);
    const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
    if (s.ellipse) return (u * u) / (s.rx * s.rx) + (v * v) / (s.ry * s.ry) <= 1.0;
    return std::abs(u) <= s.rx && std::abs(v) <= s.ry;
  };

  Sample out;
  out.id = "shapes_" + std::to_string(seed);
  out.image = Tensor<float>({3, size, size});
  out.gt = Tensor<float>({1, size, size});
  std::vector<int> label(static_cast<std::size_t>(size) * size, 0);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  constexpr int kSuper = 4;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper, py = y + (sy + 0.5) / kSuper;
          const double* col = background;
          for (const auto& s : shapes) {
            if (inside(s, px, py)) col = s.color;
          }
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      }
      for (int c = 0; c < 3; ++c) out.image[c * plane + y * size + x] = static_cast<float>(acc[c] / (kSuper * kSuper));
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        if (inside(shapes[k], x + 0.5, y + 0.5)) label[y * size + x] = static_cast<int>(k) + 1;
      }
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int l = label[y * size + x];
      if (l == 0) continue;
      const bool border = x == 0 || y == 0 || x == size - 1 || y == size - 1 ||
                          label[y * size + x - 1] != l || label[y * size + x + 1] != l ||
                          label[(y - 1) * size + x] != l || label[(y + 1) * size + x] != l;
      if (border) out.gt[y * size + x] = 1.0f;
    }
  }
  return out;
}

/// Largest one-to-one pairing within `radius`, by exhaustive search.
inline std::size_t brute_force_matching(const std::vector<Pixel>& pred, const std::vector<Pixel>& gt,
                                        double radius) {
  std::vector<bool> used(gt.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == pred.size()) return 0;
    std::size_t top = best(i + 1);
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (used[j]) continue;
      const double dy = pred[i].y - gt[j].y, dx = pred[i].x - gt[j].x;
      if (dy * dy + dx * dx > radius * radius) continue;
      used[j] = true;
      top = std::max(top, 1 + best(i + 1));
      used[j] = false;
    }
    return top;
  };
  return best(0);
}

/// Constant digital ridge three pixels thick: along the major axis of the
/// line through (cy, cx) at angle `theta`, each column (or row) gets the
/// nearest pixel to the line and one on either side.
inline Tensor<float> straight_ridge(int size, double theta, double cy, double cx) {
  Tensor<float> t({1, size, size});
  const bool by_column = std::abs(std::cos(theta)) >= std::abs(std::sin(theta));
  const double slope = by_column ? std::tan(theta) : 1.0 / std::tan(theta);
  for (int a = 0; a < size; ++a) {
    const int center = static_cast<int>(std::lround(by_column ? cy + slope * (a - cx) : cx + slope * (a - cy)));
    for (int b = center - 1; b <= center + 1; ++b) {
      if (b < 0 || b >= size) continue;
      if (by_column) {
        t.at(0, b, a) = 1.0f;
      } else {
        t.at(0, a, b) = 1.0f;
      }
    }
  }
  return t;
}

/// Zhang–Suen thinning of a binary H×W mask (row-major, nonzero = set).
inline std::vector<unsigned char> zhang_suen(std::vector<unsigned char> img, int h, int w) {
  auto at = [&](int y, int x) -> int {
    return (y < 0 || x < 0 || y >= h || x >= w) ? 0 : (img[y * w + x] ? 1 : 0);
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<int> drop;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!at(y, x)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {at(y - 1, x), at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
                            at(y + 1, x), at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            a += (p[k] == 0 && p[(k + 1) % 8] == 1);
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0 && (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0)) continue;
          if (pass == 1 && (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0)) continue;
          drop.push_back(y * w + x);
        }
      }
      for (int i : drop) img[i] = 0;
      changed = changed || !drop.empty();
    }
  }
  return img;
}

/// Compares a thinned ridge with the Zhang–Suen skeleton of the input ridge,
/// away from the image border: each support lies within one pixel of the
/// other, the thinning oracle finds nothing left to remove, and every
/// column (or row, for steep ridges) crossing the line keeps one or two
/// pixels. Returns an empty string on agreement.
inline std::string ridge_disagreement(const Tensor<float>& thinned, const Tensor<float>& ridge, double theta,
                                      double cy, double cx, int margin = 8) {
  const int h = ridge.dim(1), w = ridge.dim(2);
  std::vector<unsigned char> mask(static_cast<std::size_t>(h) * w), support(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = ridge[i] > 0;
    support[i] = thinned[i] > 0;
  }
  const auto skeleton = zhang_suen(mask, h, w);
  const auto rethinned = zhang_suen(support, h, w);
  auto near = [&](const std::vector<unsigned char>& set, int y, int x) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && xx >= 0 && yy < h && xx < w && set[yy * w + xx]) return true;
      }
    return false;
  };
  auto where = [](int y, int x) { return std::to_string(y) + "," + std::to_string(x); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (thinned[i] > ridge[i]) return "value grew at " + where(y, x);
      const bool interior = y >= margin && x >= margin && y < h - margin && x < w - margin;
      if (!interior) continue;
      if (support[i] && !near(skeleton, y, x)) return "stray pixel at " + where(y, x);
      if (skeleton[i] && !near(support, y, x)) return "skeleton gap at " + where(y, x);
      if (support[i] != rethinned[i]) return "still thick at " + where(y, x);
    }
  const bool by_column = std::abs(std::cos(theta)) >= std::abs(std::sin(theta));
  const double slope = by_column ? std::tan(theta) : 1.0 / std::tan(theta);
  const int along = by_column ? w : h, across = by_column ? h : w;
  for (int a = margin; a < along - margin; ++a) {
    const double center = by_column ? cy + slope * (a - cx) : cx + slope * (a - cy);
    if (center < margin || center >= across - margin) continue;
    int count = 0;
    for (int b = static_cast<int>(center) - 4; b <= static_cast<int>(center) + 4; ++b) {
      if (b >= 0 && b < across) count += by_column ? support[b * w + a] : support[a * w + b];
    }
    if (count < 1 || count > 2) {
      return std::string(by_column ? "column " : "row ") + std::to_string(a) + " has " + std::to_string(count);
    }
  }
  return "";
}

}  // namespace teed::testing

#endif  // TEED_TESTS_TEST_UTIL_HPP_
