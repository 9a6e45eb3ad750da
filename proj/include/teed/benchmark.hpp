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

#ifndef TEED_BENCHMARK_HPP_
#define TEED_BENCHMARK_HPP_

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "teed/tensor.hpp"

namespace teed {

/// Smoothing used to estimate ridge orientation before suppression.
struct NmsConfig {
  double sigma = 1.5;
};

/// Separable Gaussian blur of every H×W plane, mirrored borders.
Tensor<float> gaussian_smooth(const Tensor<float>& map, double sigma);

/// Thins an edge map to one-pixel ridges. The ridge normal n at each pixel is
/// the dominant eigenvector of the Hessian of the smoothed map. The pixel is
/// compared with the bilinearly interpolated map at p ± max(|nx|,|ny|)·n, a
/// spacing that leaves one survivor per row (or column) across a ridge. A
/// neighbor suppresses p if its value is higher; on a tie the smoothed map
/// decides, which moves flat plateaus onto their centerline. Survivors keep
/// their original value, everything else becomes 0.
Tensor<float> nms(const Tensor<float>& edge, const NmsConfig& config = {});

struct Pixel {
  int y;
  int x;
};

/// One-to-one correspondence between predicted and ground-truth edge pixels
/// within `radius`. Starts from greedy nearest-first assignment and grows it
/// with augmenting paths, so the number of pairs is the maximum possible.
std::vector<std::pair<std::size_t, std::size_t>> match_edges(const std::vector<Pixel>& pred,
                                                             const std::vector<Pixel>& gt,
                                                             double radius);

struct MatchCounts {
  std::size_t true_positives = 0;
  std::size_t pred_positives = 0;
  std::size_t gt_positives = 0;

  std::size_t false_positives() const { return pred_positives - true_positives; }
  std::size_t false_negatives() const { return gt_positives - true_positives; }
  double precision() const;
  double recall() const;
  double f_measure() const;
};

/// F-measure helper; 0 when precision + recall is 0.
double f_measure(double precision, double recall);

/// Binarizes `pred_nms` at pred >= threshold and matches it against
/// `gt_binary` (values exactly 0 or 1) within tolerance·diag(H, W) pixels.
MatchCounts f_at_threshold(const Tensor<float>& pred_nms, const Tensor<float>& gt_binary,
                           double threshold, double tolerance = 0.0075);

/// 0.01, 0.02, ..., 0.99.
std::vector<double> default_thresholds();

struct PixelMetrics {
  double mse = 0;
  double mae = 0;
  double psnr = 0;  // dB with peak 1.0, capped at kPsnrCap
};

inline constexpr double kPsnrCap = 99.0;

PixelMetrics pixel_metrics(const Tensor<float>& pred_raw, const Tensor<float>& gt);

struct ImageScore {
  std::string id;
  double best_threshold = 0;
  double best_f = 0;
  PixelMetrics pixels;
};

struct EvalReport {
  double ods = 0;
  double ods_threshold = 0;
  double ois = 0;
  double mse = 0;
  double mae = 0;
  double psnr = 0;
  std::vector<ImageScore> images;
};

/// ODS: best F of dataset-aggregated counts over the threshold sweep.
/// OIS: mean of each image's best F. Fills threshold fields only.
EvalReport ods_ois(const std::vector<Tensor<float>>& preds_nms,
                   const std::vector<Tensor<float>>& gts_binary,
                   const std::vector<double>& thresholds = default_thresholds(),
                   double tolerance = 0.0075);

/// Full protocol: NMS for ODS/OIS, raw maps for MSE/MAE/PSNR. `gts` are
/// binarized at > 0.1 for matching and used as-is for pixel metrics.
EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<Tensor<float>>& preds_raw,
                    const std::vector<Tensor<float>>& gts, double tolerance = 0.0075,
                    const NmsConfig& nms_config = {});

/// Summary JSON {ods, ods_threshold, ois, mse, mae, psnr, n_images} and a
/// per-image CSV (id,best_threshold,best_f,mse,mae,psnr).
void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);

}  // namespace teed

#endif  // TEED_BENCHMARK_HPP_
