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

#ifndef TEED_DATA_HPP_
#define TEED_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "teed/tensor.hpp"

namespace teed {

/// One image with optional ground truth. image is 3×H×W, gt is 1×H×W (or
/// empty for inference-only samples); both in [0,1].
struct Sample {
  Tensor<float> image;
  Tensor<float> gt;
  std::string id;
  std::string source;

  bool has_gt() const noexcept { return !gt.empty(); }
};

struct SamplePaths {
  std::filesystem::path image;
  std::filesystem::path gt;  // empty when there is no ground truth
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<SamplePaths> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
};

/// 8- or 16-bit image as 3×H×W RGB in [0,1]; grayscale is replicated and
/// alpha dropped.
Tensor<float> load_image(const std::filesystem::path& path);

/// Single-channel map as 1×H×W in [0,1]; color files are converted to gray.
Tensor<float> load_gt(const std::filesystem::path& path);

/// Loads both files; id is the image file stem.
Sample load_sample(const SamplePaths& paths, const std::string& source = "");

/// Writes a 1×H×W map as 8-bit grayscale PNG with value round(255·v).
void save_png(const Tensor<float>& map, const std::filesystem::path& path);

/// Bilinear resize of every plane of a C×H×W tensor.
Tensor<float> resize_bilinear(const Tensor<float>& image, int height, int width);

/// g + 0.2 where g > 0.1, then clipped to [0, 1].
Tensor<float> transform_gt(const Tensor<float>& gt);

/// Mirror left-right.
Tensor<float> hflip(const Tensor<float>& t);

struct AugmentConfig {
  double flip_probability = 0.5;
  bool quarter_turns = true;     // rotate by a random multiple of 90°
  double max_angle = 15.0;       // extra rotation in [−max_angle, max_angle], reflective fill
  int crop = 352;                // square crop side; 0 keeps the full frame
  bool pad_to_crop = true;       // reflect-pad smaller images up to the crop size
  double gamma_lo = 0.7;
  double gamma_hi = 1.3;
  double gt_threshold = 0.1;     // re-binarization after interpolation

  void validate() const;
};

/// Same geometric transform on image and gt; gamma on the image only. The
/// gt comes out binarized and passed through transform_gt.
Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config = {});

/// Q3 − Q1 (linear interpolation) of 0.299R + 0.587G + 0.114B on a 0–255 scale.
double luma_iqr(const Tensor<float>& image);

/// Linear-interpolation quantile of an ascending list.
double quantile(const std::vector<double>& sorted, double q);

struct NamedImage {
  std::string id;
  Tensor<float> image;
};

struct IqrPick {
  std::string id;
  double iqr;
};

/// Drops images with a side above max_side, sorts by IQR (ties by id) and
/// takes k evenly spaced entries, index round(j·(n−1)/(k−1)).
std::vector<IqrPick> iqr_select(const std::vector<NamedImage>& images, int k, int max_side = 720);

/// Seeded shuffle of 0..n−1 cut into consecutive batches; the last one may
/// be short.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed);

/// <root>/imgs/<split>/**.{png,jpg,jpeg} paired with the same relative path
/// under <root>/edge_maps/<split>/ with a .png extension.
DatasetManifest manifest_from_layout(const std::filesystem::path& root, const std::string& split,
                                     bool require_gt = true);

/// Two columns, image_path,gt_path; relative paths resolve against the CSV's
/// directory. A header row naming the columns is skipped.
DatasetManifest manifest_from_csv(const std::filesystem::path& csv);

/// Image files directly under `dir` (or the file itself), sorted.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& path);

}  // namespace teed

#endif  // TEED_DATA_HPP_
