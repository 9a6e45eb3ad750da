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

#include "teed/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "teed/random.hpp"

namespace fs = std::filesystem;

namespace teed {
namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

cv::Mat read_any(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing file: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot decode image: " + path.string());
  return m;
}

// 8/16-bit to float in [0,1].
cv::Mat to_unit_float(const cv::Mat& m, const fs::path& path) {
  double scale;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw DataError("unsupported bit depth in " + path.string());
  }
  cv::Mat out;
  m.convertTo(out, CV_32F, scale);
  return out;
}

// HWC float Mat -> C×H×W tensor.
Tensor<float> mat_to_tensor(const cv::Mat& m) {
  const int c = m.channels(), h = m.rows, w = m.cols;
  Tensor<float> t({c, h, w});
  std::vector<cv::Mat> planes;
  cv::split(m, planes);
  for (int ch = 0; ch < c; ++ch) {
    cv::Mat plane = planes[ch].isContinuous() ? planes[ch] : planes[ch].clone();
    std::copy(plane.ptr<float>(), plane.ptr<float>() + static_cast<std::size_t>(h) * w,
              t.data() + static_cast<std::size_t>(ch) * h * w);
  }
  return t;
}

cv::Mat tensor_to_mat(const Tensor<float>& t) {
  if (t.rank() != 3) throw ContractError("expected a C×H×W tensor, got " + shape_str(t.shape()));
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  std::vector<cv::Mat> planes;
  for (int ch = 0; ch < c; ++ch) {
    planes.emplace_back(h, w, CV_32F,
                        const_cast<float*>(t.data()) + static_cast<std::size_t>(ch) * h * w);
  }
  cv::Mat m;
  cv::merge(planes, m);
  return m;
}

// Reflect padding that also works when the pad exceeds the image side.
cv::Mat pad_reflect(cv::Mat m, int height, int width) {
  while (m.rows < height || m.cols < width) {
    const int dy = std::min(height - m.rows, m.rows - 1);
    const int dx = std::min(width - m.cols, m.cols - 1);
    const int add_y = std::max(0, dy), add_x = std::max(0, dx);
    if (add_y == 0 && add_x == 0) {
      cv::copyMakeBorder(m, m, 0, std::max(0, height - m.rows), 0, std::max(0, width - m.cols),
                         cv::BORDER_REPLICATE);
      break;
    }
    cv::Mat padded;
    cv::copyMakeBorder(m, padded, add_y / 2, add_y - add_y / 2, add_x / 2, add_x - add_x / 2,
                       cv::BORDER_REFLECT_101);
    m = padded;
  }
  return m;
}

}  // namespace

Tensor<float> load_image(const fs::path& path) {
  cv::Mat raw = read_any(path);
  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw DataError("unsupported channel count in " + path.string());
  }
  return mat_to_tensor(to_unit_float(rgb, path));
}

Tensor<float> load_gt(const fs::path& path) {
  cv::Mat raw = read_any(path);
  cv::Mat gray = raw;
  if (raw.channels() == 3) cv::cvtColor(raw, gray, cv::COLOR_BGR2GRAY);
  if (raw.channels() == 4) cv::cvtColor(raw, gray, cv::COLOR_BGRA2GRAY);
  return mat_to_tensor(to_unit_float(gray, path));
}

Sample load_sample(const SamplePaths& paths, const std::string& source) {
  Sample s;
  s.image = load_image(paths.image);
  s.id = paths.image.stem().string();
  s.source = source;
  if (!paths.gt.empty()) {
    s.gt = load_gt(paths.gt);
    if (s.gt.dim(1) != s.image.dim(1) || s.gt.dim(2) != s.image.dim(2)) {
      throw DataError("size mismatch: " + paths.image.string() + " is " +
                      std::to_string(s.image.dim(1)) + "x" + std::to_string(s.image.dim(2)) +
                      " but " + paths.gt.string() + " is " + std::to_string(s.gt.dim(1)) + "x" +
                      std::to_string(s.gt.dim(2)));
    }
  }
  return s;
}

void save_png(const Tensor<float>& map, const fs::path& path) {
  if (map.rank() != 3 || map.dim(0) != 1) {
    throw ContractError("save_png expects 1×H×W, got " + shape_str(map.shape()));
  }
  const int h = map.dim(1), w = map.dim(2);
  cv::Mat out(h, w, CV_8U);
  for (int y = 0; y < h; ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(map[static_cast<std::size_t>(y) * w + x], 0.0f, 1.0f);
      row[x] = static_cast<unsigned char>(std::lround(255.0f * v));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write " + path.string());
}

Tensor<float> resize_bilinear(const Tensor<float>& image, int height, int width) {
  if (height < 1 || width < 1) throw ContractError("resize target must be positive");
  cv::Mat out;
  cv::resize(tensor_to_mat(image), out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return mat_to_tensor(out);
}

Tensor<float> transform_gt(const Tensor<float>& gt) {
  Tensor<float> out = gt;
  for (auto& v : out.values()) {
    if (v > 0.1f) v = std::min(1.0f, v + 0.2f);
    v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

Tensor<float> hflip(const Tensor<float>& t) {
  if (t.rank() < 2) throw ContractError("hflip needs rank >= 2");
  const int w = t.dim(t.rank() - 1);
  Tensor<float> out(t.shape());
  for (std::size_t row = 0; row < t.size() / w; ++row) {
    const float* src = t.data() + row * w;
    std::reverse_copy(src, src + w, out.data() + row * w);
  }
  return out;
}

void AugmentConfig::validate() const {
  if (flip_probability < 0 || flip_probability > 1) throw ContractError("flip probability outside [0,1]");
  if (max_angle < 0) throw ContractError("max_angle must be >= 0");
  if (crop < 0) throw ContractError("crop must be >= 0");
  if (!(gamma_lo > 0) || gamma_hi < gamma_lo) throw ContractError("invalid gamma range");
}

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config) {
  config.validate();
  if (!sample.has_gt()) throw ContractError("augment needs a training sample with ground truth");
  Rng rng(seed);
  const bool flip = rng.uniform() < config.flip_probability;
  const int turns = config.quarter_turns ? static_cast<int>(rng.below(4)) : 0;
  const double angle = rng.uniform(-config.max_angle, config.max_angle);
  const double crop_u = rng.uniform(), crop_v = rng.uniform();
  const double gamma = rng.uniform(config.gamma_lo, config.gamma_hi);

  cv::Mat img = tensor_to_mat(sample.image).clone();
  cv::Mat gt = tensor_to_mat(sample.gt).clone();
  auto both = [&](auto&& fn) {
    fn(img);
    fn(gt);
  };
  if (flip) both([](cv::Mat& m) { cv::flip(m, m, 1); });
  if (turns > 0) {
    const int code = turns == 1 ? cv::ROTATE_90_COUNTERCLOCKWISE
                                : turns == 2 ? cv::ROTATE_180 : cv::ROTATE_90_CLOCKWISE;
    both([code](cv::Mat& m) { cv::rotate(m, m, code); });
  }
  if (angle != 0.0) {
    const cv::Point2f center((img.cols - 1) / 2.0f, (img.rows - 1) / 2.0f);
    const cv::Mat rot = cv::getRotationMatrix2D(center, angle, 1.0);
    both([&](cv::Mat& m) {
      cv::Mat out;
      cv::warpAffine(m, out, rot, m.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
      m = out;
    });
  }
  if (config.crop > 0) {
    if (img.rows < config.crop || img.cols < config.crop) {
      if (!config.pad_to_crop) {
        throw ContractError("crop " + std::to_string(config.crop) + " larger than image " +
                            std::to_string(img.rows) + "x" + std::to_string(img.cols));
      }
      both([&](cv::Mat& m) { m = pad_reflect(m, std::max(m.rows, config.crop), std::max(m.cols, config.crop)); });
    }
    const int y0 = static_cast<int>(crop_u * (img.rows - config.crop + 1));
    const int x0 = static_cast<int>(crop_v * (img.cols - config.crop + 1));
    const cv::Rect roi(x0, y0, config.crop, config.crop);
    both([&](cv::Mat& m) { m = m(roi).clone(); });
  }

  Sample out;
  out.id = sample.id;
  out.source = sample.source;
  out.image = mat_to_tensor(img);
  for (auto& v : out.image.values()) v = static_cast<float>(std::pow(std::clamp(v, 0.0f, 1.0f), gamma));
  Tensor<float> g = mat_to_tensor(gt);
  for (auto& v : g.values()) v = v > config.gt_threshold ? 1.0f : 0.0f;
  out.gt = transform_gt(g);
  return out;
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of an empty list");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double luma_iqr(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractError("luma_iqr expects 3×H×W, got " + shape_str(image.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  std::vector<double> luma(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    luma[i] = 255.0 * (0.299 * image[i] + 0.587 * image[plane + i] + 0.114 * image[2 * plane + i]);
  }
  std::sort(luma.begin(), luma.end());
  return quantile(luma, 0.75) - quantile(luma, 0.25);
}

std::vector<IqrPick> iqr_select(const std::vector<NamedImage>& images, int k, int max_side) {
  if (k < 1) throw ContractError("iqr_select: k must be >= 1");
  std::vector<IqrPick> eligible;
  for (const auto& im : images) {
    if (im.image.dim(1) > max_side || im.image.dim(2) > max_side) continue;
    eligible.push_back({im.id, luma_iqr(im.image)});
  }
  if (eligible.empty()) throw DataError("iqr_select: no eligible images");
  if (static_cast<std::size_t>(k) > eligible.size()) {
    throw DataError("iqr_select: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(eligible.size()) + " eligible images");
  }
  std::sort(eligible.begin(), eligible.end(), [](const IqrPick& a, const IqrPick& b) {
    return a.iqr != b.iqr ? a.iqr < b.iqr : a.id < b.id;
  });
  const std::size_t n = eligible.size();
  std::vector<IqrPick> picks;
  for (int j = 0; j < k; ++j) {
    const double pos = k == 1 ? (n - 1) / 2.0 : static_cast<double>(j) * (n - 1) / (k - 1);
    picks.push_back(eligible[static_cast<std::size_t>(std::lround(pos))]);
  }
  return picks;
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed) {
  if (n == 0) throw DataError("empty manifest");
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  }
  return batches;
}

DatasetManifest manifest_from_layout(const fs::path& root, const std::string& split, bool require_gt) {
  const fs::path img_dir = root / "imgs" / split;
  const fs::path gt_dir = root / "edge_maps" / split;
  if (!fs::is_directory(img_dir)) throw DataError("missing image directory " + img_dir.string());
  DatasetManifest m;
  m.root = root;
  m.split = split;
  for (const auto& e : fs::recursive_directory_iterator(img_dir)) {
    if (!e.is_regular_file() || !is_image_file(e.path())) continue;
    fs::path gt = gt_dir / fs::relative(e.path(), img_dir);
    gt.replace_extension(".png");
    if (!fs::exists(gt)) {
      if (require_gt) throw DataError("no ground truth for " + e.path().string() + " (expected " + gt.string() + ")");
      gt.clear();
    }
    m.entries.push_back({e.path(), gt});
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const SamplePaths& a, const SamplePaths& b) { return a.image < b.image; });
  if (m.entries.empty()) throw DataError("no images under " + img_dir.string());
  return m;
}

DatasetManifest manifest_from_csv(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open manifest " + csv.string());
  DatasetManifest m;
  m.root = csv.parent_path();
  m.split = csv.stem().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(csv.string() + ":" + std::to_string(line_no) + ": expected image_path,gt_path");
    }
    fs::path image = line.substr(0, comma), gt = line.substr(comma + 1);
    if (line_no == 1 && image == "image_path") continue;
    if (image.is_relative()) image = m.root / image;
    if (!gt.empty() && gt.is_relative()) gt = m.root / gt;
    for (const auto& p : {image, gt}) {
      if (!p.empty() && !fs::exists(p)) {
        throw DataError(csv.string() + ":" + std::to_string(line_no) + ": missing " + p.string());
      }
    }
    m.entries.push_back({image, gt});
  }
  if (m.entries.empty()) throw DataError("manifest " + csv.string() + " lists no samples");
  return m;
}

std::vector<fs::path> list_images(const fs::path& path) {
  std::vector<fs::path> out;
  if (fs::is_regular_file(path)) {
    out.push_back(path);
    return out;
  }
  if (!fs::is_directory(path)) throw DataError("no such file or directory: " + path.string());
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace teed
