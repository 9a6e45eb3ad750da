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

#include "teed/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

#include "json.hpp"

namespace teed {
namespace {

struct Plane {
  int height;
  int width;
  std::size_t count;
};

Plane planes_of(const Tensor<float>& t, const char* what) {
  if (t.rank() < 2) throw ContractError(std::string(what) + ": rank must be >= 2");
  const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  return {h, w, t.size() / (static_cast<std::size_t>(h) * w)};
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

float bilinear(const float* img, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = std::min(static_cast<int>(y), h - 1), x0 = std::min(static_cast<int>(x), w - 1);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = img[y0 * w + x0] * (1 - fx) + img[y0 * w + x1] * fx;
  const double bottom = img[y1 * w + x0] * (1 - fx) + img[y1 * w + x1] * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

// Greedy-then-augment maximum matching on a bipartite candidate graph whose
// edges arrive sorted by distance.
class Matcher {
 public:
  Matcher(std::size_t left, std::size_t right)
      : adj_(left), match_left_(left, kFree), match_right_(right, kFree), dist_(left) {}

  void add_sorted_edge(std::size_t l, std::size_t r) {
    adj_[l].push_back(r);
    if (match_left_[l] == kFree && match_right_[r] == kFree) {
      match_left_[l] = r;
      match_right_[r] = l;
    }
  }

  void augment() {
    while (bfs()) {
      for (std::size_t u = 0; u < adj_.size(); ++u) {
        if (match_left_[u] == kFree) dfs(u);
      }
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t u = 0; u < match_left_.size(); ++u) {
      if (match_left_[u] != kFree) out.emplace_back(u, match_left_[u]);
    }
    return out;
  }

  std::size_t size() const {
    return static_cast<std::size_t>(
        std::count_if(match_left_.begin(), match_left_.end(), [](auto v) { return v != kFree; }));
  }

 private:
  static constexpr std::size_t kFree = std::numeric_limits<std::size_t>::max();
  static constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();

  bool bfs() {
    std::queue<std::size_t> q;
    for (std::size_t u = 0; u < adj_.size(); ++u) {
      dist_[u] = match_left_[u] == kFree ? 0 : kInf;
      if (dist_[u] == 0 && !adj_[u].empty()) q.push(u);
    }
    bool found = false;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (const std::size_t v : adj_[u]) {
        const std::size_t w = match_right_[v];
        if (w == kFree) {
          found = true;
        } else if (dist_[w] == kInf) {
          dist_[w] = dist_[u] + 1;
          q.push(w);
        }
      }
    }
    return found;
  }

  bool dfs(std::size_t u) {
    for (const std::size_t v : adj_[u]) {
      const std::size_t w = match_right_[v];
      if (w == kFree || (dist_[w] == dist_[u] + 1 && dfs(w))) {
        match_left_[u] = v;
        match_right_[v] = u;
        return true;
      }
    }
    dist_[u] = kInf;
    return false;
  }

  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> match_left_;
  std::vector<std::size_t> match_right_;
  std::vector<std::size_t> dist_;
};

struct Candidate {
  long d2;
  std::size_t pred;
  std::size_t gt;
};

std::vector<Candidate> candidate_pairs(const std::vector<Pixel>& pred, const std::vector<Pixel>& gt,
                                       double radius) {
  std::vector<Candidate> out;
  if (pred.empty() || gt.empty()) return out;
  int min_y = gt[0].y, max_y = gt[0].y, min_x = gt[0].x, max_x = gt[0].x;
  for (const auto& p : gt) {
    min_y = std::min(min_y, p.y), max_y = std::max(max_y, p.y);
    min_x = std::min(min_x, p.x), max_x = std::max(max_x, p.x);
  }
  const int gh = max_y - min_y + 1, gw = max_x - min_x + 1;
  std::vector<std::vector<std::size_t>> grid(static_cast<std::size_t>(gh) * gw);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    grid[static_cast<std::size_t>(gt[i].y - min_y) * gw + (gt[i].x - min_x)].push_back(i);
  }
  const int r = static_cast<int>(std::floor(radius));
  const double r2 = radius * radius + 1e-9;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& p = pred[i];
    for (int y = std::max(p.y - r, min_y); y <= std::min(p.y + r, max_y); ++y) {
      for (int x = std::max(p.x - r, min_x); x <= std::min(p.x + r, max_x); ++x) {
        const long dy = y - p.y, dx = x - p.x;
        const long d2 = dy * dy + dx * dx;
        if (static_cast<double>(d2) > r2) continue;
        for (const std::size_t g : grid[static_cast<std::size_t>(y - min_y) * gw + (x - min_x)]) {
          out.push_back({d2, i, g});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  return out;
}

double match_radius(int h, int w, double tolerance) {
  if (!(tolerance > 0)) throw ContractError("matching tolerance must be > 0");
  return tolerance * std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
}

std::vector<Pixel> binary_pixels(const Tensor<float>& gt, const Plane& plane) {
  std::vector<Pixel> out;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const float v = gt[i];
    if (v != 0.0f && v != 1.0f) throw ContractError("ground truth for matching must be binary");
    if (v == 1.0f) {
      const std::size_t in_plane = i % (static_cast<std::size_t>(plane.height) * plane.width);
      out.push_back({static_cast<int>(in_plane / plane.width), static_cast<int>(in_plane % plane.width)});
    }
  }
  return out;
}

// Candidate pairs for every nonzero prediction, reused across thresholds.
class ImageMatcher {
 public:
  ImageMatcher(const Tensor<float>& pred, const Tensor<float>& gt, double tolerance) {
    const Plane plane = planes_of(pred, "ods_ois");
    if (pred.shape() != gt.shape()) {
      throw ContractError("prediction " + shape_str(pred.shape()) + " vs ground truth " +
                          shape_str(gt.shape()));
    }
    gt_pixels_ = binary_pixels(gt, plane);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] <= 0.0f) continue;
      const std::size_t in_plane = i % (static_cast<std::size_t>(plane.height) * plane.width);
      pred_pixels_.push_back(
          {static_cast<int>(in_plane / plane.width), static_cast<int>(in_plane % plane.width)});
      pred_values_.push_back(pred[i]);
    }
    pairs_ = candidate_pairs(pred_pixels_, gt_pixels_,
                             match_radius(plane.height, plane.width, tolerance));
  }

  MatchCounts counts(double threshold) const {
    MatchCounts c;
    c.gt_positives = gt_pixels_.size();
    for (const float v : pred_values_) c.pred_positives += v >= threshold;
    Matcher matcher(pred_pixels_.size(), gt_pixels_.size());
    for (const auto& pair : pairs_) {
      if (pred_values_[pair.pred] >= threshold) matcher.add_sorted_edge(pair.pred, pair.gt);
    }
    matcher.augment();
    c.true_positives = matcher.size();
    return c;
  }

 private:
  std::vector<Pixel> gt_pixels_;
  std::vector<Pixel> pred_pixels_;
  std::vector<float> pred_values_;
  std::vector<Candidate> pairs_;
};

}  // namespace

Tensor<float> gaussian_smooth(const Tensor<float>& map, double sigma) {
  const Plane plane = planes_of(map, "gaussian_smooth");
  if (!(sigma > 0)) return map;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;

  const int h = plane.height, w = plane.width;
  Tensor<float> out(map.shape());
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (std::size_t p = 0; p < plane.count; ++p) {
    const float* src = map.data() + p * h * w;
    float* dst = out.data() + p * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src[y * w + mirror(x + i, w)];
        tmp[y * w + x] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp[mirror(y + i, h) * w + x];
        dst[y * w + x] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor<float> nms(const Tensor<float>& edge, const NmsConfig& config) {
  const Plane plane = planes_of(edge, "nms");
  const Tensor<float> smooth = gaussian_smooth(edge, config.sigma);
  const int h = plane.height, w = plane.width;
  constexpr float kTie = 1e-6f;
  Tensor<float> out(edge.shape());
  for (std::size_t p = 0; p < plane.count; ++p) {
    const float* e = edge.data() + p * h * w;
    const float* s = smooth.data() + p * h * w;
    float* o = out.data() + p * h * w;
    auto at = [&](int y, int x) { return s[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)]; };
    // Unit ridge normal per nonzero pixel.
    std::vector<float> normal_y(static_cast<std::size_t>(h) * w), normal_x(normal_y.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (e[y * w + x] <= 0.0f) continue;
        const double sxx = at(y, x + 1) - 2.0 * at(y, x) + at(y, x - 1);
        const double syy = at(y + 1, x) - 2.0 * at(y, x) + at(y - 1, x);
        const double sxy =
            (at(y + 1, x + 1) - at(y - 1, x + 1) - at(y + 1, x - 1) + at(y - 1, x - 1)) / 4.0;
        // Principal axis of the larger eigenvalue; swap if the other one dominates.
        double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
        const double mid = 0.5 * (sxx + syy);
        const double rad = std::hypot(0.5 * (sxx - syy), sxy);
        if (std::abs(mid - rad) > std::abs(mid + rad)) theta += M_PI / 2.0;
        normal_x[y * w + x] = static_cast<float>(std::cos(theta));
        normal_y[y * w + x] = static_cast<float>(std::sin(theta));
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float value = e[y * w + x];
        if (value <= 0.0f) continue;
        const double nx = normal_x[y * w + x], ny = normal_y[y * w + x];
        const double step = std::max(std::abs(nx), std::abs(ny));
        const double dx = step * nx, dy = step * ny;

        const float here_s = s[y * w + x];
        bool keep = true;
        for (const double sign : {1.0, -1.0}) {
          const double qy = y + sign * dy, qx = x + sign * dx;
          const float ev = bilinear(e, h, w, qy, qx);
          if (ev > value + kTie) {
            keep = false;
          } else if (ev >= value - kTie && bilinear(s, h, w, qy, qx) > here_s) {
            // A plateau only thins across itself: the tied neighbor must
            // share the ridge direction, else p is a corner of a thin curve.
            const int ry = std::clamp(static_cast<int>(std::lround(qy)), 0, h - 1);
            const int rx = std::clamp(static_cast<int>(std::lround(qx)), 0, w - 1);
            const double along = nx * normal_x[ry * w + rx] + ny * normal_y[ry * w + rx];
            if (std::abs(along) >= 0.5) keep = false;
          }
        }
        if (keep) o[y * w + x] = value;
      }
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> match_edges(const std::vector<Pixel>& pred,
                                                             const std::vector<Pixel>& gt,
                                                             double radius) {
  Matcher matcher(pred.size(), gt.size());
  for (const auto& c : candidate_pairs(pred, gt, radius)) matcher.add_sorted_edge(c.pred, c.gt);
  matcher.augment();
  return matcher.pairs();
}

double MatchCounts::precision() const {
  return pred_positives ? static_cast<double>(true_positives) / pred_positives : 0.0;
}

double MatchCounts::recall() const {
  return gt_positives ? static_cast<double>(true_positives) / gt_positives : 0.0;
}

double MatchCounts::f_measure() const { return teed::f_measure(precision(), recall()); }

double f_measure(double precision, double recall) {
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

MatchCounts f_at_threshold(const Tensor<float>& pred_nms, const Tensor<float>& gt_binary,
                           double threshold, double tolerance) {
  const Plane plane = planes_of(pred_nms, "f_at_threshold");
  if (pred_nms.shape() != gt_binary.shape()) {
    throw ContractError("f_at_threshold: prediction " + shape_str(pred_nms.shape()) +
                        " vs ground truth " + shape_str(gt_binary.shape()));
  }
  const double radius = match_radius(plane.height, plane.width, tolerance);
  std::vector<Pixel> gt = binary_pixels(gt_binary, plane);
  std::vector<Pixel> pred;
  for (std::size_t i = 0; i < pred_nms.size(); ++i) {
    if (pred_nms[i] < threshold) continue;
    const std::size_t in_plane = i % (static_cast<std::size_t>(plane.height) * plane.width);
    pred.push_back({static_cast<int>(in_plane / plane.width), static_cast<int>(in_plane % plane.width)});
  }
  MatchCounts c;
  c.pred_positives = pred.size();
  c.gt_positives = gt.size();
  c.true_positives = match_edges(pred, gt, radius).size();
  return c;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 99; ++i) t.push_back(i / 100.0);
  return t;
}

PixelMetrics pixel_metrics(const Tensor<float>& pred_raw, const Tensor<float>& gt) {
  if (pred_raw.shape() != gt.shape()) {
    throw ContractError("pixel_metrics: " + shape_str(pred_raw.shape()) + " vs " +
                        shape_str(gt.shape()));
  }
  double se = 0, ae = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = static_cast<double>(pred_raw[i]) - gt[i];
    se += d * d;
    ae += std::abs(d);
  }
  PixelMetrics m;
  m.mse = se / static_cast<double>(gt.size());
  m.mae = ae / static_cast<double>(gt.size());
  m.psnr = m.mse < 1e-10 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / m.mse));
  return m;
}

EvalReport ods_ois(const std::vector<Tensor<float>>& preds_nms,
                   const std::vector<Tensor<float>>& gts_binary,
                   const std::vector<double>& thresholds, double tolerance) {
  if (preds_nms.empty()) throw ContractError("ods_ois: empty dataset");
  if (preds_nms.size() != gts_binary.size()) throw ContractError("ods_ois: lists not aligned");
  if (thresholds.empty()) throw ContractError("ods_ois: no thresholds");

  EvalReport report;
  std::vector<std::size_t> tp(thresholds.size(), 0), np(thresholds.size(), 0), ng(thresholds.size(), 0);
  double ois_sum = 0;
  for (std::size_t i = 0; i < preds_nms.size(); ++i) {
    const ImageMatcher matcher(preds_nms[i], gts_binary[i], tolerance);
    ImageScore score;
    score.id = std::to_string(i);
    score.best_f = -1;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      const MatchCounts c = matcher.counts(thresholds[t]);
      tp[t] += c.true_positives;
      np[t] += c.pred_positives;
      ng[t] += c.gt_positives;
      const double f = c.f_measure();
      if (f > score.best_f) {
        score.best_f = f;
        score.best_threshold = thresholds[t];
      }
    }
    ois_sum += score.best_f;
    report.images.push_back(score);
  }
  report.ods = -1;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const double p = np[t] ? static_cast<double>(tp[t]) / np[t] : 0.0;
    const double r = ng[t] ? static_cast<double>(tp[t]) / ng[t] : 0.0;
    const double f = f_measure(p, r);
    if (f > report.ods) {
      report.ods = f;
      report.ods_threshold = thresholds[t];
    }
  }
  report.ois = ois_sum / static_cast<double>(preds_nms.size());
  return report;
}

EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<Tensor<float>>& preds_raw,
                    const std::vector<Tensor<float>>& gts, double tolerance,
                    const NmsConfig& nms_config) {
  if (preds_raw.empty()) throw ContractError("evaluate: empty dataset");
  if (ids.size() != preds_raw.size() || gts.size() != preds_raw.size()) {
    throw ContractError("evaluate: lists not aligned");
  }
  std::vector<Tensor<float>> thinned, binary;
  thinned.reserve(preds_raw.size());
  binary.reserve(gts.size());
  for (std::size_t i = 0; i < preds_raw.size(); ++i) {
    thinned.push_back(nms(preds_raw[i], nms_config));
    Tensor<float> b(gts[i].shape());
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = gts[i][j] > 0.1f ? 1.0f : 0.0f;
    binary.push_back(std::move(b));
  }
  EvalReport report = ods_ois(thinned, binary, default_thresholds(), tolerance);
  for (std::size_t i = 0; i < preds_raw.size(); ++i) {
    report.images[i].id = ids[i];
    report.images[i].pixels = pixel_metrics(preds_raw[i], gts[i]);
    report.mse += report.images[i].pixels.mse;
    report.mae += report.images[i].pixels.mae;
    report.psnr += report.images[i].pixels.psnr;
  }
  const double n = static_cast<double>(preds_raw.size());
  report.mse /= n;
  report.mae /= n;
  report.psnr /= n;
  return report;
}

void write_report(const EvalReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  nlohmann::ordered_json summary;
  summary["ods"] = report.ods;
  summary["ods_threshold"] = report.ods_threshold;
  summary["ois"] = report.ois;
  summary["mse"] = report.mse;
  summary["mae"] = report.mae;
  summary["psnr"] = report.psnr;
  summary["n_images"] = report.images.size();
  std::ofstream json(json_path);
  if (!json) throw DataError("cannot write " + json_path.string());
  json << summary.dump(2) << "\n";

  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  csv << "id,best_threshold,best_f,mse,mae,psnr\n";
  csv.precision(10);
  for (const auto& s : report.images) {
    csv << s.id << "," << s.best_threshold << "," << s.best_f << "," << s.pixels.mse << ","
        << s.pixels.mae << "," << s.pixels.psnr << "\n";
  }
}

}  // namespace teed
