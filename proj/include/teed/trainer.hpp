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

#ifndef TEED_TRAINER_HPP_
#define TEED_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "teed/data.hpp"
#include "teed/losses.hpp"
#include "teed/model.hpp"
#include "teed/optimizer.hpp"

namespace teed {

struct RunConfig {
  std::vector<std::filesystem::path> datasets;  // layout roots or CSV manifests
  std::string split = "train";
  int epochs = 6;
  int batch_size = 8;
  std::uint64_t seed = 0;
  ModelConfig model;
  LossConfig loss;
  AdamConfig adam;
  LrSchedule lr;
  int passes_per_epoch = 1;         // sweeps over the data per epoch
  std::int64_t max_iterations = 0;  // 0 means no cap
  bool augment = true;
  AugmentConfig augmentation;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "runs";
  bool teedup = false;
  bool deterministic = true;
  int threads = 0;                  // 0: TEED_THREADS or hardware count
  std::filesystem::path resume;     // checkpoint written by a previous run

  /// Shape checks only; `check_paths` also requires every referenced path.
  void validate(bool check_paths = true) const;
};

/// Reads a JSON run file. Unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text);

/// Random-access training data.
struct TrainingSet {
  std::size_t size = 0;
  std::function<Sample(std::size_t)> load;
  std::function<std::string(std::size_t)> id;
};

TrainingSet in_memory(std::vector<Sample> samples);
TrainingSet from_manifests(const std::vector<DatasetManifest>& manifests);

struct IterationLog {
  std::int64_t iteration = 0;  // 1-based, global
  int epoch = 0;               // 1-based
  double lr = 0;
  LossTerms loss;              // batch means
};

struct TrainResult {
  ParamStore<float> params;
  std::vector<IterationLog> log;
  std::vector<std::filesystem::path> checkpoints;
};

/// Mini-batch Adam on the mean per-sample loss. Writes one checkpoint per
/// epoch (epoch_NNN.ckpt) and appends to <output_dir>/loss.csv.
TrainResult train(const RunConfig& config, const TrainingSet& data, std::ostream* progress = nullptr);

/// Loads the datasets named in the config.
TrainResult train(const RunConfig& config, std::ostream* progress = nullptr);

/// Checkpoint written after the given epoch (1-based).
std::filesystem::path epoch_checkpoint(const std::filesystem::path& dir, int epoch);

/// Maps at the input's own size. With teedup the network sees the image
/// resized by 1.5 and the maps are resized back.
EdgeMapSet<float> predict_image(const ParamStore<float>& params, const Tensor<float>& image,
                                bool teedup = false);

struct PredictOptions {
  bool teedup = false;
  bool all_maps = false;  // <stem>_y1, _y2, _y3, _dfuse instead of <stem>
  std::filesystem::path output_dir = "predictions";
};

/// Writes <stem>.png (the fused map), or all four maps with all_maps.
/// Unreadable inputs are skipped with a warning on `warnings`;
/// throws DataError if none succeed. Returns the number written.
std::size_t predict_files(const ParamStore<float>& params,
                          const std::vector<std::filesystem::path>& inputs,
                          const PredictOptions& options, std::ostream& warnings);

}  // namespace teed

#endif  // TEED_TRAINER_HPP_
