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

#include "teed/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "teed/checkpoint.hpp"
#include "teed/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace teed {
namespace {

constexpr std::uint64_t kAugmentStream = 0xA5A5'0000'0000'0001ull;
const std::string kFirstMoment = "adam.m.";
const std::string kSecondMoment = "adam.v.";

// Activations are large and short-lived; keep freed pages in the heap
// instead of returning them to the kernel after every sample.
void keep_heap_pages() {
#if defined(__GLIBC__) && defined(M_MMAP_THRESHOLD)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

int worker_count(const RunConfig& config) {
  if (config.deterministic) return 1;
  if (config.threads > 0) return config.threads;
  if (const char* env = std::getenv("TEED_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template <typename Fn>
void run_workers(int workers, std::size_t jobs, Fn&& fn) {
  workers = static_cast<int>(std::min<std::size_t>(std::max(1, workers), jobs));
  if (workers <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) fn(j);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t j = w; j < jobs; j += workers) {
        try {
          fn(j);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct SampleOutcome {
  ParamStore<float> grads;
  LossTerms terms;
  std::string id;
  std::string numeric_error;
};

SampleOutcome run_sample(const ParamStore<float>& params, const Sample& sample, const LossConfig& loss) {
  SampleOutcome out;
  out.id = sample.id;
  try {
    GradTape<float> tape;
    auto taped = forward(tape, params, sample.image);
    auto dl = ops::dloss(tape, taped.maps, sample.gt, loss);
    out.terms = dl.terms;
    if (!std::isfinite(dl.terms.total)) {
      out.numeric_error = "non-finite loss";
      return out;
    }
    out.grads = backward(tape, dl.total, taped, params);
  } catch (const NumericError& e) {
    out.numeric_error = e.what();
  }
  return out;
}

void write_state(const fs::path& path, const ParamStore<float>& params, const OptimState<float>& state,
                 const RunConfig& config, int epochs_done, std::int64_t iteration, bool partial) {
  Archive<float> archive;
  for (const auto& e : params.entries()) archive.tensors.add(e.name, e.tensor);
  for (const auto& e : state.first_moment.entries()) archive.tensors.add(kFirstMoment + e.name, e.tensor);
  for (const auto& e : state.second_moment.entries()) archive.tensors.add(kSecondMoment + e.name, e.tensor);
  archive.meta["epoch"] = std::to_string(epochs_done);
  archive.meta["iteration"] = std::to_string(iteration);
  archive.meta["step"] = std::to_string(state.step);
  archive.meta["seed"] = std::to_string(config.seed);
  archive.meta["partial"] = partial ? "1" : "0";
  write_archive(path, archive);
}

std::string meta_or_throw(const Archive<float>& a, const std::string& key, const fs::path& path) {
  auto it = a.meta.find(key);
  if (it == a.meta.end()) throw CheckpointError(path.string() + ": no '" + key + "' entry, cannot resume");
  return it->second;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

void RunConfig::validate(bool check_paths) const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (passes_per_epoch < 1) throw ContractError("passes_per_epoch must be >= 1");
  if (max_iterations < 0) throw ContractError("max_iterations must be >= 0");
  if (threads < 0) throw ContractError("threads must be >= 0");
  if (!(lr.initial > 0) || !(lr.decayed > 0) || lr.decay_epoch < 0) {
    throw ContractError("learning rates must be > 0 and decay_epoch >= 0");
  }
  model.validate();
  loss.validate();
  augmentation.validate();
  if (!check_paths) return;
  if (datasets.empty()) throw ContractError("no datasets given");
  for (const auto& d : datasets) {
    if (!fs::exists(d)) throw DataError("dataset path does not exist: " + d.string());
  }
  if (!resume.empty() && !fs::exists(resume)) throw DataError("resume checkpoint not found: " + resume.string());
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("run config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ContractError("run config must be a JSON object");
  RunConfig c;
  auto reject_unknown = [](const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
        throw ContractError("unknown key '" + it.key() + "' in " + where);
      }
    }
  };
  try {
    reject_unknown(j, {"datasets", "split", "epochs", "batch_size", "seed", "loss", "optimizer",
                       "passes_per_epoch", "max_iterations", "augment", "augmentation",
                       "checkpoint_dir", "output_dir", "teedup", "deterministic", "threads", "resume"},
                   "run config");
    if (j.contains("datasets")) {
      const json& d = j["datasets"];
      if (d.is_string()) {
        c.datasets.emplace_back(d.get<std::string>());
      } else {
        for (const auto& p : d) c.datasets.emplace_back(p.get<std::string>());
      }
    }
    c.split = j.value("split", c.split);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.passes_per_epoch = j.value("passes_per_epoch", c.passes_per_epoch);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.augment = j.value("augment", c.augment);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir.string());
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.teedup = j.value("teedup", c.teedup);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.threads = j.value("threads", c.threads);
    c.resume = j.value("resume", c.resume.string());
    if (j.contains("loss")) {
      const json& l = j["loss"];
      reject_unknown(l, {"positive_weight", "negative_weight", "ignore_lo", "ignore_hi", "boundary_weight",
                         "texture_weight", "band_radius", "epsilon"},
                     "loss");
      c.loss.positive_weight = l.value("positive_weight", c.loss.positive_weight);
      c.loss.negative_weight = l.value("negative_weight", c.loss.negative_weight);
      c.loss.ignore_lo = l.value("ignore_lo", c.loss.ignore_lo);
      c.loss.ignore_hi = l.value("ignore_hi", c.loss.ignore_hi);
      c.loss.boundary_weight = l.value("boundary_weight", c.loss.boundary_weight);
      c.loss.texture_weight = l.value("texture_weight", c.loss.texture_weight);
      c.loss.band_radius = l.value("band_radius", c.loss.band_radius);
      c.loss.epsilon = l.value("epsilon", c.loss.epsilon);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      reject_unknown(o, {"lr", "lr_decayed", "decay_epoch", "beta1", "beta2", "epsilon", "weight_decay"},
                     "optimizer");
      c.lr.initial = o.value("lr", c.lr.initial);
      c.lr.decayed = o.value("lr_decayed", c.lr.decayed);
      c.lr.decay_epoch = o.value("decay_epoch", c.lr.decay_epoch);
      c.adam.beta1 = o.value("beta1", c.adam.beta1);
      c.adam.beta2 = o.value("beta2", c.adam.beta2);
      c.adam.epsilon = o.value("epsilon", c.adam.epsilon);
      c.adam.weight_decay = o.value("weight_decay", c.adam.weight_decay);
    }
    if (j.contains("augmentation")) {
      const json& a = j["augmentation"];
      reject_unknown(a, {"flip_probability", "quarter_turns", "max_angle", "crop", "pad_to_crop", "gamma_lo",
                         "gamma_hi", "gt_threshold"},
                     "augmentation");
      auto& g = c.augmentation;
      g.flip_probability = a.value("flip_probability", g.flip_probability);
      g.quarter_turns = a.value("quarter_turns", g.quarter_turns);
      g.max_angle = a.value("max_angle", g.max_angle);
      g.crop = a.value("crop", g.crop);
      g.pad_to_crop = a.value("pad_to_crop", g.pad_to_crop);
      g.gamma_lo = a.value("gamma_lo", g.gamma_lo);
      g.gamma_hi = a.value("gamma_hi", g.gamma_hi);
      g.gt_threshold = a.value("gt_threshold", g.gt_threshold);
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("run config: ") + e.what());
  }
  c.validate(false);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read run config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

TrainingSet in_memory(std::vector<Sample> samples) {
  auto shared = std::make_shared<std::vector<Sample>>(std::move(samples));
  TrainingSet set;
  set.size = shared->size();
  set.load = [shared](std::size_t i) { return shared->at(i); };
  set.id = [shared](std::size_t i) { return shared->at(i).id; };
  return set;
}

TrainingSet from_manifests(const std::vector<DatasetManifest>& manifests) {
  auto entries = std::make_shared<std::vector<std::pair<SamplePaths, std::string>>>();
  for (const auto& m : manifests) {
    for (const auto& e : m.entries) {
      if (e.gt.empty()) throw DataError("training sample without ground truth: " + e.image.string());
      entries->emplace_back(e, m.root.filename().string());
    }
  }
  TrainingSet set;
  set.size = entries->size();
  set.load = [entries](std::size_t i) { return load_sample((*entries)[i].first, (*entries)[i].second); };
  set.id = [entries](std::size_t i) { return (*entries)[i].first.image.stem().string(); };
  return set;
}

fs::path epoch_checkpoint(const fs::path& dir, int epoch) {
  std::ostringstream name;
  name << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
  return dir / name.str();
}

TrainResult train(const RunConfig& config, const TrainingSet& data, std::ostream* progress) {
  config.validate(false);
  if (data.size == 0) throw DataError("training set is empty");
  keep_heap_pages();

  TrainResult result;
  ParamStore<float> params = build<float>(config.model, config.seed);
  OptimState<float> state = make_optim_state(params, config.adam);
  int start_epoch = 0;
  std::int64_t iteration = 0;
  if (!config.resume.empty()) {
    const Archive<float> a = read_archive<float>(config.resume);
    if (meta_or_throw(a, "partial", config.resume) != "0") {
      throw CheckpointError(config.resume.string() + " was written mid-epoch and cannot be resumed");
    }
    params = extract_params(a.tensors, config.model);
    for (auto& e : state.first_moment.entries()) {
      if (!a.tensors.contains(kFirstMoment + e.name)) {
        throw MissingParameterError(config.resume.string() + ": no optimizer state for " + e.name);
      }
      e.tensor = a.tensors.at(kFirstMoment + e.name);
    }
    for (auto& e : state.second_moment.entries()) {
      if (!a.tensors.contains(kSecondMoment + e.name)) {
        throw MissingParameterError(config.resume.string() + ": no optimizer state for " + e.name);
      }
      e.tensor = a.tensors.at(kSecondMoment + e.name);
    }
    start_epoch = std::stoi(meta_or_throw(a, "epoch", config.resume));
    iteration = std::stoll(meta_or_throw(a, "iteration", config.resume));
    state.step = std::stoll(meta_or_throw(a, "step", config.resume));
  }

  fs::create_directories(config.checkpoint_dir);
  fs::create_directories(config.output_dir);
  const fs::path log_path = config.output_dir / "loss.csv";
  const bool append = !config.resume.empty() && fs::exists(log_path);
  std::ofstream log_csv(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log_csv) throw DataError("cannot write " + log_path.string());
  if (!append) log_csv << "iter,epoch,lr,dloss,wce1,wce2,wce3,trcg\n";

  const int workers = worker_count(config);
  const std::size_t n = data.size;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  bool stopped = false;
  for (int epoch = start_epoch; epoch < config.epochs && !stopped; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = config.lr.at(epoch);
    double epoch_loss = 0;
    int epoch_iterations = 0;
    for (int pass = 0; pass < config.passes_per_epoch && !stopped; ++pass) {
      const std::uint64_t sweep = static_cast<std::uint64_t>(epoch) * config.passes_per_epoch + pass;
      const auto plan = batch_plan(n, bs, mix_seed(config.seed, sweep));
      for (std::size_t b = 0; b < plan.size(); ++b) {
        if (config.max_iterations > 0 && iteration >= config.max_iterations) {
          stopped = true;
          break;
        }
        const auto& batch = plan[b];
        std::vector<SampleOutcome> outcomes(batch.size());
        run_workers(workers, batch.size(), [&](std::size_t slot) {
          Sample s = data.load(batch[slot]);
          if (!s.has_gt()) throw DataError("training sample " + s.id + " has no ground truth");
          if (config.augment) {
            const std::uint64_t draw = (sweep * n + b * bs + slot);
            s = augment(s, mix_seed(config.seed ^ kAugmentStream, draw), config.augmentation);
          } else {
            s.gt = transform_gt(s.gt);
          }
          outcomes[slot] = run_sample(params, s, config.loss);
        });

        std::vector<std::string> bad;
        for (const auto& o : outcomes) {
          if (!o.numeric_error.empty()) bad.push_back(o.id + " (" + o.numeric_error + ")");
        }
        if (!bad.empty()) {
          std::string ids;
          for (const auto& b2 : bad) ids += (ids.empty() ? "" : ", ") + b2;
          throw NumericError("iteration " + std::to_string(iteration + 1) + ": " + ids);
        }

        // Mean over the batch, reduced in slot order.
        ParamStore<float> grads = std::move(outcomes[0].grads);
        IterationLog row;
        row.loss = outcomes[0].terms;
        for (std::size_t s = 1; s < outcomes.size(); ++s) {
          for (std::size_t p = 0; p < grads.size(); ++p) {
            Tensor<float>& dst = grads.entries()[p].tensor;
            const Tensor<float>& src = outcomes[s].grads.entries()[p].tensor;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
          for (int k = 0; k < 3; ++k) row.loss.wce[k] += outcomes[s].terms.wce[k];
          row.loss.tracing += outcomes[s].terms.tracing;
          row.loss.total += outcomes[s].terms.total;
        }
        const float inv = 1.0f / static_cast<float>(outcomes.size());
        for (auto& e : grads.entries()) {
          for (auto& v : e.tensor.values()) v *= inv;
        }
        const double dn = static_cast<double>(outcomes.size());
        for (auto& w : row.loss.wce) w /= dn;
        row.loss.tracing /= dn;
        row.loss.total /= dn;

        adam_step(params, grads, state, lr);
        ++iteration;
        row.iteration = iteration;
        row.epoch = epoch + 1;
        row.lr = lr;
        log_csv << row.iteration << "," << row.epoch << "," << format_double(lr) << ","
                << format_double(row.loss.total) << "," << format_double(row.loss.wce[0]) << ","
                << format_double(row.loss.wce[1]) << "," << format_double(row.loss.wce[2]) << ","
                << format_double(row.loss.tracing) << "\n";
        log_csv.flush();
        result.log.push_back(row);
        epoch_loss += row.loss.total;
        ++epoch_iterations;
      }
    }
    const fs::path ckpt = epoch_checkpoint(config.checkpoint_dir, epoch + 1);
    write_state(ckpt, params, state, config, epoch + 1, iteration, stopped);
    result.checkpoints.push_back(ckpt);
    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      *progress << "epoch " << epoch + 1 << "/" << config.epochs << "  iters " << epoch_iterations
                << "  mean dloss " << format_double(epoch_iterations ? epoch_loss / epoch_iterations : 0.0)
                << "  lr " << lr << "  " << std::fixed << std::setprecision(1) << secs << "s"
                << std::defaultfloat << std::setprecision(6) << std::endl;
    }
  }
  result.params = std::move(params);
  return result;
}

TrainResult train(const RunConfig& config, std::ostream* progress) {
  config.validate(true);
  std::vector<DatasetManifest> manifests;
  for (const auto& d : config.datasets) {
    manifests.push_back(fs::is_directory(d) ? manifest_from_layout(d, config.split) : manifest_from_csv(d));
  }
  return train(config, from_manifests(manifests), progress);
}

EdgeMapSet<float> predict_image(const ParamStore<float>& params, const Tensor<float>& image, bool teedup) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractError("predict expects a 3×H×W image, got " + shape_str(image.shape()));
  }
  if (!teedup) return predict_maps(params, image);
  const int h = image.dim(1), w = image.dim(2);
  const int uh = static_cast<int>(std::lround(1.5 * h)), uw = static_cast<int>(std::lround(1.5 * w));
  EdgeMapSet<float> up = predict_maps(params, resize_bilinear(image, uh, uw));
  EdgeMapSet<float> out;
  for (std::size_t i = 0; i < up.maps.size(); ++i) {
    out.maps[i] = resize_bilinear(up.maps[i], h, w);
    for (auto& v : out.maps[i].values()) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

std::size_t predict_files(const ParamStore<float>& params, const std::vector<fs::path>& inputs,
                          const PredictOptions& options, std::ostream& warnings) {
  keep_heap_pages();
  fs::create_directories(options.output_dir);
  std::size_t written = 0;
  for (const auto& path : inputs) {
    Tensor<float> image;
    try {
      image = load_image(path);
    } catch (const DataError& e) {
      warnings << "warning: skipping " << path.string() << ": " << e.what() << "\n";
      continue;
    }
    const EdgeMapSet<float> maps = predict_image(params, image, options.teedup);
    const std::string stem = path.stem().string();
    if (options.all_maps) {
      for (std::size_t i = 0; i < maps.maps.size(); ++i) {
        save_png(maps.maps[i], options.output_dir / (stem + "_" + std::string(kMapNames[i]) + ".png"));
      }
    } else {
      save_png(maps.dfuse(), options.output_dir / (stem + ".png"));
    }
    ++written;
  }
  if (written == 0) throw DataError("no input image could be read");
  return written;
}

}  // namespace teed
