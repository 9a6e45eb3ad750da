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

#include "teed/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "teed/benchmark.hpp"
#include "teed/checkpoint.hpp"
#include "teed/data.hpp"
#include "teed/trainer.hpp"

namespace fs = std::filesystem;

namespace teed {
namespace {

struct Commands {
  CLI::App app{"Tiny edge detector: train, predict, evaluate, curate, inspect", "teed"};

  // train
  std::string config_path;
  bool deterministic = false;
  // predict
  std::string ckpt;
  std::string input;
  std::string out_dir;
  bool teedup = false;
  bool all_maps = false;
  // eval
  std::string pred_dir;
  std::string gt_dir;
  std::string report;
  double tol = 0.0075;
  // curate
  std::string images_dir;
  int k = 30;
  int max_side = 720;
  std::string manifest_out;
  // inspect
  std::string inspect_ckpt;
  bool arch = false;

  CLI::App* train = nullptr;
  CLI::App* predict = nullptr;
  CLI::App* eval = nullptr;
  CLI::App* curate = nullptr;
  CLI::App* inspect = nullptr;

  Commands() {
    app.require_subcommand(1);
    train = app.add_subcommand("train", "Train from a JSON run file");
    train->add_option("--config", config_path, "Run configuration")->required();
    train->add_flag("--deterministic", deterministic, "Single worker, fixed order");

    predict = app.add_subcommand("predict", "Write edge maps for images");
    predict->add_option("--ckpt", ckpt, "Checkpoint")->required();
    predict->add_option("--input", input, "Image file or directory")->required();
    predict->add_option("--out", out_dir, "Output directory")->required();
    predict->add_flag("--teedup", teedup, "Run the network on a 1.5x upscaled input");
    predict->add_flag("--all-maps", all_maps, "Write y1, y2, y3 and dfuse");

    eval = app.add_subcommand("eval", "ODS/OIS and pixel metrics");
    eval->add_option("--pred", pred_dir, "Predicted maps")->required();
    eval->add_option("--gt", gt_dir, "Ground-truth maps")->required();
    eval->add_option("--out", report, "Report JSON (a per-image CSV is written next to it)")->required();
    eval->add_option("--tol", tol, "Match radius as a fraction of the image diagonal")->capture_default_str();

    curate = app.add_subcommand("curate", "Select images evenly over the IQR ranking");
    curate->add_option("--images", images_dir, "Image directory")->required();
    curate->add_option("--k", k, "Number of images")->capture_default_str();
    curate->add_option("--max-side", max_side, "Skip images with a larger side")->capture_default_str();
    curate->add_option("--out", manifest_out, "Output CSV")->required();

    inspect = app.add_subcommand("inspect", "Layer table and parameter count");
    auto* c = inspect->add_option("--ckpt", inspect_ckpt, "Checkpoint");
    auto* a = inspect->add_flag("--arch", arch, "Default architecture, no checkpoint");
    c->excludes(a);
    a->excludes(c);
  }
};

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& p : list_images(dir)) out[p.stem().string()] = p;
  return out;
}

int cmd_train(const Commands& c, std::ostream& out) {
  RunConfig config = load_run_config(c.config_path);
  if (c.deterministic) config.deterministic = true;
  const TrainResult result = train(config, &out);
  out << "trained " << result.log.size() << " iterations; last checkpoint "
      << (result.checkpoints.empty() ? std::string("none") : result.checkpoints.back().string()) << "\n";
  return kExitOk;
}

int cmd_predict(const Commands& c, std::ostream& out, std::ostream& err) {
  const ParamStore<float> params = load_checkpoint<float>(c.ckpt);
  const auto inputs = list_images(c.input);
  if (inputs.empty()) throw DataError("no images in " + c.input);
  PredictOptions options;
  options.teedup = c.teedup;
  options.all_maps = c.all_maps;
  options.output_dir = c.out_dir;
  const std::size_t n = predict_files(params, inputs, options, err);
  out << "wrote maps for " << n << " of " << inputs.size() << " images to " << c.out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const Commands& c, std::ostream& out) {
  if (!(c.tol > 0)) throw ContractError("--tol must be > 0");
  const auto preds = images_by_stem(c.pred_dir);
  const auto gts = images_by_stem(c.gt_dir);
  if (preds.empty() || gts.empty()) throw DataError("empty prediction or ground-truth directory");
  std::vector<std::string> missing;
  for (const auto& [stem, _] : gts) {
    if (!preds.count(stem)) missing.push_back("no prediction for " + stem);
  }
  for (const auto& [stem, _] : preds) {
    if (!gts.count(stem)) missing.push_back("no ground truth for " + stem);
  }
  if (!missing.empty()) {
    std::string msg = "unpaired files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DataError(msg);
  }
  std::vector<std::string> ids;
  std::vector<Tensor<float>> pred_maps, gt_maps;
  for (const auto& [stem, path] : gts) {
    ids.push_back(stem);
    gt_maps.push_back(load_gt(path));
    pred_maps.push_back(load_gt(preds.at(stem)));
    if (pred_maps.back().shape() != gt_maps.back().shape()) {
      throw DataError(stem + ": prediction " + shape_str(pred_maps.back().shape()) + " vs ground truth " +
                      shape_str(gt_maps.back().shape()));
    }
  }
  const EvalReport r = evaluate(ids, pred_maps, gt_maps, c.tol);
  fs::path json_path = c.report;
  fs::path csv_path = json_path;
  csv_path.replace_extension(".csv");
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  write_report(r, json_path, csv_path);
  out << std::fixed << std::setprecision(4) << "ODS " << r.ods << "  OIS " << r.ois << "  MSE " << r.mse
      << "  MAE " << r.mae << "  PSNR " << r.psnr << "  (" << r.images.size() << " images)\n";
  return kExitOk;
}

int cmd_curate(const Commands& c, std::ostream& out) {
  if (c.k < 1) throw ContractError("--k must be >= 1");
  std::vector<NamedImage> images;
  for (const auto& p : list_images(c.images_dir)) images.push_back({p.stem().string(), load_image(p)});
  if (images.empty()) throw DataError("no images in " + c.images_dir);
  const auto picks = iqr_select(images, c.k, c.max_side);
  fs::path out_path = c.manifest_out;
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream csv(out_path);
  if (!csv) throw DataError("cannot write " + c.manifest_out);
  csv << "id,iqr,rank\n" << std::setprecision(10);
  for (std::size_t i = 0; i < picks.size(); ++i) csv << picks[i].id << "," << picks[i].iqr << "," << i << "\n";
  out << "selected " << picks.size() << " images -> " << c.manifest_out << "\n";
  return kExitOk;
}

void print_table(const std::vector<LayerSpec>& layers, std::ostream& out) {
  out << std::left << std::setw(18) << "layer" << std::setw(14) << "weight" << std::setw(6) << "bias"
      << "params\n";
  std::size_t total = 0;
  for (const auto& l : layers) {
    out << std::left << std::setw(18) << l.name << std::setw(14) << shape_str(l.weight_shape) << std::setw(6)
        << l.bias_size << l.param_count() << "\n";
    total += l.param_count();
  }
  out << "total parameters: " << total << "\n";
}

int cmd_inspect(const Commands& c, std::ostream& out) {
  if (c.arch || c.inspect_ckpt.empty()) {
    print_table(layer_table(ModelConfig{}), out);
    return kExitOk;
  }
  const ParamStore<float> params = load_checkpoint<float>(c.inspect_ckpt);
  std::vector<LayerSpec> layers = layer_table(ModelConfig{});
  for (auto& l : layers) {
    l.weight_shape = params.at(l.name + ".weight").shape();
    l.bias_size = static_cast<int>(params.at(l.name + ".bias").size());
  }
  print_table(layers, out);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Commands c;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    c.app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << c.app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    if (*c.train) return cmd_train(c, out);
    if (*c.predict) return cmd_predict(c, out, err);
    if (*c.eval) return cmd_eval(c, out);
    if (*c.curate) return cmd_curate(c, out);
    if (*c.inspect) return cmd_inspect(c, out);
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace teed
