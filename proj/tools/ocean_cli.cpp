/* Copyright 2026 The Ocean Authors. All Rights Reserved.

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

// Command-line front end: fixture generation, forward / train runs,
// gradient checks, evaluation and attention oracles.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ocean/harness.hpp"
#include "ocean/io.hpp"
#include "ocean/losses.hpp"
#include "ocean/pipeline.hpp"

namespace {

using Json = nlohmann::ordered_json;
using ocean::HarnessConfig;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr double kOracleTolerance = 1e-6;

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

int ThreadLimit() {
  int limit = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("OCEAN_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    ocean::Require(end != env && *end == '\0' && value >= 1, "OCEAN_THREADS must be a positive integer");
    limit = std::min<long>(limit, value);
  }
  return limit;
}

HarnessConfig LoadConfig(const CommonArgs& args) {
  HarnessConfig config = args.config_path.empty() ? HarnessConfig{} : ocean::LoadHarnessConfig(args.config_path);
  if (args.seed_set) config.seed = args.seed;
  if (!args.out.empty()) config.output_dir = args.out;
  config.Validate();
  return config;
}

std::filesystem::path OutputDir(const HarnessConfig& config) {
  std::filesystem::path dir(config.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  ocean::Require(!ec, "cannot create output directory " + dir.string());
  return dir;
}

std::string Path(const std::filesystem::path& dir, const std::string& name) { return (dir / name).string(); }

std::string FormatDouble(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void AddCommon(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&args](std::uint64_t s) { args.seed = s, args.seed_set = true; }, "Scene and noise seed");
  cmd->add_option("--out", args.out, "Output directory");
}

// Writes one PGM per z level of a label volume, viewed from above.
void WriteLabelSlices(const std::filesystem::path& dir, const std::string& stem, const ocean::GridSpec& grid,
                      const std::vector<int>& labels, int maxval) {
  for (int z = 0; z < grid.nz(); ++z) {
    std::vector<int> slice(static_cast<std::size_t>(grid.nx()) * grid.ny());
    for (int x = 0; x < grid.nx(); ++x) {
      for (int y = 0; y < grid.ny(); ++y) {
        slice[static_cast<std::size_t>(x) * grid.ny() + y] = labels[grid.linear({x, y, z})];
      }
    }
    ocean::WritePgm(Path(dir, stem + "_z" + std::to_string(z) + ".pgm"), grid.ny(), grid.nx(), slice, maxval);
  }
}

std::vector<double> RowNorms(const ocean::Mat& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[r] = m.row(r).norm();
  return out;
}

int RunGenerate(const CommonArgs& args) {
  const HarnessConfig config = LoadConfig(args);
  const auto dir = OutputDir(config);
  const ocean::GeneratedScene scene = ocean::GenerateScene(config, config.seed);
  const ocean::SceneFixture& f = scene.fixture;
  ocean::WriteVolumeFile(Path(dir, "labels.ocnv"), ocean::LabelVolume(f.grid, f.labels));
  ocean::WriteVolumeFile(Path(dir, "depth.ocnv"), ocean::VolumeFromFeatureMap(f.depth_map));
  ocean::WriteMaskPgm(Path(dir, "mask.pgm"), f.mask);
  std::vector<double> depth(f.depth_map.data.data(), f.depth_map.data.data() + f.depth_map.data.size());
  ocean::WriteScaledPgm(Path(dir, "depth.pgm"), f.depth_map.width, f.depth_map.height, depth);
  WriteLabelSlices(dir, "labels", f.grid, f.labels, config.model.num_classes);
  Json boxes = Json::array();
  for (const auto& b : scene.boxes) {
    boxes.push_back({{"min", b.min_cell}, {"max", b.max_cell}, {"label", b.label}});
  }
  Json doc = {{"seed", config.seed}, {"instances", f.mask.instance_count}, {"boxes", boxes}};
  ocean::WriteTextFile(Path(dir, "scene.json"), doc.dump(2) + "\n");
  ocean::WriteTextFile(Path(dir, "config.json"), ocean::HarnessConfigToJson(config));
  std::cout << "generated " << scene.boxes.size() << " boxes in " << dir.string() << "\n";
  return kExitOk;
}

int RunForward(const CommonArgs& args, const std::string& params_path) {
  const HarnessConfig config = LoadConfig(args);
  const auto dir = OutputDir(config);
  const ocean::ModelConfig model = config.model_config();
  const ocean::GeneratedScene scene = ocean::GenerateScene(config, config.seed);
  ocean::ModelParams params = ocean::InitParams(model, config.seed);
  if (!params_path.empty()) ocean::ReadParamsFile(params_path, params);
  ocean::ForwardOptions options;
  options.seed = config.seed;
  const ocean::ForwardResult result = ocean::Forward(model, scene.fixture, params, options);
  const ocean::GridSpec& grid = scene.fixture.grid;
  const std::vector<int> pred = ocean::ArgmaxLabels(result.occupancy.logits);

  ocean::WriteVolumeFile(Path(dir, "logits.ocnv"), ocean::VolumeFromGrid(grid, result.occupancy.logits));
  ocean::WriteVolumeFile(Path(dir, "pred.ocnv"), ocean::LabelVolume(grid, pred));
  ocean::WriteVolumeFile(Path(dir, "labels.ocnv"), ocean::LabelVolume(grid, scene.fixture.labels));
  ocean::WriteTextFile(Path(dir, "loss.json"), ocean::LossReportJson(result.losses));
  WriteLabelSlices(dir, "pred", grid, pred, model.num_classes);
  const ocean::BevMap& scene_bev = result.trace.scene_bev;
  ocean::WriteScaledPgm(Path(dir, "scene_bev.pgm"), scene_bev.ny, scene_bev.nx, RowNorms(scene_bev.data));
  const ocean::BevMap& instance_bev = result.trace.combined.combined;
  ocean::WriteScaledPgm(Path(dir, "instance_bev.pgm"), instance_bev.ny, instance_bev.nx,
                        RowNorms(instance_bev.data));
  ocean::WriteMaskPgm(Path(dir, "mask.pgm"), scene.fixture.mask);
  std::cout << ocean::LossReportJson(result.losses);
  return kExitOk;
}

int RunTrain(const CommonArgs& args, int steps, double lr, bool steps_set, bool lr_set) {
  HarnessConfig config = LoadConfig(args);
  if (steps_set) config.train_steps = steps;
  if (lr_set) config.learning_rate = lr;
  config.Validate();
  const auto dir = OutputDir(config);
  const ocean::ModelConfig model = config.model_config();
  const ocean::GeneratedScene scene = ocean::GenerateScene(config, config.seed);
  ocean::ModelParams params = ocean::InitParams(model, config.seed);
  ocean::ForwardOptions options;
  options.seed = config.seed;
  const ocean::TrainResult result =
      ocean::TrainSteps(model, scene.fixture, params, config.train_steps, config.learning_rate, options);

  std::ostringstream csv;
  csv << "step,total,ce,scal_sem,scal_geo,depth,recon\n";
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& c = result.reports[i].components;
    csv << i << ',' << FormatDouble(result.reports[i].total) << ',' << FormatDouble(c.ce) << ','
        << FormatDouble(c.scal_sem) << ',' << FormatDouble(c.scal_geo) << ',' << FormatDouble(c.depth) << ','
        << FormatDouble(c.recon) << '\n';
  }
  ocean::WriteTextFile(Path(dir, "trajectory.csv"), csv.str());
  ocean::WriteParamsFile(Path(dir, "params.ocnp"), params);
  const double first = result.totals.front();
  const double last = result.totals.back();
  std::cout << "steps " << result.totals.size() << " initial " << FormatDouble(first) << " final "
            << FormatDouble(last) << " ratio " << FormatDouble(last / first) << "\n";
  return kExitOk;
}

int RunGradcheckCommand(const CommonArgs& args, const std::string& op, int trials) {
  const std::uint64_t seed = args.seed_set ? args.seed : 0;
  std::vector<std::string> ops;
  if (op == "all") {
    ops = ocean::GradcheckOps();
  } else {
    ops.push_back(op);
  }
  const int threads = ThreadLimit();
  bool passed = true;
  Json reports = Json::array();
  for (const auto& name : ops) {
    const ocean::GradcheckReport report = ocean::RunGradcheck(name, trials, seed, threads);
    passed = passed && report.passed();
    reports.push_back({{"op", report.op},
                       {"trials", report.trials.size()},
                       {"step", report.step},
                       {"tolerance", report.tolerance},
                       {"max_error", report.max_error},
                       {"passed", report.passed()}});
  }
  const std::string text = reports.dump(2) + "\n";
  std::cout << text;
  if (!args.out.empty()) {
    std::filesystem::create_directories(args.out);
    ocean::WriteTextFile(Path(args.out, "gradcheck.json"), text);
  }
  return passed ? kExitOk : kExitNumerical;
}

int RunEval(const CommonArgs& args, const std::string& pred_path, const std::string& gt_path) {
  const HarnessConfig config = LoadConfig(args);
  const ocean::VolumeFile pred_volume = ocean::ReadVolumeFile(pred_path);
  const ocean::VolumeFile gt_volume = ocean::ReadVolumeFile(gt_path);
  ocean::Require(pred_volume.dims == gt_volume.dims, "eval: prediction and ground truth dims differ");
  std::vector<int> pred;
  if (pred_volume.flags & ocean::kVolumeFlagLabels) {
    pred = ocean::LabelsFromVolume(pred_volume);
  } else {
    pred = ocean::ArgmaxLabels(pred_volume.data);
  }
  const std::vector<int> gt = ocean::LabelsFromVolume(gt_volume);
  const ocean::MetricReport report = ocean::IouMiou(pred, gt, config.model.num_classes);
  const std::string text = ocean::MetricReportJson(report);
  const auto dir = OutputDir(config);
  ocean::WriteTextFile(Path(dir, "metrics.json"), text);
  std::cout << text;
  return kExitOk;
}

int RunOracleCommand(const CommonArgs& args, std::string op, int trials) {
  const std::uint64_t seed = args.seed_set ? args.seed : 0;
  std::vector<std::string> ops;
  if (op == "all") {
    ops = ocean::OracleOps();
  } else if (op == "sga") {
    ops = {"sga_cluster"};
  } else if (op == "sga3d") {
    ops = {"sga3d_cluster", "sga3d_cluster_weighted"};
  } else {
    ops = {op};
  }
  bool passed = true;
  for (const auto& name : ops) {
    const ocean::OracleReport report = ocean::RunOracle(name, trials, seed);
    const bool ok = report.max_abs_error < kOracleTolerance;
    passed = passed && ok;
    std::cout << report.op << " trials " << report.trials << " max_abs_error " << std::scientific
              << std::setprecision(3) << report.max_abs_error << std::defaultfloat << (ok ? " ok" : " FAIL")
              << "\n";
  }
  return passed ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-centric semantic scene completion toolkit"};
  app.require_subcommand(1);
  app.allow_extras(false);

  CommonArgs common;
  std::string op = "all";
  int trials = 20;
  int steps = 0;
  double lr = 0.0;
  std::string params_path, pred_path, gt_path;

  auto* generate = app.add_subcommand("generate", "Write a synthetic fixture");
  AddCommon(generate, common);

  auto* forward = app.add_subcommand("forward", "Run the model and write logits, losses and BEV slices");
  AddCommon(forward, common);
  forward->add_option("--params", params_path, "Parameter file written by train")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Overfit one fixture and write the loss trajectory");
  AddCommon(train, common);
  auto* steps_opt = train->add_option("--steps", steps, "Gradient descent steps")->check(CLI::PositiveNumber);
  auto* lr_opt = train->add_option("--lr", lr, "Learning rate")->check(CLI::NonNegativeNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference VJP checks");
  AddCommon(gradcheck, common);
  gradcheck->add_option("--op", op, "Operation name or 'all'");
  gradcheck->add_option("--trials", trials, "Random trials per op")->check(CLI::NonNegativeNumber);

  auto* eval = app.add_subcommand("eval", "IoU / mIoU of a prediction against labels");
  AddCommon(eval, common);
  eval->add_option("--pred", pred_path, "Predicted logits or labels")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt_path, "Ground-truth labels")->required()->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle", "Compare attention kernels with brute-force references");
  AddCommon(oracle, common);
  oracle->add_option("--op", op, "sga, sga3d, gsga, window_attention, a full op name, or 'all'");
  oracle->add_option("--trials", trials, "Random instances per op")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (*generate) return RunGenerate(common);
    if (*forward) return RunForward(common, params_path);
    if (*train) return RunTrain(common, steps, lr, steps_opt->count() > 0, lr_opt->count() > 0);
    if (*gradcheck) return RunGradcheckCommand(common, op, trials);
    if (*eval) return RunEval(common, pred_path, gt_path);
    if (*oracle) return RunOracleCommand(common, op, trials);
  } catch (const ocean::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ocean::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
