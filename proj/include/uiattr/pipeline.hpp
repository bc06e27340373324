#pragma once

// Run configuration, built-in profiles and the end-to-end commands used by
// the command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/dataset.hpp"
#include "uiattr/eval.hpp"
#include "uiattr/nn/train.hpp"
#include "uiattr/predictor.hpp"
#include "uiattr/refine.hpp"

namespace uiattr {

struct Profile {
  std::string name;
  int canvas_width = 96;
  int canvas_height = 48;
  SamplingBounds bounds = SamplingBounds::full();
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 300;
  std::size_t delta_samples = 2000;
  std::vector<int> channels;
  int hidden = 256;
};

/// 96x48 canvas, ~2k samples, channels 8-8-16-16-32-32.
Profile desk_profile();
/// 330x150 canvas, ~20k samples, channels 32-32-64-64-128-128.
Profile paper_profile();
Profile profile_named(std::string_view name);

/// Error in the run configuration or a missing artifact.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a pipeline stage, tagged with the module that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}
  const std::string& module() const { return module_; }

 private:
  std::string module_;
};

struct RunConfig {
  Profile profile = desk_profile();
  std::uint64_t seed = 1;
  int jobs = 1;
  std::filesystem::path work_dir = "runs/desk";

  struct Paths {
    std::filesystem::path train_data, eval_data, delta_data, dagger_data;
    std::filesystem::path predictors, policies, dagger_policies, out, reports;
  } paths;

  // data generation
  std::size_t train_samples = 0;
  std::size_t eval_samples = 0;
  std::size_t delta_samples = 0;
  int subset_size = 3;
  BackgroundMode background = BackgroundMode::kRand;
  JitterSpec jitter;
  std::optional<std::filesystem::path> screenshots;
  std::size_t synthetic_screenshots = 16;

  // prediction networks
  KindSet predictor_kinds = KindSet::all();
  nn::TrainSpec predictor_train;
  double val_fraction = 0.2;
  PaddingMode padding = PaddingMode::kEdge;

  // delta policies
  KindSet policy_kinds = default_refinable_kinds();
  nn::TrainSpec policy_train = [] {
    nn::TrainSpec t;
    t.batch_size = 64;
    t.clip_norm = 3.0;
    return t;
  }();
  int clip = 5;
  int perturbed_kinds = 3;
  double resample_probability = 0.5;
  bool init_from_predictors = true;

  int dagger_rounds = 2;
  /// 0 visits every training sample each round.
  std::size_t dagger_per_round = 0;

  PerturbationSpec perturbation;
  ColorClipSpec color_clip;

  RefineSpec refine;
  int random_init_max_iters = kRandomInitMaxIters;
  bool random_init = false;
  std::string refine_policies = "dagger";
  std::size_t refine_samples = 300;

  std::vector<BaselineMetric> baseline_metrics = {BaselineMetric::kPixel, BaselineMetric::kSsim,
                                                  BaselineMetric::kWasserstein};
  std::size_t baseline_samples = 200;

  GenOptions gen_options() const;
  DeltaOptions delta_options() const;
};

/// Parses a run configuration; relative paths resolve against `base_dir`.
/// Unknown keys anywhere in the tree are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Environment variable naming the default configuration file.
inline constexpr const char* kConfigEnv = "UIATTR_CONFIG";

// ----------------------------------------------------------------------------
// Commands. Each reads its inputs from the configured paths, writes only to
// its declared outputs and returns a short summary.

struct StagePlan {
  std::string command;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

StagePlan plan_stage(const RunConfig& c, const std::string& command);
const std::vector<std::string>& stage_names();

nlohmann::json run_stage(const RunConfig& c, const std::string& command, std::ostream& log);

/// gen-data through eval in order.
nlohmann::json run_pipeline(const RunConfig& c, std::ostream& log);

/// Reports written by the eval stage.
std::vector<EvalReport> load_eval_reports(const RunConfig& c);

}  // namespace uiattr
