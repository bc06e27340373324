#pragma once

// Per-attribute prediction networks and the inference pipeline around them:
// input padding, shift ensembles, saliency maps and color clipping.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/dataset.hpp"
#include "uiattr/image.hpp"
#include "uiattr/nn/network.hpp"
#include "uiattr/nn/train.hpp"

namespace uiattr {

enum class HeadKind {
  kClassification,  ///< softmax over the ordered domain members
  kRegression,      ///< one scaled output, rounded into the domain
  kColor,           ///< three scaled outputs (r, g, b)
};

std::string_view head_kind_name(HeadKind h);
HeadKind parse_head_kind(std::string_view s);
HeadKind default_head(AttributeKind kind);

struct KindModel {
  AttributeKind kind = AttributeKind::kBorderWidth;
  HeadKind head = HeadKind::kClassification;
  int input_width = 96;
  int input_height = 48;
  PaddingMode padding = PaddingMode::kEdge;
  /// Regression targets are (value - target_lo) / (target_hi - target_lo).
  double target_lo = 0.0;
  double target_hi = 1.0;
  nn::Network net;

  /// Number of classes (classification) or outputs (regression heads).
  int outputs() const;
  /// Domain member codes addressed by a classification head.
  const std::vector<int>& classes() const { return domain_values(kind); }
};

struct PerturbationSpec {
  int k = 5;
  int t = 5;
  std::uint64_t seed = 0;
};

enum class ColorClipMode { kSaliencyTop5, kImageTop5, kImageAll, kNone };

std::string_view color_clip_mode_name(ColorClipMode m);
ColorClipMode parse_color_clip_mode(std::string_view s);

struct ColorClipSpec {
  ColorClipMode mode = ColorClipMode::kSaliencyTop5;
  double threshold = 0.8;
  int top_n = 5;
};

/// One model per attribute kind (absent entries are reported by predict_config).
struct PredictorBundle {
  std::array<std::optional<KindModel>, kNumKinds> models;
  PerturbationSpec perturbation;
  ColorClipSpec color_clip;

  bool complete() const;
  KindModel* find(AttributeKind k) { return models[index_of(k)] ? &*models[index_of(k)] : nullptr; }
};

/// Pads (or passes through) an image to the model input size. Throws
/// std::invalid_argument when the image is larger than the input.
Image prepare_input(const Image& img, int width, int height, PaddingMode mode);

/// Pixels scaled to [0, 1], appended as sample `n` of an (N, 3, H, W) tensor.
void image_to_tensor(const Image& img, nn::Tensor& batch, std::size_t n);

// ----------------------------------------------------------------------------
// Training

struct PredictorTrainOptions {
  std::vector<int> channels = {8, 8, 16, 16, 32, 32};
  int hidden = 256;
  nn::TrainSpec train;
  double val_fraction = 0.2;
  PaddingMode padding = PaddingMode::kEdge;
  std::optional<HeadKind> head;
  /// Range used to scale regression targets; defaults to the domain.
  std::optional<std::pair<int, int>> target_range;
};

KindModel train_kind_model(AttributeKind kind, const PredictionDataset& data,
                           const PredictorTrainOptions& options, nn::TrainHistory* history = nullptr,
                           const nn::EpochCallback& on_epoch = {});

// ----------------------------------------------------------------------------
// Inference

/// Averaged prediction of one model over an ensemble of shifted inputs.
struct KindPrediction {
  /// Ordered domain distribution (classification) or one-hot at the rounded value.
  std::vector<double> distribution;
  AttributeValue value;
  double confidence = 0.0;
  /// Perturbations that survived the in-canvas check.
  int used_shifts = 0;
};

KindPrediction ensemble_predict(KindModel& model, const Image& image, const PerturbationSpec& spec);

struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  bool degenerate = false;
};

/// |d output / d pixel| reduced over channels by max and min-max normalized,
/// for the image as prepared for `model`. Classification heads differentiate
/// the arg-max logit; regression heads the sum of outputs.
SaliencyMap saliency_map(KindModel& model, const Image& image);

/// Candidate colors for `mode` (most frequent first).
std::vector<Rgb> clip_candidates(const Image& image, const SaliencyMap* saliency, const ColorClipSpec& spec);

/// Nearest candidate (CIE76) to `predicted`, or `predicted` when there is none.
Rgb color_clip(Rgb predicted, const Image& image, const SaliencyMap* saliency, const ColorClipSpec& spec);

struct ConfigPrediction {
  AttributeConfig config;
  std::array<double, kNumKinds> confidence{};
  std::array<std::vector<double>, kNumKinds> distributions;
  /// Kinds that could not be predicted (missing model or failure), with the reason.
  std::vector<std::pair<AttributeKind, std::string>> failures;
};

/// Predicts every kind; failed kinds keep the value from `fallback`.
ConfigPrediction predict_config(PredictorBundle& bundle, const Image& image,
                                const AttributeConfig& fallback = canonical_config());

// ----------------------------------------------------------------------------
// Persistence: <dir>/bundle.json plus one checkpoint per kind.

void save_bundle(PredictorBundle& bundle, const std::filesystem::path& dir);
PredictorBundle load_bundle(const std::filesystem::path& dir);
void save_kind_model(KindModel& model, const std::filesystem::path& dir);

nlohmann::json kind_model_meta(const KindModel& m);

}  // namespace uiattr
