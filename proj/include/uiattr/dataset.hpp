#pragma once

// Synthetic corpora: rendered (image, config) samples for attribute
// prediction and rendered image pairs with clipped attribute deltas for the
// refinement policies.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/image.hpp"
#include "uiattr/render.hpp"
#include "uiattr/rng.hpp"

namespace uiattr {

struct JitterSpec {
  enum class Mode { kCenter, kTr1, kTr2 };
  Mode mode = Mode::kTr2;
  /// tr1: minimum distance of the component from the canvas border.
  int margin = 20;
  /// tr2: maximal horizontal / vertical offset from the centered position.
  int max_dx = 13;
  int max_dy = 19;
};

std::string_view jitter_mode_name(JitterSpec::Mode m);
JitterSpec::Mode parse_jitter_mode(std::string_view s);

/// Chooses (x_pos, y_pos) for `config` on a canvas. Offsets are drawn from the
/// part of the jitter range that keeps the component inside the canvas; when
/// the margin cannot be honoured on an axis it shrinks to what fits.
std::pair<int, int> place_component(const AttributeConfig& config, int canvas_w, int canvas_h,
                                    const JitterSpec& jitter, Rng& rng);

enum class BackgroundMode { kWhite, kRand, kScreenshot };

std::string_view background_mode_name(BackgroundMode m);
BackgroundMode parse_background_mode(std::string_view s);

struct GenOptions {
  int canvas_width = 96;
  int canvas_height = 48;
  SamplingBounds bounds = SamplingBounds::full();
  JitterSpec jitter;
  BackgroundMode background = BackgroundMode::kRand;
  /// Attributes resampled between consecutive samples.
  int subset_size = 3;
  std::vector<std::shared_ptr<const Image>> screenshots;
  int jobs = 1;
};

nlohmann::json gen_options_to_json(const GenOptions& o);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PredictionSample {
  Image image;
  AttributeConfig label;
  RenderContext ctx;
  std::uint64_t seed = 0;
};

/// Per-kind clipped change from the rendered config to the original one.
/// Comparable kinds hold a value in [-c, c] (colors: one per channel);
/// uncomparable kinds hold 1 when the values differ and 0 otherwise.
struct DeltaVector {
  std::array<std::array<int, 3>, kNumKinds> values{};

  int& at(AttributeKind k, int channel = 0) { return values[index_of(k)][channel]; }
  int at(AttributeKind k, int channel = 0) const { return values[index_of(k)][channel]; }
  bool is_zero() const;
  /// Sum of absolute entries over all kinds and channels.
  int total_magnitude() const;
  bool operator==(const DeltaVector&) const = default;
};

/// Number of label channels of a kind (3 for colors, 1 otherwise).
inline int delta_channels(AttributeKind k) { return is_color(k) ? 3 : 1; }

/// Clipped signed difference original - rendered per attribute.
DeltaVector delta_between(const AttributeConfig& original, const AttributeConfig& rendered, int c);

nlohmann::json delta_to_json(const DeltaVector& d);
DeltaVector delta_from_json(const nlohmann::json& j);

struct DeltaSample {
  Image original;
  Image rendered;
  AttributeConfig original_config;
  AttributeConfig rendered_config;
  RenderContext ctx;
  DeltaVector labels;
  std::uint64_t seed = 0;
};

struct PredictionDataset {
  std::vector<PredictionSample> samples;
  nlohmann::json meta = nlohmann::json::object();
};

struct DeltaDataset {
  std::vector<DeltaSample> samples;
  int clip = 5;
  nlohmann::json meta = nlohmann::json::object();
};

/// Correlated synthetic corpus: sample i resamples `subset_size` attributes of
/// sample i-1. Deterministic given (options, seed).
PredictionDataset gen_prediction_dataset(std::size_t n, const GenOptions& options, std::uint64_t seed);

struct DeltaOptions {
  GenOptions gen;
  int clip = 5;
  /// Attributes changed between the two configs of a pair.
  int perturbed_kinds = 3;
  /// Probability that a changed attribute is redrawn from its domain instead
  /// of moved by a nonzero step within [-clip, clip].
  double resample_probability = 0.5;
};

/// Pairs (render(y_a), render(y_b)) under a shared context with labels
/// delta_between(y_a, y_b, clip).
DeltaDataset gen_delta_dataset(std::size_t m, const DeltaOptions& options, std::uint64_t seed);

/// Moves `value` of a numeric kind by a nonzero step in [-c, c] and snaps it
/// into the sampling bounds; colors move each channel independently.
AttributeValue perturb_value(AttributeKind kind, const AttributeValue& value, int c, Rng& rng,
                             const SamplingBounds& bounds);

/// Builds a pair sample from two configs under `ctx`.
DeltaSample make_delta_sample(const AttributeConfig& original, const AttributeConfig& rendered,
                              const RenderContext& ctx, int clip, std::uint64_t seed = 0);

/// Configs visited when refining towards `target` (the first entry is the start).
using StateVisitor =
    std::function<std::vector<AttributeConfig>(const PredictionSample& target, Rng& rng)>;
/// Called after every round with the aggregated corpus (e.g. to retrain policies).
using RetrainHook = std::function<void(const DeltaDataset& aggregated, int round)>;

/// Dataset aggregation: each round visits up to `per_round` targets, labels
/// every visited state with the expert delta and appends the pairs.
DeltaDataset dagger_augment(const StateVisitor& visit, const std::vector<PredictionSample>& targets,
                            const DeltaDataset& base, int rounds, std::size_t per_round,
                            std::uint64_t seed, const RetrainHook& retrain = {});

/// Procedural app-like screenshots (toolbars, cards, text lines) for the
/// screenshot background mode.
std::vector<std::shared_ptr<const Image>> synthetic_screenshots(std::size_t n, int w, int h,
                                                                std::uint64_t seed);
std::vector<std::shared_ptr<const Image>> load_screenshots(const std::filesystem::path& dir);

/// 16-hex-digit FNV-1a digest of an image's pixel bytes.
std::string image_digest(const Image& img);

// ----------------------------------------------------------------------------
// Persistence: <dir>/dataset.json, <dir>/manifest.jsonl, <dir>/images/*.ppm
// (and <dir>/screenshots/*.ppm for the background pool).

void save_dataset(const PredictionDataset& ds, const std::filesystem::path& dir);
void save_dataset(const DeltaDataset& ds, const std::filesystem::path& dir);

/// Loads and checks image digests; re-renders a `verify_fraction` of the
/// samples and throws DatasetError when any differs from its stored image.
PredictionDataset load_prediction_dataset(const std::filesystem::path& dir, double verify_fraction = 0.05);
DeltaDataset load_delta_dataset(const std::filesystem::path& dir, double verify_fraction = 0.05);

/// Digest of the manifest file (changes whenever any label or image changes).
std::string manifest_digest(const std::filesystem::path& dir);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace uiattr
