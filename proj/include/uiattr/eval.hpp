#pragma once

// Perceivable-difference accuracy reports and the experiment runners built on
// the predictor and refinement modules.

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/dataset.hpp"
#include "uiattr/policy.hpp"
#include "uiattr/predictor.hpp"
#include "uiattr/refine.hpp"

namespace uiattr {

struct EvalReport {
  std::string name;
  /// Kinds included in the report (others have all-zero counts).
  KindSet kinds = KindSet::all();
  /// same / similar / different counts per kind.
  std::array<std::array<std::size_t, 3>, kNumKinds> counts{};
  std::size_t samples = 0;
  nlohmann::json meta = nlohmann::json::object();

  double accuracy(AttributeKind k) const;
  /// Mean of the per-kind "same" rates over `kinds`.
  double overall() const;
  bool operator==(const EvalReport&) const = default;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

EvalReport accuracy(const std::vector<AttributeConfig>& predictions, const std::vector<AttributeConfig>& labels,
                    const KindSet& kinds = KindSet::all(), std::string name = "accuracy");

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// One record per report.
void write_reports(const std::vector<EvalReport>& reports, std::ostream& out);
std::vector<EvalReport> read_reports(std::istream& in);

/// Fixed-width table: one row per kind, one column per report.
std::string format_table(const std::vector<EvalReport>& reports);

/// FNV-1a digest of the serialized reports.
std::string reports_checksum(const std::vector<EvalReport>& reports);

// ----------------------------------------------------------------------------
// Experiments

/// Predicts one kind on every sample; the report covers only that kind.
EvalReport evaluate_kind(KindModel& model, const std::vector<Image>& images,
                         const std::vector<AttributeConfig>& labels, const PerturbationSpec& perturbation,
                         const ColorClipSpec& clip, const std::string& name);

/// Predicted configs for every image.
std::vector<ConfigPrediction> predict_all(PredictorBundle& bundle, const std::vector<Image>& images);

/// Crops a random window containing the whole component footprint, so the
/// component lands off-center in an image smaller than the canvas.
Image off_center_crop(const Image& image, const AttributeConfig& config, const RenderContext& ctx, Rng& rng);

struct RefinementCase {
  Image image;
  AttributeConfig truth;
  RenderContext ctx;
  AttributeConfig init;
};

using PolicyFactory = std::function<std::unique_ptr<DeltaPolicy>(const RefinementCase&)>;
using CriticFactory = std::function<std::unique_ptr<Critic>(const RefinementCase&)>;

struct RefinementRun {
  EvalReport initial;
  EvalReport refined;
  std::vector<RefineResult> results;
  /// refined.overall() - initial.overall().
  double delta() const { return refined.overall() - initial.overall(); }
};

/// Refines every case and reports accuracy before and after. `kinds` selects
/// the attributes counted in the reports.
RefinementRun run_refinement(const std::vector<RefinementCase>& cases, const PolicyFactory& policy,
                             const CriticFactory& critic, const RefineSpec& spec, const KindSet& kinds,
                             const std::string& name);

/// Builds cases whose init is the prediction with `randomize` kinds redrawn.
std::vector<RefinementCase> make_cases(const PredictionDataset& data, const std::vector<AttributeConfig>& init,
                                       const KindSet& randomize, const SamplingBounds& bounds, std::uint64_t seed);

/// Input / preprocessed / predicted / refined strips, one row per sample.
struct SheetRow {
  Image input;
  Image preprocessed;
  Image predicted;
  Image refined;
};
Image contact_sheet(const std::vector<SheetRow>& rows, int gap = 2);

}  // namespace uiattr
