#pragma once

// Attribute refinement: repeatedly render the current guess, ask the delta
// policies what to change, and keep changes that lower the cost.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/image.hpp"
#include "uiattr/metrics.hpp"
#include "uiattr/policy.hpp"
#include "uiattr/predictor.hpp"
#include "uiattr/render.hpp"
#include "uiattr/rng.hpp"

namespace uiattr {

/// Policy outputs for one rendered state; absent kinds have no entry.
struct PolicyEval {
  std::array<std::optional<DeltaDistribution>, kNumKinds> kinds;

  double p_zero(AttributeKind k) const { return kinds[index_of(k)] ? kinds[index_of(k)]->p_zero() : 1.0; }
  /// Product of p_zero over every evaluated kind.
  double joint_p_zero() const;
};

/// Source of delta distributions for states of one refinement problem (the
/// original image is fixed at construction).
class DeltaPolicy {
 public:
  virtual ~DeltaPolicy() = default;
  virtual int clip() const = 0;
  virtual KindSet kinds() const = 0;
  virtual PolicyEval evaluate(const Image& rendered, const AttributeConfig& rendered_config) = 0;
  /// Distribution over domain_values(kind) used to propose uncomparable values.
  virtual std::vector<double> value_distribution(AttributeKind kind) = 0;
};

/// Cost of a rendered state against the original; lower is better.
class Critic {
 public:
  virtual ~Critic() = default;
  virtual double cost(const Image& rendered, const AttributeConfig& rendered_config, const PolicyEval& eval) = 0;
  virtual std::string name() const = 0;
};

/// Trained siamese policies; uncomparable values come from the prediction
/// networks evaluated once on the original.
class LearnedPolicy final : public DeltaPolicy {
 public:
  LearnedPolicy(PolicyBundle& policies, PredictorBundle* predictors, const Image& original,
                const PerturbationSpec& perturbation = {});
  int clip() const override { return policies_.clip; }
  KindSet kinds() const override { return policies_.kinds(); }
  PolicyEval evaluate(const Image& rendered, const AttributeConfig& rendered_config) override;
  std::vector<double> value_distribution(AttributeKind kind) override;

 private:
  PolicyBundle& policies_;
  PredictorBundle* predictors_;
  Image original_;
  PerturbationSpec perturbation_;
  std::array<std::optional<nn::Tensor>, kNumKinds> features_;
  std::array<std::optional<std::vector<double>>, kNumKinds> values_;
};

/// Puts all mass on the true clipped delta to `target` (and on the true value
/// for uncomparable kinds).
class OraclePolicy final : public DeltaPolicy {
 public:
  OraclePolicy(const AttributeConfig& target, int clip, KindSet kinds = KindSet::all());
  int clip() const override { return clip_; }
  KindSet kinds() const override { return kinds_; }
  PolicyEval evaluate(const Image& rendered, const AttributeConfig& rendered_config) override;
  std::vector<double> value_distribution(AttributeKind kind) override;

 private:
  AttributeConfig target_;
  int clip_;
  KindSet kinds_;
};

/// 1 - joint probability of no change.
class LearnedCritic final : public Critic {
 public:
  double cost(const Image&, const AttributeConfig&, const PolicyEval& eval) override;
  std::string name() const override { return "learned"; }
};

/// Ground-truth cost. Binary: 1 when any kind differs perceivably, else 0.
/// Graded: sum over kinds of distance / span (uncomparable: 0 or 1), which
/// lets every improving step lower the cost.
class OracleCritic final : public Critic {
 public:
  enum class Mode { kBinary, kGraded };
  OracleCritic(const AttributeConfig& target, Mode mode, KindSet kinds = KindSet::all());
  double cost(const Image&, const AttributeConfig& cfg, const PolicyEval&) override;
  std::string name() const override { return mode_ == Mode::kBinary ? "oracle" : "oracle_graded"; }

 private:
  AttributeConfig target_;
  Mode mode_;
  KindSet kinds_;
};

enum class BaselineMetric { kPixel, kSsim, kWasserstein };

std::string_view baseline_metric_name(BaselineMetric m);
BaselineMetric parse_baseline_metric(std::string_view s);

/// Image-similarity cost; both images are centered on their components first.
class ImageCritic final : public Critic {
 public:
  ImageCritic(BaselineMetric metric, const Image& original, const AttributeConfig& original_layout,
              const RenderContext& ctx, bool center = true);
  double cost(const Image& rendered, const AttributeConfig& cfg, const PolicyEval&) override;
  std::string name() const override { return std::string(baseline_metric_name(metric_)); }

 private:
  BaselineMetric metric_;
  Image original_;
  RenderContext ctx_;
  bool center_;
};

// ----------------------------------------------------------------------------
// Operations

/// Samples a kind with probability proportional to 1 - p_zero among the
/// refinable kinds the policy covers; nullopt when every such p_zero is 1.
std::optional<AttributeKind> select_attribute(const PolicyEval& eval, const KindSet& refinable, Rng& rng);

struct Proposal {
  AttributeKind kind = AttributeKind::kTextSize;
  AttributeValue value;
  /// Sampled delta per channel (uncomparable kinds: 1).
  std::array<int, 3> delta{};
  /// |delta| reached the clip bound on some channel.
  bool saturated = false;
  /// The value did not change even after one resample.
  bool no_op = false;
};

Proposal propose_change(DeltaPolicy& policy, const PolicyEval& eval, AttributeKind kind,
                        const AttributeConfig& current, Rng& rng);

struct Decision {
  bool accepted = false;
  double cost = 0.0;
  std::optional<Image> image;
  std::optional<PolicyEval> eval;
  std::string note;
};

/// Renders the proposal and accepts it when saturated or when it lowers the
/// cost. Render failures reject with the reason in `note`.
Decision accept_or_reject(DeltaPolicy& policy, Critic& critic, const AttributeConfig& proposed,
                          const RenderContext& ctx, double current_cost, bool saturated);

struct RefineSpec {
  int patience = 4;
  int max_iters = 8;
  bool same_value_heuristic = false;
  KindSet refinable = default_refinable_kinds();
  std::uint64_t seed = 0;
};

/// Bound on iterations for refinement from random values: max_iters used by
/// the random-initialization mode.
inline constexpr int kRandomInitMaxIters = 100;

struct TrajectoryStep {
  int iteration = 0;
  std::optional<AttributeKind> kind;
  std::array<int, 3> delta{};
  double cost_before = 0.0;
  double cost_after = 0.0;
  bool accepted = false;
  bool saturated = false;
  std::string note;
  AttributeConfig config;  ///< current config after the step
};

nlohmann::json step_to_json(const TrajectoryStep& s);

struct RefineResult {
  AttributeConfig config;
  double cost = 0.0;
  int accepted = 0;
  std::string stop_reason;
  AttributeConfig initial;
  double initial_cost = 0.0;
  std::vector<TrajectoryStep> trajectory;
};

RefineResult refine_loop(DeltaPolicy& policy, Critic& critic, const AttributeConfig& y0, const RenderContext& ctx,
                         const RefineSpec& spec);

/// Copy of `base` with the `kinds` resampled uniformly inside `bounds`.
AttributeConfig randomize_kinds(const AttributeConfig& base, const KindSet& kinds, Rng& rng,
                                const SamplingBounds& bounds = SamplingBounds::full());

/// Shrinks width, then shadow, then height (snapping into the domains) until
/// the component fits `ctx`; returns the config unchanged when it already fits.
AttributeConfig fit_to_context(AttributeConfig c, const RenderContext& ctx);

/// Sum over the comparable kinds of ceil(span / clip) plus one step per
/// uncomparable kind, plus `patience`.
int oracle_iteration_bound(const KindSet& kinds, int clip, int patience);

/// Writes the trajectory as line-delimited records.
void write_trajectory(const RefineResult& r, std::ostream& out);

}  // namespace uiattr
