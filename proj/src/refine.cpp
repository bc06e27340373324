#include "uiattr/refine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace uiattr {

using nlohmann::json;

double PolicyEval::joint_p_zero() const {
  double p = 1.0;
  for (const auto& d : kinds) {
    if (d) p *= d->p_zero();
  }
  return p;
}

// ----------------------------------------------------------------------------
// Policies

LearnedPolicy::LearnedPolicy(PolicyBundle& policies, PredictorBundle* predictors, const Image& original,
                             const PerturbationSpec& perturbation)
    : policies_(policies), predictors_(predictors), original_(original), perturbation_(perturbation) {
  for (auto k : kAllKinds) {
    if (KindPolicy* p = policies_.find(k)) features_[index_of(k)] = encode_image(*p, original_);
  }
}

PolicyEval LearnedPolicy::evaluate(const Image& rendered, const AttributeConfig&) {
  PolicyEval e;
  for (auto k : kAllKinds) {
    KindPolicy* p = policies_.find(k);
    if (!p) continue;
    e.kinds[index_of(k)] = evaluate_policy_features(*p, *features_[index_of(k)], rendered);
  }
  return e;
}

std::vector<double> LearnedPolicy::value_distribution(AttributeKind kind) {
  auto& cached = values_[index_of(kind)];
  if (!cached) {
    const std::size_t n = domain_values(kind).size();
    KindModel* m = predictors_ ? predictors_->find(kind) : nullptr;
    if (m && m->head == HeadKind::kClassification) {
      cached = ensemble_predict(*m, original_, perturbation_).distribution;
    } else {
      cached = std::vector<double>(n, 1.0 / static_cast<double>(n));
    }
  }
  return *cached;
}

OraclePolicy::OraclePolicy(const AttributeConfig& target, int clip, KindSet kinds)
    : target_(target), clip_(clip), kinds_(kinds) {
  if (clip < 1) throw std::invalid_argument("oracle policy: clip must be positive");
}

PolicyEval OraclePolicy::evaluate(const Image&, const AttributeConfig& rendered_config) {
  const DeltaVector d = delta_between(target_, rendered_config, clip_);
  PolicyEval e;
  for (auto k : kinds_.kinds()) {
    DeltaDistribution dist;
    for (int g = 0; g < policy_groups(k); ++g) {
      std::vector<double> p(static_cast<std::size_t>(policy_classes(k, clip_)), 0.0);
      p[static_cast<std::size_t>(delta_class(k, d.at(k, g), clip_))] = 1.0;
      dist.groups.push_back(std::move(p));
    }
    e.kinds[index_of(k)] = std::move(dist);
  }
  return e;
}

std::vector<double> OraclePolicy::value_distribution(AttributeKind kind) {
  if (is_color(kind)) throw std::invalid_argument("value_distribution: color kinds have no categorical domain");
  std::vector<double> p(domain_values(kind).size(), 0.0);
  p[value_index(kind, std::get<int>(target_.get(kind)))] = 1.0;
  return p;
}

// ----------------------------------------------------------------------------
// Critics

double LearnedCritic::cost(const Image&, const AttributeConfig&, const PolicyEval& eval) {
  return 1.0 - eval.joint_p_zero();
}

OracleCritic::OracleCritic(const AttributeConfig& target, Mode mode, KindSet kinds)
    : target_(target), mode_(mode), kinds_(kinds) {}

double OracleCritic::cost(const Image&, const AttributeConfig& cfg, const PolicyEval&) {
  double c = 0.0;
  for (auto k : kinds_.kinds()) {
    const AttributeValue a = target_.get(k), b = cfg.get(k);
    if (mode_ == Mode::kBinary) {
      if (perceivable_class(k, a, b) != PerceivableClass::kSame) return 1.0;
      continue;
    }
    if (!is_comparable(k)) {
      c += a == b ? 0.0 : 1.0;
    } else if (is_color(k)) {
      const Rgb x = std::get<Rgb>(a), y = std::get<Rgb>(b);
      c += (std::abs(x.r - y.r) + std::abs(x.g - y.g) + std::abs(x.b - y.b)) / (3.0 * 255.0);
    } else {
      c += std::abs(std::get<int>(a) - std::get<int>(b)) / static_cast<double>(domain_span(k));
    }
  }
  return c;
}

std::string_view baseline_metric_name(BaselineMetric m) {
  switch (m) {
    case BaselineMetric::kPixel: return "pixel";
    case BaselineMetric::kSsim: return "ssim";
    case BaselineMetric::kWasserstein: return "wasserstein";
  }
  return "?";
}

BaselineMetric parse_baseline_metric(std::string_view s) {
  for (auto m : {BaselineMetric::kPixel, BaselineMetric::kSsim, BaselineMetric::kWasserstein}) {
    if (s == baseline_metric_name(m)) return m;
  }
  throw std::invalid_argument("unknown baseline metric '" + std::string(s) + "'");
}

ImageCritic::ImageCritic(BaselineMetric metric, const Image& original, const AttributeConfig& original_layout,
                         const RenderContext& ctx, bool center)
    : metric_(metric),
      original_(center ? center_component(original, original_layout, ctx) : original),
      ctx_(ctx),
      center_(center) {}

double ImageCritic::cost(const Image& rendered, const AttributeConfig& cfg, const PolicyEval&) {
  const Image r = center_ ? center_component(rendered, cfg, ctx_) : rendered;
  switch (metric_) {
    case BaselineMetric::kPixel: return pixel_mse(original_, r);
    case BaselineMetric::kSsim: return 1.0 - ssim(original_, r);
    case BaselineMetric::kWasserstein: return wasserstein(original_, r);
  }
  return 0.0;
}

// ----------------------------------------------------------------------------
// Operations

std::optional<AttributeKind> select_attribute(const PolicyEval& eval, const KindSet& refinable, Rng& rng) {
  std::vector<AttributeKind> kinds;
  std::vector<double> weights;
  double total = 0.0;
  for (auto k : refinable.kinds()) {
    if (!eval.kinds[index_of(k)]) continue;
    const double w = std::max(0.0, 1.0 - eval.p_zero(k));
    kinds.push_back(k);
    weights.push_back(w);
    total += w;
  }
  if (!(total > 0.0)) return std::nullopt;
  return kinds[rng.categorical(weights)];
}

namespace {

// Draws a class from `p` with class `excluded` removed; uniform over the rest
// when no mass is left.
std::size_t draw_excluding(std::vector<double> p, std::size_t excluded, Rng& rng) {
  p[excluded] = 0.0;
  double s = 0.0;
  for (double v : p) s += std::max(0.0, v);
  if (!(s > 0.0)) {
    std::fill(p.begin(), p.end(), 1.0);
    p[excluded] = 0.0;
  }
  return rng.categorical(p);
}

std::size_t draw(const std::vector<double>& p, Rng& rng) {
  double s = 0.0;
  for (double v : p) s += std::max(0.0, v);
  if (!(s > 0.0)) return static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(p.size()) - 1));
  return rng.categorical(p);
}

int sign(int v) { return (v > 0) - (v < 0); }

std::uint8_t add_channel(std::uint8_t v, int d) { return static_cast<std::uint8_t>(std::clamp(v + d, 0, 255)); }

}  // namespace

Proposal propose_change(DeltaPolicy& policy, const PolicyEval& eval, AttributeKind kind,
                        const AttributeConfig& current, Rng& rng) {
  Proposal p;
  p.kind = kind;
  const AttributeValue cur = current.get(kind);
  const int clip = policy.clip();

  if (!is_comparable(kind)) {
    const auto& members = domain_values(kind);
    const std::size_t here = value_index(kind, std::get<int>(cur));
    const std::size_t pick = draw_excluding(policy.value_distribution(kind), here, rng);
    p.value = members[pick];
    p.delta = {1, 0, 0};
    return p;
  }

  const auto& slot = eval.kinds[index_of(kind)];
  if (!slot) throw std::invalid_argument("propose_change: no policy output for " + std::string(kind_name(kind)));
  const DeltaDistribution& dist = *slot;
  const auto zero = static_cast<std::size_t>(clip);

  for (int attempt = 0; attempt < 2; ++attempt) {
    if (is_color(kind)) {
      std::array<int, 3> d{};
      for (int tries = 0; tries < 32 && d == std::array<int, 3>{}; ++tries) {
        for (int g = 0; g < 3; ++g) d[g] = class_delta(kind, static_cast<int>(draw(dist.groups[g], rng)), clip);
      }
      if (d == std::array<int, 3>{}) {
        // every channel insists on zero: move the least certain one
        int g = 0;
        for (int i = 1; i < 3; ++i) {
          if (dist.groups[i][zero] < dist.groups[g][zero]) g = i;
        }
        d[g] = class_delta(kind, static_cast<int>(draw_excluding(dist.groups[g], zero, rng)), clip);
      }
      const Rgb c = std::get<Rgb>(cur);
      const Rgb n{add_channel(c.r, d[0]), add_channel(c.g, d[1]), add_channel(c.b, d[2])};
      p.delta = d;
      p.saturated = std::any_of(d.begin(), d.end(), [&](int v) { return std::abs(v) == clip; });
      p.value = n;
      if (n != c) return p;
    } else {
      const int d = class_delta(kind, static_cast<int>(draw_excluding(dist.groups[0], zero, rng)), clip);
      const int v = std::get<int>(cur);
      int n = snap_to_domain(kind, v + d, sign(d));
      if (n == v) {
        // snapped back onto the current value (text size gap): take the next member
        const auto& m = domain_values(kind);
        const auto i = static_cast<std::ptrdiff_t>(value_index(kind, v)) + sign(d);
        if (i >= 0 && i < static_cast<std::ptrdiff_t>(m.size())) n = m[static_cast<std::size_t>(i)];
      }
      p.delta = {d, 0, 0};
      p.saturated = std::abs(d) == clip;
      p.value = n;
      if (n != v) return p;
    }
  }
  p.no_op = true;
  p.saturated = false;
  return p;
}

Decision accept_or_reject(DeltaPolicy& policy, Critic& critic, const AttributeConfig& proposed,
                          const RenderContext& ctx, double current_cost, bool saturated) {
  Decision d;
  try {
    d.image = render(proposed, ctx);
  } catch (const std::exception& e) {
    d.note = std::string("render failed: ") + e.what();
    d.cost = current_cost;
    return d;
  }
  d.eval = policy.evaluate(*d.image, proposed);
  d.cost = critic.cost(*d.image, proposed, *d.eval);
  d.accepted = saturated || d.cost < current_cost;
  if (saturated) d.note = "saturated";
  return d;
}

// ----------------------------------------------------------------------------
// Loop

namespace {

constexpr std::array kDpKinds = {AttributeKind::kBorderRadius, AttributeKind::kBorderWidth, AttributeKind::kPadding,
                                 AttributeKind::kShadow,       AttributeKind::kHeight,      AttributeKind::kWidth};

// Temporarily separates one of two equal dp-valued attributes by one step.
std::optional<AttributeConfig> separate_equal_values(const AttributeConfig& y, Rng& rng) {
  std::vector<AttributeKind> tied;
  for (auto a : kDpKinds) {
    for (auto b : kDpKinds) {
      if (a != b && y.get(a) == y.get(b)) {
        tied.push_back(a);
        break;
      }
    }
  }
  if (tied.empty()) return std::nullopt;
  const AttributeKind k = tied[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tied.size()) - 1))];
  const int v = std::get<int>(y.get(k));
  int step = rng.bernoulli(0.5) ? 1 : -1;
  int n = snap_to_domain(k, v + step, step);
  if (n == v) n = snap_to_domain(k, v - step, -step);
  if (n == v) return std::nullopt;
  AttributeConfig t = y;
  t.set(k, n);
  return t;
}

}  // namespace

json step_to_json(const TrajectoryStep& s) {
  json j{{"iteration", s.iteration},
         {"kind", s.kind ? json(std::string(kind_name(*s.kind))) : json(nullptr)},
         {"cost_before", s.cost_before},
         {"cost_after", s.cost_after},
         {"accepted", s.accepted},
         {"saturated", s.saturated},
         {"note", s.note},
         {"config", config_to_json(s.config)}};
  if (s.kind && is_color(*s.kind)) {
    j["delta"] = {s.delta[0], s.delta[1], s.delta[2]};
  } else {
    j["delta"] = s.delta[0];
  }
  return j;
}

RefineResult refine_loop(DeltaPolicy& policy, Critic& critic, const AttributeConfig& y0, const RenderContext& ctx,
                         const RefineSpec& spec) {
  if (spec.max_iters < 1) throw std::invalid_argument("refine: max_iters must be at least 1");
  if (spec.patience < 1) throw std::invalid_argument("refine: patience must be at least 1");
  const auto violations = validate(y0);
  if (!violations.empty()) throw DomainError("refine: initial config invalid: " + violations.front().message);

  Rng rng(spec.seed);
  AttributeConfig y = y0;
  Image img = render(y, ctx);
  PolicyEval eval = policy.evaluate(img, y);
  double cost = critic.cost(img, y, eval);

  RefineResult r;
  r.initial = y0;
  r.initial_cost = cost;
  r.config = y;
  r.cost = cost;
  r.stop_reason = "max_iters";
  int since_best = 0;

  for (int it = 0; it < spec.max_iters; ++it) {
    PolicyEval step_eval = eval;
    if (spec.same_value_heuristic) {
      if (auto tmp = separate_equal_values(y, rng)) {
        try {
          step_eval = policy.evaluate(render(*tmp, ctx), *tmp);
        } catch (const GeometryError&) {
          // the separated layout does not fit; keep the plain evaluation
        }
      }
    }

    TrajectoryStep step;
    step.iteration = it;
    step.cost_before = cost;
    const auto kind = select_attribute(step_eval, spec.refinable, rng);
    if (!kind) {
      step.note = "converged";
      step.cost_after = cost;
      step.config = y;
      r.trajectory.push_back(std::move(step));
      r.stop_reason = "converged";
      break;
    }
    step.kind = kind;
    const Proposal prop = propose_change(policy, step_eval, *kind, y, rng);
    step.delta = prop.delta;
    step.saturated = prop.saturated;
    if (prop.no_op) {
      step.note = "no-op";
    } else {
      AttributeConfig cand = y;
      cand.set(*kind, prop.value);
      Decision d = accept_or_reject(policy, critic, cand, ctx, cost, prop.saturated);
      step.note = d.note;
      if (d.accepted) {
        y = cand;
        img = std::move(*d.image);
        eval = std::move(*d.eval);
        cost = d.cost;
        step.accepted = true;
        ++r.accepted;
      }
    }
    step.cost_after = cost;
    step.config = y;
    // a layout that cannot be drawn was never evaluated, so it does not use up patience
    const bool unrenderable = step.note.rfind("render failed", 0) == 0;
    r.trajectory.push_back(std::move(step));

    if (cost < r.cost) {
      r.cost = cost;
      r.config = y;
      since_best = 0;
    } else if (!unrenderable && ++since_best >= spec.patience) {
      r.stop_reason = "patience";
      break;
    }
  }
  return r;
}

AttributeConfig randomize_kinds(const AttributeConfig& base, const KindSet& kinds, Rng& rng,
                                const SamplingBounds& bounds) {
  if (kinds.empty()) return base;
  return sample_config(rng, kinds, &base, bounds);
}

AttributeConfig fit_to_context(AttributeConfig c, const RenderContext& ctx) {
  const int room_w = ctx.canvas_width - ctx.x_pos;
  if (c.width > room_w) c.width = snap_to_domain(AttributeKind::kWidth, room_w, -1);
  while (!fits(c, ctx) && c.shadow > 0) c.shadow = snap_to_domain(AttributeKind::kShadow, c.shadow - 1, -1);
  const int room_h = ctx.canvas_height - ctx.y_pos - shadow_offset(c.shadow);
  if (c.height > room_h) c.height = snap_to_domain(AttributeKind::kHeight, room_h, -1);
  return c;
}

int oracle_iteration_bound(const KindSet& kinds, int clip, int patience) {
  int n = patience;
  for (auto k : kinds.kinds()) {
    n += is_comparable(k) ? (domain_span(k) + clip - 1) / clip : 1;
  }
  return n;
}

void write_trajectory(const RefineResult& r, std::ostream& out) {
  for (const auto& s : r.trajectory) out << step_to_json(s).dump() << "\n";
}

}  // namespace uiattr
