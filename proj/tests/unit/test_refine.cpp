#include "doctest.h"

#include <cmath>
#include <sstream>

#include "uiattr/refine.hpp"

using namespace uiattr;
using K = AttributeKind;

namespace {

// p_zero = z for a single-group distribution over 2c+1 classes
DeltaDistribution with_zero(double z, int clip = 5) {
  DeltaDistribution d;
  std::vector<double> p(static_cast<std::size_t>(2 * clip + 1), (1.0 - z) / (2 * clip));
  p[static_cast<std::size_t>(clip)] = z;
  d.groups.push_back(p);
  return d;
}

// Fixed distributions, regardless of the rendering
class FixedPolicy final : public DeltaPolicy {
 public:
  explicit FixedPolicy(PolicyEval e, int clip = 5) : e_(std::move(e)), clip_(clip) {}
  int clip() const override { return clip_; }
  KindSet kinds() const override {
    KindSet s;
    for (auto k : kAllKinds) {
      if (e_.kinds[index_of(k)]) s.insert(k);
    }
    return s;
  }
  PolicyEval evaluate(const Image&, const AttributeConfig&) override { return e_; }
  std::vector<double> value_distribution(AttributeKind kind) override {
    return std::vector<double>(domain_values(kind).size(), 1.0);
  }

 private:
  PolicyEval e_;
  int clip_;
};

RenderContext roomy() {
  RenderContext ctx;
  ctx.canvas_width = 200;
  ctx.canvas_height = 90;
  ctx.x_pos = 10;
  ctx.y_pos = 8;
  return ctx;
}

RefineResult run_oracle(const AttributeConfig& truth, const AttributeConfig& y0, int max_iters, std::uint64_t seed = 1,
                        KindSet refinable = default_refinable_kinds()) {
  OraclePolicy pol(truth, 5);
  OracleCritic cri(truth, OracleCritic::Mode::kGraded);
  RefineSpec spec;
  spec.max_iters = max_iters;
  spec.refinable = refinable;
  spec.seed = seed;
  return refine_loop(pol, cri, y0, roomy(), spec);
}

}  // namespace

TEST_CASE("learned cost") {
  LearnedCritic c;
  const Image img;
  const AttributeConfig cfg = canonical_config();
  PolicyEval all_sure, one_zero, nines;
  for (auto k : kAllKinds) {
    all_sure.kinds[index_of(k)] = with_zero(1.0);
    one_zero.kinds[index_of(k)] = with_zero(1.0);
    nines.kinds[index_of(k)] = with_zero(0.9);
  }
  one_zero.kinds[index_of(K::kShadow)] = with_zero(0.0);
  CHECK(c.cost(img, cfg, all_sure) == doctest::Approx(0.0));
  CHECK(c.cost(img, cfg, one_zero) == doctest::Approx(1.0));
  CHECK(c.cost(img, cfg, nines) == doctest::Approx(1.0 - std::pow(0.9, 12)));
  CHECK(c.cost(img, cfg, nines) == doctest::Approx(0.7176).epsilon(1e-3));

  // colors: product over the channel groups
  DeltaDistribution col;
  for (int g = 0; g < 3; ++g) col.groups.push_back(with_zero(0.5).groups[0]);
  CHECK(col.p_zero() == doctest::Approx(0.125));
}

TEST_CASE("attribute selection follows 1 - p_zero") {
  PolicyEval e;
  e.kinds[index_of(K::kShadow)] = with_zero(0.8);
  e.kinds[index_of(K::kHeight)] = with_zero(0.4);
  Rng rng(3);
  int shadow = 0, height = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto k = select_attribute(e, default_refinable_kinds(), rng);
    REQUIRE(k);
    if (*k == K::kShadow) ++shadow;
    if (*k == K::kHeight) ++height;
  }
  CHECK(shadow + height == 10000);
  const double ratio = static_cast<double>(height) / shadow;
  CHECK(ratio == doctest::Approx(3.0).epsilon(0.05));

  SUBCASE("single candidate") {
    PolicyEval one;
    one.kinds[index_of(K::kWidth)] = with_zero(0.7);
    one.kinds[index_of(K::kTextSize)] = with_zero(1.0);
    for (int i = 0; i < 50; ++i) CHECK(select_attribute(one, default_refinable_kinds(), rng) == K::kWidth);
  }
  SUBCASE("uniform when equal") {
    PolicyEval eq;
    for (auto k : {K::kWidth, K::kHeight, K::kShadow}) eq.kinds[index_of(k)] = with_zero(0.5);
    std::array<int, kNumKinds> n{};
    for (int i = 0; i < 9000; ++i) ++n[index_of(*select_attribute(eq, default_refinable_kinds(), rng))];
    for (auto k : {K::kWidth, K::kHeight, K::kShadow}) CHECK(std::abs(n[index_of(k)] - 3000) < 200);
  }
  SUBCASE("nothing to fix") {
    PolicyEval done;
    done.kinds[index_of(K::kWidth)] = with_zero(1.0);
    CHECK_FALSE(select_attribute(done, default_refinable_kinds(), rng));
    // kinds outside the refinable set are never picked
    done.kinds[index_of(K::kBorderWidth)] = with_zero(0.0);
    CHECK_FALSE(select_attribute(done, default_refinable_kinds(), rng));
  }
}

TEST_CASE("proposals") {
  Rng rng(5);
  SUBCASE("clamped at the domain end") {
    PolicyEval e;
    DeltaDistribution d;
    std::vector<double> p(11, 0.0);
    p[10] = 1.0;  // +5
    d.groups.push_back(p);
    e.kinds[index_of(K::kBorderWidth)] = d;
    FixedPolicy pol(e);
    AttributeConfig y = canonical_config();
    y.border_width = 10;
    const Proposal pr = propose_change(pol, e, K::kBorderWidth, y, rng);
    CHECK(std::get<int>(pr.value) == 12);
    CHECK(pr.delta[0] == 5);
    CHECK(pr.saturated);
    CHECK_FALSE(pr.no_op);
  }
  SUBCASE("zero delta is never drawn") {
    PolicyEval e;
    e.kinds[index_of(K::kHeight)] = with_zero(0.95);
    FixedPolicy pol(e);
    const AttributeConfig y = canonical_config();
    for (int i = 0; i < 200; ++i) {
      const Proposal pr = propose_change(pol, e, K::kHeight, y, rng);
      CHECK(pr.delta[0] != 0);
      CHECK(std::get<int>(pr.value) != y.height);
    }
  }
  SUBCASE("uncomparable kinds move to another value") {
    PolicyEval e;
    FixedPolicy pol(e);
    const AttributeConfig y = canonical_config();
    for (int i = 0; i < 100; ++i) {
      const Proposal g = propose_change(pol, e, K::kTextGravity, y, rng);
      CHECK(std::get<int>(g.value) != static_cast<int>(y.text_gravity));
      const Proposal f = propose_change(pol, e, K::kTextFont, y, rng);
      CHECK(std::get<int>(f.value) != static_cast<int>(y.text_font));
    }
  }
  SUBCASE("text size skips the gap above zero") {
    PolicyEval e;
    DeltaDistribution d;
    std::vector<double> p(11, 0.0);
    p[6] = 1.0;  // +1
    d.groups.push_back(p);
    e.kinds[index_of(K::kTextSize)] = d;
    FixedPolicy pol(e);
    AttributeConfig y = canonical_config();
    y.text_size = 0;
    CHECK(std::get<int>(propose_change(pol, e, K::kTextSize, y, rng).value) == 10);
  }
  SUBCASE("no-op at the boundary") {
    PolicyEval e;
    DeltaDistribution d;
    std::vector<double> p(11, 0.0);
    p[0] = 1.0;  // -5
    d.groups.push_back(p);
    e.kinds[index_of(K::kShadow)] = d;
    FixedPolicy pol(e);
    AttributeConfig y = canonical_config();
    y.shadow = 0;
    const Proposal pr = propose_change(pol, e, K::kShadow, y, rng);
    CHECK(pr.no_op);
    CHECK_FALSE(pr.saturated);
  }
}

TEST_CASE("accept or reject") {
  const AttributeConfig truth = canonical_config();
  AttributeConfig y = truth;
  y.height = 50;
  OraclePolicy pol(truth, 5);
  OracleCritic bin(truth, OracleCritic::Mode::kBinary);
  const RenderContext ctx = roomy();
  const double c0 = bin.cost(Image(), y, PolicyEval());
  CHECK(c0 == 1.0);

  // unchanged proposal: not lower
  CHECK_FALSE(accept_or_reject(pol, bin, y, ctx, c0, false).accepted);
  // any saturated step is taken
  AttributeConfig worse = y;
  worse.height = 55;
  const Decision s = accept_or_reject(pol, bin, worse, ctx, c0, true);
  CHECK(s.accepted);
  CHECK(s.note == "saturated");
  // fixing the last wrong attribute drops the binary cost to 0
  const Decision fix = accept_or_reject(pol, bin, truth, ctx, c0, false);
  CHECK(fix.accepted);
  CHECK(fix.cost == 0.0);
  REQUIRE(fix.image);
  CHECK(fix.image->width() == ctx.canvas_width);
  // a layout that does not fit is rejected with a reason
  AttributeConfig huge = y;
  huge.width = 275;
  const Decision bad = accept_or_reject(pol, bin, huge, ctx, c0, true);
  CHECK_FALSE(bad.accepted);
  CHECK(bad.note.find("render failed") == 0);
}

TEST_CASE("refinement with oracle guidance") {
  const AttributeConfig truth = canonical_config();

  SUBCASE("already correct") {
    const RefineResult r = run_oracle(truth, truth, 8);
    CHECK(r.config == truth);
    CHECK(r.accepted == 0);
    CHECK(r.stop_reason == "converged");
  }
  SUBCASE("one attribute off by 3") {
    AttributeConfig y = truth;
    y.shadow = truth.shadow + 3;
    const RefineResult r = run_oracle(truth, y, 8);
    CHECK(r.config == truth);
    CHECK(r.accepted <= 8);
  }
  SUBCASE("off by more than the clip") {
    AttributeConfig y = truth;
    y.height = truth.height + 12;
    const RefineResult r = run_oracle(truth, y, 100);
    CHECK(r.config == truth);
    int sat = 0;
    for (const auto& s : r.trajectory) sat += s.accepted && s.saturated;
    CHECK(r.accepted >= 3);
    CHECK(sat >= 2);
  }
  SUBCASE("several attributes") {
    AttributeConfig y = truth;
    y.width = 140;
    y.text_size = 0;
    y.text_gravity = TextGravity::kBottom;
    y.text_font = TextFont::kThin;
    const int bound = oracle_iteration_bound(default_refinable_kinds(), 5, 4);
    const RefineResult r = run_oracle(truth, y, bound, 9);
    CHECK(r.config == truth);
    CHECK(static_cast<int>(r.trajectory.size()) <= bound);
  }
}

TEST_CASE("returned config has the best cost seen") {
  // noisy policy: uniform deltas on every refinable kind
  PolicyEval e;
  for (auto k : default_refinable_kinds().kinds()) {
    if (is_comparable(k)) e.kinds[index_of(k)] = with_zero(0.1);
  }
  FixedPolicy pol(e);
  const AttributeConfig truth = canonical_config();
  OracleCritic cri(truth, OracleCritic::Mode::kGraded);
  AttributeConfig y = truth;
  y.width = 120;
  y.shadow = 8;
  RefineSpec spec;
  spec.max_iters = 40;
  spec.patience = 10;
  spec.seed = 4;
  const RefineResult r = refine_loop(pol, cri, y, roomy(), spec);
  double best = r.initial_cost;
  for (const auto& s : r.trajectory) best = std::min(best, s.cost_after);
  CHECK(r.cost == doctest::Approx(best));
  CHECK(cri.cost(Image(), r.config, PolicyEval()) == doctest::Approx(r.cost));
  CHECK(r.cost <= r.initial_cost);

  const RefineResult again = refine_loop(pol, cri, y, roomy(), spec);
  CHECK(again.config == r.config);
  CHECK(again.trajectory.size() == r.trajectory.size());

  std::ostringstream os;
  write_trajectory(r, os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("cost_after"));
    ++n;
  }
  CHECK(n == r.trajectory.size());
}

TEST_CASE("same-value heuristic keeps refinement correct") {
  const AttributeConfig truth = canonical_config();  // padding == border_width == shadow
  AttributeConfig y = truth;
  y.height = 30;
  OraclePolicy pol(truth, 5);
  OracleCritic cri(truth, OracleCritic::Mode::kGraded);
  RefineSpec spec;
  spec.max_iters = 20;
  spec.same_value_heuristic = true;
  const RefineResult r = refine_loop(pol, cri, y, roomy(), spec);
  CHECK(r.config == truth);
}

TEST_CASE("fitting and bounds") {
  RenderContext ctx;
  ctx.canvas_width = 96;
  ctx.canvas_height = 48;
  ctx.x_pos = 6;
  ctx.y_pos = 4;
  AttributeConfig c = canonical_config();
  c.width = 200;
  c.height = 60;
  c.shadow = 12;
  const AttributeConfig f = fit_to_context(c, ctx);
  CHECK(fits(f, ctx));
  CHECK(f.width <= 90);
  CHECK(validate(f).empty());
  CHECK(fit_to_context(canonical_config(), roomy()) == canonical_config());

  CHECK(oracle_iteration_bound(default_refinable_kinds(), 5, 4) == 73);
  CHECK(oracle_iteration_bound(KindSet{K::kHeight}, 5, 0) == 8);

  Rng rng(2);
  const AttributeConfig r = randomize_kinds(canonical_config(), KindSet{K::kShadow, K::kWidth}, rng);
  AttributeConfig same = r;
  same.shadow = canonical_config().shadow;
  same.width = canonical_config().width;
  CHECK(same == canonical_config());
}

TEST_CASE("image critic") {
  const RenderContext ctx = roomy();
  const AttributeConfig truth = canonical_config();
  const Image orig = render(truth, ctx);
  for (auto m : {BaselineMetric::kPixel, BaselineMetric::kSsim, BaselineMetric::kWasserstein}) {
    ImageCritic c(m, orig, truth, ctx);
    CHECK(c.cost(orig, truth, PolicyEval()) == doctest::Approx(0.0).epsilon(1e-12));
    AttributeConfig y = truth;
    y.main_color = Rgb{10, 200, 30};
    CHECK(c.cost(render(y, ctx), y, PolicyEval()) > 0.0);
    CHECK(parse_baseline_metric(baseline_metric_name(m)) == m);
  }
}

TEST_CASE("unrenderable proposals do not use up patience") {
  PolicyEval e;
  DeltaDistribution d;
  std::vector<double> p(11, 0.0);
  p[10] = 1.0;
  d.groups.push_back(p);
  e.kinds[index_of(K::kShadow)] = d;
  FixedPolicy pol(e);
  RenderContext ctx;
  ctx.canvas_width = 100;
  ctx.canvas_height = 48;
  const AttributeConfig y = [] {
    AttributeConfig c = canonical_config();
    c.shadow = 0;
    return c;
  }();
  ctx.y_pos = ctx.canvas_height - y.height;  // no room below for a shadow
  LearnedCritic cri;
  RefineSpec spec;
  spec.max_iters = 12;
  spec.patience = 2;
  const RefineResult r = refine_loop(pol, cri, y, ctx, spec);
  CHECK(r.stop_reason == "max_iters");
  CHECK(r.trajectory.size() == 12);
  CHECK(r.config == y);
}
