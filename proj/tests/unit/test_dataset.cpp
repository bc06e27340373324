#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "uiattr/dataset.hpp"
#include "uiattr/refine.hpp"

using namespace uiattr;
using K = AttributeKind;
namespace fs = std::filesystem;

namespace {

GenOptions desk() {
  GenOptions o;
  o.bounds.set(K::kHeight, 20, 36);
  o.bounds.set(K::kWidth, 25, 72);
  return o;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("prediction samples re-render from their labels") {
  const auto one = gen_prediction_dataset(1, desk(), 3);
  REQUIRE(one.samples.size() == 1);
  CHECK(render(one.samples[0].label, one.samples[0].ctx) == one.samples[0].image);

  const auto ds = gen_prediction_dataset(100, desk(), 4);
  double shared = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    CHECK(validate(s.label).empty());
    CHECK(render(s.label, s.ctx) == s.image);
    CHECK(fits(s.label, s.ctx));
    if (i == 0) continue;
    for (auto k : kAllKinds) shared += s.label.get(k) == ds.samples[i - 1].label.get(k);
  }
  CHECK(shared / 99.0 >= 9.0);
}

TEST_CASE("generation is deterministic and seed dependent") {
  GenOptions o = desk();
  o.jobs = 2;
  const auto a = gen_prediction_dataset(20, o, 5);
  o.jobs = 1;
  const auto b = gen_prediction_dataset(20, o, 5);
  const auto c = gen_prediction_dataset(20, o, 6);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].label == b.samples[i].label);
  }
  bool differs = false;
  for (std::size_t i = 0; i < 20; ++i) differs = differs || !(a.samples[i].label == c.samples[i].label);
  CHECK(differs);
}

TEST_CASE("full resample draws fresh labels") {
  GenOptions o = desk();
  o.subset_size = 12;
  const auto ds = gen_prediction_dataset(50, o, 8);
  double shared = 0;
  for (std::size_t i = 1; i < ds.samples.size(); ++i) {
    for (auto k : {K::kBorderColor, K::kMainColor, K::kTextColor, K::kWidth, K::kPadding}) {
      shared += ds.samples[i].label.get(k) == ds.samples[i - 1].label.get(k);
    }
  }
  CHECK(shared / 49.0 < 1.0);
}

TEST_CASE("jitter keeps the component on the canvas") {
  Rng rng(3);
  for (auto mode : {JitterSpec::Mode::kCenter, JitterSpec::Mode::kTr1, JitterSpec::Mode::kTr2}) {
    JitterSpec j;
    j.mode = mode;
    for (int i = 0; i < 200; ++i) {
      AttributeConfig c = sample_config(rng, KindSet::all(), nullptr, desk().bounds);
      const auto [x, y] = place_component(c, 96, 48, j, rng);
      RenderContext ctx;
      ctx.x_pos = x;
      ctx.y_pos = y;
      CHECK(fits(c, ctx));
      if (mode == JitterSpec::Mode::kCenter) CHECK(x == (96 - c.width) / 2);
    }
  }
}

TEST_CASE("screenshot mode needs a pool") {
  GenOptions o = desk();
  o.background = BackgroundMode::kScreenshot;
  CHECK_THROWS_AS(gen_prediction_dataset(3, o, 1), DatasetError);
  o.screenshots = synthetic_screenshots(3, 96, 48, 2);
  CHECK(gen_prediction_dataset(3, o, 1).samples.size() == 3);
}

TEST_CASE("delta labels") {
  AttributeConfig a = canonical_config(), b = a;
  CHECK(delta_between(a, b, 5).is_zero());
  a.border_width = 2;
  b.border_width = 10;
  CHECK(delta_between(a, b, 5).at(K::kBorderWidth) == -5);
  CHECK(delta_between(b, a, 5).at(K::kBorderWidth) == 5);
  a = b;
  a.text_gravity = TextGravity::kLeft;
  b.text_gravity = TextGravity::kCenter;
  CHECK(delta_between(a, b, 5).at(K::kTextGravity) == 1);
  b.main_color = {10, 200, 30};
  a.main_color = {12, 100, 30};
  const auto d = delta_between(a, b, 5);
  CHECK(d.at(K::kMainColor, 0) == 2);
  CHECK(d.at(K::kMainColor, 1) == -5);
  CHECK(d.at(K::kMainColor, 2) == 0);
  // round radius sits one code above 20
  a.border_radius = kRoundRadius;
  b.border_radius = 18;
  CHECK(delta_between(a, b, 5).at(K::kBorderRadius) == 3);
  CHECK(delta_from_json(delta_to_json(d)) == d);
}

TEST_CASE("delta dataset invariants") {
  DeltaOptions o;
  o.gen = desk();
  const auto ds = gen_delta_dataset(60, o, 9);
  REQUIRE(ds.samples.size() == 60);
  for (const auto& s : ds.samples) {
    CHECK(s.original == render(s.original_config, s.ctx));
    CHECK(s.rendered == render(s.rendered_config, s.ctx));
    CHECK(s.labels == delta_between(s.original_config, s.rendered_config, 5));
    for (auto k : kAllKinds) {
      for (int ch = 0; ch < delta_channels(k); ++ch) {
        CHECK(std::abs(s.labels.at(k, ch)) <= (is_comparable(k) ? 5 : 1));
      }
    }
    // swapping the pair negates comparable labels and keeps flags
    const auto back = delta_between(s.rendered_config, s.original_config, 5);
    for (auto k : kAllKinds) {
      for (int ch = 0; ch < delta_channels(k); ++ch) {
        CHECK(back.at(k, ch) == (is_comparable(k) ? -s.labels.at(k, ch) : s.labels.at(k, ch)));
      }
    }
  }
}

TEST_CASE("dataset persistence") {
  TempDir dir("uiattr_dataset_test");
  const auto ds = gen_prediction_dataset(12, desk(), 2);
  save_dataset(ds, dir.path / "p");
  const auto back = load_prediction_dataset(dir.path / "p", 1.0);
  REQUIRE(back.samples.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(back.samples[i].image == ds.samples[i].image);
    CHECK(back.samples[i].label == ds.samples[i].label);
  }
  const auto digest = manifest_digest(dir.path / "p");
  save_dataset(gen_prediction_dataset(12, desk(), 2), dir.path / "q");
  CHECK(manifest_digest(dir.path / "q") == digest);

  DeltaOptions o;
  o.gen = desk();
  const auto dd = gen_delta_dataset(8, o, 3);
  save_dataset(dd, dir.path / "d");
  const auto dback = load_delta_dataset(dir.path / "d", 1.0);
  REQUIRE(dback.samples.size() == 8);
  CHECK(dback.samples[3].labels == dd.samples[3].labels);
  CHECK(dback.samples[3].rendered == dd.samples[3].rendered);

  // a label edit no longer matches its image
  {
    std::ifstream in(dir.path / "p" / "manifest.jsonl");
    std::string all((std::istreambuf_iterator<char>(in)), {});
    const auto pos = all.find("\"border_width\":");
    REQUIRE(pos != std::string::npos);
    const auto v = pos + std::string("\"border_width\":").size();
    all[v] = all[v] == '1' ? '2' : '1';
    std::ofstream out(dir.path / "p" / "manifest.jsonl", std::ios::trunc);
    out << all;
  }
  CHECK_THROWS_AS(load_prediction_dataset(dir.path / "p", 1.0), DatasetError);
  CHECK_THROWS_AS(load_prediction_dataset(dir.path / "missing"), DatasetError);
}

TEST_CASE("dagger aggregation") {
  DeltaOptions o;
  o.gen = desk();
  const auto base = gen_delta_dataset(10, o, 1);
  const auto targets = gen_prediction_dataset(6, desk(), 2).samples;

  const StateVisitor nothing = [](const PredictionSample& t, Rng&) { return std::vector<AttributeConfig>{t.label}; };
  const auto same = dagger_augment(nothing, targets, base, 0, 6, 3);
  CHECK(same.samples.size() == base.samples.size());

  // oracle visitor: every accepted state is closer to the target
  const KindSet kinds = default_refinable_kinds();
  const StateVisitor oracle = [&](const PredictionSample& t, Rng& rng) {
    AttributeConfig y0 = randomize_kinds(t.label, kinds, rng, desk().bounds);
    y0 = fit_to_context(y0, t.ctx);
    OraclePolicy pol(t.label, 5, kinds);
    OracleCritic critic(t.label, OracleCritic::Mode::kGraded, kinds);
    RefineSpec spec;
    spec.max_iters = 60;
    spec.seed = rng.next();
    const RefineResult r = refine_loop(pol, critic, y0, t.ctx, spec);
    std::vector<AttributeConfig> states{y0};
    for (const auto& s : r.trajectory) {
      if (s.accepted) states.push_back(s.config);
    }
    return states;
  };
  int rounds_seen = 0;
  const auto agg = dagger_augment(oracle, targets, base, 2, 3, 4,
                                  [&](const DeltaDataset&, int) { ++rounds_seen; });
  CHECK(rounds_seen == 2);
  CHECK(agg.samples.size() > base.samples.size());
  for (std::size_t i = base.samples.size(); i < agg.samples.size(); ++i) {
    const auto& s = agg.samples[i];
    CHECK(s.labels == delta_between(s.original_config, s.rendered_config, 5));
  }
  for (const auto& t : targets) {
    Rng rng(7);
    const auto states = oracle(t, rng);
    for (std::size_t i = 1; i < states.size(); ++i) {
      CHECK(delta_between(t.label, states[i], 1000).total_magnitude() <
            delta_between(t.label, states[i - 1], 1000).total_magnitude());
    }
  }
}
