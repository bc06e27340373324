#include "doctest.h"

#include <algorithm>
#include <sstream>

#include "oracles.hpp"
#include "uiattr/eval.hpp"

using namespace uiattr;
using K = AttributeKind;

namespace {

std::vector<AttributeConfig> random_configs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AttributeConfig> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_config(rng, KindSet::all(), nullptr));
  return out;
}

// independent count with the oracle threshold table
std::array<std::size_t, 3> oracle_counts(K k, const std::vector<AttributeConfig>& p,
                                         const std::vector<AttributeConfig>& l) {
  std::array<std::size_t, 3> c{};
  if (!is_comparable(k)) {
    for (std::size_t i = 0; i < p.size(); ++i) ++c[p[i].get(k) == l[i].get(k) ? 0 : 2];
    return c;
  }
  for (const auto& row : oracle::threshold_table()) {
    if (row.kind != k) continue;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double eps;
      if (is_color(k)) {
        eps = oracle::delta_e(std::get<Rgb>(p[i].get(k)), std::get<Rgb>(l[i].get(k)));
      } else {
        eps = oracle::numeric_distance(k, std::get<int>(p[i].get(k)), std::get<int>(l[i].get(k)));
      }
      ++c[static_cast<std::size_t>(oracle::classify(eps, row.same, row.similar))];
    }
  }
  return c;
}

}  // namespace

TEST_CASE("perfect predictions") {
  const auto labels = random_configs(30, 1);
  const EvalReport r = accuracy(labels, labels);
  for (auto k : kAllKinds) CHECK(r.accuracy(k) == 1.0);
  CHECK(r.overall() == 1.0);
  CHECK(r.samples == 30);
}

TEST_CASE("hand-counted fixture") {
  // ten text_size predictions: labels 14, offsets 0,0,1,-1,2,3,5,0,2 and one 0
  std::vector<AttributeConfig> labels(10, canonical_config()), preds = labels;
  const int off[9] = {0, 0, 1, -1, 2, 3, 5, 0, 2};
  for (int i = 0; i < 9; ++i) preds[static_cast<std::size_t>(i)].text_size += off[i];
  preds[9].text_size = 0;
  const EvalReport r = accuracy(preds, labels, KindSet{K::kTextSize}, "fixture");
  const auto& c = r.counts[index_of(K::kTextSize)];
  CHECK(c[0] == 5);  // 0,0,1,-1,0
  CHECK(c[1] == 2);  // 2,2
  CHECK(c[2] == 3);  // 3,5,0
  CHECK(r.accuracy(K::kTextSize) == doctest::Approx(0.5));
  CHECK(r.overall() == doctest::Approx(0.5));
  // kinds outside the report do not count
  CHECK(r.counts[index_of(K::kWidth)] == std::array<std::size_t, 3>{});
}

TEST_CASE("agrees with the oracle on random pairs") {
  const auto preds = random_configs(400, 2), labels = random_configs(400, 3);
  const EvalReport r = accuracy(preds, labels);
  double mean = 0.0;
  for (auto k : kAllKinds) {
    CHECK(r.counts[index_of(k)] == oracle_counts(k, preds, labels));
    mean += r.accuracy(k);
  }
  CHECK(r.overall() == doctest::Approx(mean / 12.0).epsilon(1e-12));
}

TEST_CASE("permutation invariance") {
  auto preds = random_configs(50, 4), labels = random_configs(50, 5);
  for (std::size_t i = 0; i < 50; i += 3) labels[i] = preds[i];
  const EvalReport a = accuracy(preds, labels);
  std::vector<std::size_t> idx(50);
  for (std::size_t i = 0; i < 50; ++i) idx[i] = (i * 17) % 50;
  std::vector<AttributeConfig> p2, l2;
  for (auto i : idx) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  const EvalReport b = accuracy(p2, l2);
  CHECK(a.counts == b.counts);
  CHECK_THROWS_AS(accuracy(preds, std::vector<AttributeConfig>(3)), EvalError);
}

TEST_CASE("serialization") {
  const auto preds = random_configs(20, 6), labels = random_configs(20, 7);
  EvalReport a = accuracy(preds, labels, default_refinable_kinds(), "a");
  a.meta = {{"note", "x"}};
  EvalReport b = accuracy(labels, labels, KindSet{K::kShadow}, "b");
  std::stringstream ss;
  write_reports({a, b}, ss);
  const auto back = read_reports(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == a);
  CHECK(back[1] == b);
  CHECK(reports_checksum(back) == reports_checksum({a, b}));
  CHECK(reports_checksum({a}) != reports_checksum({b}));

  nlohmann::json j = report_to_json(b);
  j["kinds"]["shadow"]["same"] = 3;
  CHECK_THROWS_AS(report_from_json(j), EvalError);
  j = report_to_json(b);
  j["kinds"]["shade"] = j["kinds"]["shadow"];
  CHECK_THROWS_AS(report_from_json(j), EvalError);
  std::istringstream junk("{not json\n");
  CHECK_THROWS_AS(read_reports(junk), EvalError);
}

TEST_CASE("table") {
  const auto labels = random_configs(10, 8);
  const EvalReport a = accuracy(labels, labels, KindSet{K::kShadow, K::kWidth}, "predicted");
  const EvalReport b = accuracy(random_configs(10, 9), labels, KindSet{K::kShadow}, "refined");
  const std::string t = format_table({a, b});
  CHECK(t.find("predicted") != std::string::npos);
  CHECK(t.find("shadow") != std::string::npos);
  CHECK(t.find("100.0%") != std::string::npos);
  CHECK(t.find("border_width") == std::string::npos);
  const auto lines = std::count(t.begin(), t.end(), '\n');
  CHECK(lines == 5);  // header, two kinds, overall, samples
}

TEST_CASE("off-center crop keeps the component") {
  RenderContext ctx;
  ctx.canvas_width = 160;
  ctx.canvas_height = 80;
  ctx.x_pos = 30;
  ctx.y_pos = 12;
  const AttributeConfig c = canonical_config();
  const Image img = render(c, ctx);
  const Box fp = footprint_box(c, ctx);
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    const Image crop = off_center_crop(img, c, ctx, rng);
    CHECK(crop.width() >= fp.w);
    CHECK(crop.height() >= fp.h);
    CHECK(crop.width() <= 160);
  }
}
