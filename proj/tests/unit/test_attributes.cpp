#include "doctest.h"

#include <set>

#include "oracles.hpp"
#include "uiattr/attributes.hpp"
#include "uiattr/color.hpp"

using namespace uiattr;
using K = AttributeKind;

TEST_CASE("twelve kinds, two uncomparable") {
  int uncomparable = 0;
  for (auto k : kAllKinds) {
    if (!is_comparable(k)) ++uncomparable;
    CHECK(parse_kind(kind_name(k)) == k);
  }
  CHECK(kAllKinds.size() == 12);
  CHECK(uncomparable == 2);
  CHECK_FALSE(is_comparable(K::kTextFont));
  CHECK_FALSE(is_comparable(K::kTextGravity));
  CHECK_FALSE(parse_kind("corner").has_value());
}

TEST_CASE("domains") {
  CHECK(domain_values(K::kBorderWidth).size() == 13);
  CHECK(domain_values(K::kBorderRadius).size() == 22);
  CHECK(domain_values(K::kBorderRadius).back() == kRoundRadius);
  CHECK(domain_values(K::kPadding).size() == 44);
  CHECK(domain_values(K::kShadow).size() == 13);
  CHECK(domain_values(K::kTextSize).size() == 22);
  CHECK(domain_values(K::kTextSize).front() == 0);
  CHECK(domain_values(K::kTextSize)[1] == 10);
  CHECK(domain_values(K::kHeight).size() == 41);
  CHECK(domain_values(K::kWidth).size() == 251);
  CHECK(domain_values(K::kTextFont).size() == 5);
  CHECK(domain_values(K::kTextGravity).size() == 5);
  CHECK(in_domain(K::kMainColor, Rgb{255, 0, 7}));
  CHECK_FALSE(in_domain(K::kBorderRadius, 21 + 1));
  CHECK_FALSE(in_domain(K::kTextSize, 5));
}

TEST_CASE("validate") {
  AttributeConfig lo;
  for (auto k : kAllKinds) {
    if (!is_color(k)) lo.set(k, domain_values(k).front());
  }
  CHECK(validate(lo).empty());

  AttributeConfig c = canonical_config();
  CHECK(validate(c).empty());
  c.border_width = 13;
  auto v = validate(c);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == K::kBorderWidth);

  c = canonical_config();
  c.text_size = 5;
  v = validate(c);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == K::kTextSize);

  c.width = 24;
  c.height = 61;
  CHECK(validate(c).size() == 3);
}

TEST_CASE("distance") {
  CHECK(distance(K::kBorderWidth, 3, 3) == 0.0);
  CHECK(distance(K::kBorderWidth, 3, 7) == 4.0);
  CHECK(distance(K::kTextGravity, static_cast<int>(TextGravity::kLeft), static_cast<int>(TextGravity::kRight)) == 1.0);
  CHECK(distance(K::kTextFont, 2, 2) == 0.0);
  CHECK(distance(K::kMainColor, Rgb{255, 255, 255}, Rgb{0, 0, 0}) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(std::isinf(distance(K::kBorderRadius, kRoundRadius, 20)));
  CHECK(distance(K::kBorderRadius, kRoundRadius, kRoundRadius) == 0.0);
  CHECK_THROWS_AS(distance(K::kBorderWidth, 3, 14), DomainError);
}

TEST_CASE("lab conversion matches the reference") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Rgb a{static_cast<std::uint8_t>(rng.uniform_int(0, 255)), static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                static_cast<std::uint8_t>(rng.uniform_int(0, 255))};
    const Rgb b{static_cast<std::uint8_t>(rng.uniform_int(0, 255)), static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                static_cast<std::uint8_t>(rng.uniform_int(0, 255))};
    CHECK(std::abs(delta_e76(a, b) - oracle::delta_e(a, b)) < 1e-9);
  }
  const Lab w = srgb_to_lab({255, 255, 255});
  CHECK(w.l == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(std::abs(w.a) < 1e-9);
  CHECK(std::abs(w.b) < 1e-9);
}

TEST_CASE("perceivable classes") {
  CHECK(perceivable_class(K::kTextSize, 12, 13) == PerceivableClass::kSame);
  CHECK(perceivable_class(K::kShadow, 2, 4) == PerceivableClass::kSimilar);
  CHECK(perceivable_class(K::kTextFont, static_cast<int>(TextFont::kRegular), static_cast<int>(TextFont::kBolt)) ==
        PerceivableClass::kDifferent);
  CHECK(perceivable_class(K::kBorderRadius, kRoundRadius, 20) == PerceivableClass::kDifferent);
  CHECK(perceivable_class(K::kWidth, 100, 104) == PerceivableClass::kSimilar);
  CHECK(perceivable_class(K::kWidth, 100, 105) == PerceivableClass::kDifferent);

  // every numeric pair against the transcribed table
  for (const auto& row : oracle::threshold_table()) {
    if (is_color(row.kind)) continue;
    for (int a : domain_values(row.kind)) {
      for (int b : domain_values(row.kind)) {
        const int want = oracle::classify(oracle::numeric_distance(row.kind, a, b), row.same, row.similar);
        REQUIRE(static_cast<int>(perceivable_class(row.kind, a, b)) == want);
      }
    }
  }
  for (auto k : {K::kTextFont, K::kTextGravity}) {
    for (int a : domain_values(k)) {
      for (int b : domain_values(k)) {
        CHECK(perceivable_class(k, a, b) == (a == b ? PerceivableClass::kSame : PerceivableClass::kDifferent));
      }
    }
  }
}

TEST_CASE("distance is a metric on the dp kinds and class is monotone in it") {
  for (auto k : {K::kBorderWidth, K::kShadow, K::kPadding, K::kHeight, K::kTextSize}) {
    const auto& v = domain_values(k);
    for (int a : v) {
      for (int b : v) {
        CHECK(distance(k, a, b) == distance(k, b, a));
        for (int c : v) {
          CHECK(distance(k, a, c) <= distance(k, a, b) + distance(k, b, c));
          if (distance(k, a, b) <= distance(k, a, c)) {
            CHECK(perceivable_class(k, a, b) <= perceivable_class(k, a, c));
          }
        }
      }
    }
  }
}

TEST_CASE("snap_to_domain") {
  CHECK(snap_to_domain(K::kTextSize, 7, 1) == 10);
  CHECK(snap_to_domain(K::kTextSize, 4, -1) == 0);
  CHECK(snap_to_domain(K::kTextSize, 5, 1) == 10);
  CHECK(snap_to_domain(K::kTextSize, 5, -1) == 0);
  CHECK(snap_to_domain(K::kBorderWidth, 40, 1) == 12);
  CHECK(snap_to_domain(K::kBorderWidth, -3, -1) == 0);
  CHECK(snap_to_domain(K::kBorderRadius, 22, 1) == kRoundRadius);
}

TEST_CASE("sampling") {
  Rng rng(11);
  AttributeConfig prev = sample_config(rng, KindSet::all(), nullptr);
  CHECK(validate(prev).empty());
  CHECK_THROWS(sample_config(rng, KindSet{K::kBorderWidth}, nullptr));
  for (int i = 0; i < 200; ++i) {
    const AttributeConfig next = sample_config(rng, KindSet{K::kBorderWidth}, &prev);
    for (auto k : kAllKinds) {
      if (k != K::kBorderWidth) CHECK(next.get(k) == prev.get(k));
    }
  }
  for (int i = 0; i < 200; ++i) {
    const KindSet s = random_subset(rng, 3);
    REQUIRE(s.size() == 3);
    const AttributeConfig next = sample_config(rng, s, &prev);
    int shared = 0;
    for (auto k : kAllKinds) shared += next.get(k) == prev.get(k);
    CHECK(shared >= 9);
    CHECK(validate(next).empty());
    prev = next;
  }

  SamplingBounds b = SamplingBounds::full();
  b.set(K::kWidth, 25, 72);
  for (int i = 0; i < 300; ++i) {
    const int w = std::get<int>(sample_value(K::kWidth, rng, b));
    CHECK(w >= 25);
    CHECK(w <= 72);
  }
}

TEST_CASE("json round trip") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const AttributeConfig c = sample_config(rng, KindSet::all(), nullptr);
    CHECK(config_from_json(config_to_json(c)) == c);
  }
  AttributeConfig c = canonical_config();
  c.border_radius = kRoundRadius;
  const auto j = config_to_json(c);
  CHECK(j.at("border_radius") == "inf");
  CHECK(j.at("main_color") == nlohmann::json::array({230, 200, 60}));
  CHECK(config_from_json(j) == c);

  auto bad = j;
  bad["corner"] = 1;
  CHECK_THROWS(config_from_json(bad));
  bad = j;
  bad.erase("width");
  CHECK_THROWS(config_from_json(bad));
  bad = j;
  bad["border_width"] = 13;
  CHECK_THROWS_AS(config_from_json(bad), DomainError);
}
