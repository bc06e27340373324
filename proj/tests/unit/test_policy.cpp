#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "uiattr/policy.hpp"

using namespace uiattr;
using K = AttributeKind;
namespace fs = std::filesystem;

namespace {

DeltaOptions desk() {
  DeltaOptions o;
  o.gen.bounds.set(K::kHeight, 20, 36);
  o.gen.bounds.set(K::kWidth, 25, 72);
  return o;
}

const DeltaDataset& pairs() {
  static const DeltaDataset d = gen_delta_dataset(40, desk(), 21);
  return d;
}

PolicyTrainOptions quick() {
  PolicyTrainOptions o;
  o.channels = {4, 4, 8, 8, 8, 8};
  o.hidden = 16;
  o.train.epochs = 1;
  o.train.batch_size = 8;
  return o;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("class layout") {
  CHECK(policy_classes(K::kTextSize, 5) == 11);
  CHECK(policy_classes(K::kTextGravity, 5) == 2);
  CHECK(policy_groups(K::kMainColor) == 3);
  CHECK(policy_groups(K::kShadow) == 1);
  for (int d = -5; d <= 5; ++d) {
    CHECK(class_delta(K::kHeight, delta_class(K::kHeight, d, 5), 5) == d);
  }
  CHECK(delta_class(K::kHeight, 0, 5) == 5);
  CHECK(delta_class(K::kTextFont, 0, 5) == 0);
  CHECK(delta_class(K::kTextFont, 1, 5) == 1);
  CHECK(class_delta(K::kTextFont, 1, 5) == 1);
}

TEST_CASE("p_zero") {
  DeltaDistribution two{{{0.7, 0.3}}};
  CHECK(two.p_zero() == doctest::Approx(0.7));
  std::vector<double> g(11, 0.05);
  g[5] = 0.5;
  DeltaDistribution col{{g, g, g}};
  CHECK(col.p_zero() == doctest::Approx(0.125));
}

TEST_CASE("trained policy outputs") {
  PolicyTrainOptions o = quick();
  nn::TrainHistory hist;
  KindPolicy p = train_kind_policy(K::kTextSize, pairs(), o, &hist);
  CHECK(p.kind == K::kTextSize);
  CHECK(p.clip == 5);
  CHECK(hist.epochs.size() == 1);

  const auto& s = pairs().samples[2];
  const DeltaDistribution d = evaluate_policy(p, s.original, s.rendered);
  REQUIRE(d.groups.size() == 1);
  REQUIRE(d.groups[0].size() == 11);
  CHECK(sum(d.groups[0]) == doctest::Approx(1.0));
  CHECK(d.p_zero() == doctest::Approx(d.groups[0][5]));

  // cached features give the same answer
  const nn::Tensor f = encode_image(p, s.original);
  const DeltaDistribution e = evaluate_policy_features(p, f, s.rendered);
  for (std::size_t i = 0; i < 11; ++i) CHECK(e.groups[0][i] == doctest::Approx(d.groups[0][i]).epsilon(1e-12));

  SUBCASE("identical inputs zero the difference block") {
    nn::Tensor x({1, 3, static_cast<std::size_t>(p.input_height), static_cast<std::size_t>(p.input_width)});
    image_to_tensor(prepare_input(s.original, p.input_width, p.input_height, p.padding), x, 0);
    p.net.forward(x, x, nn::Mode::kEval);
    const nn::Tensor& h = p.net.combined();
    const std::size_t fs = p.net.feature_size();
    for (std::size_t j = 0; j < fs; ++j) CHECK(std::abs(h[3 * fs + j]) < 1e-12);
  }
  SUBCASE("swapping the pair negates the difference") {
    const auto prep = [&](const Image& im) {
      nn::Tensor t({1, 3, static_cast<std::size_t>(p.input_height), static_cast<std::size_t>(p.input_width)});
      image_to_tensor(prepare_input(im, p.input_width, p.input_height, p.padding), t, 0);
      return t;
    };
    const nn::Tensor a = prep(s.original), b = prep(s.rendered);
    p.net.forward(a, b, nn::Mode::kEval);
    const nn::Tensor h1 = p.net.combined();
    p.net.forward(b, a, nn::Mode::kEval);
    const nn::Tensor& h2 = p.net.combined();
    const std::size_t fs = p.net.feature_size();
    for (std::size_t j = 0; j < fs; ++j) {
      // batch position changes GEMM rounding slightly
      CHECK(h1[j] == doctest::Approx(h2[fs + j]).epsilon(1e-12));
      CHECK(h1[3 * fs + j] == doctest::Approx(-h2[3 * fs + j]).epsilon(1e-12));
      CHECK(h1[4 * fs + j] == doctest::Approx(h2[4 * fs + j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("color and categorical policies") {
  KindPolicy c = train_kind_policy(K::kTextColor, pairs(), quick());
  const auto& s = pairs().samples[0];
  const DeltaDistribution d = evaluate_policy(c, s.original, s.rendered);
  REQUIRE(d.groups.size() == 3);
  for (const auto& g : d.groups) CHECK(sum(g) == doctest::Approx(1.0));

  KindPolicy g = train_kind_policy(K::kTextGravity, pairs(), quick());
  const DeltaDistribution e = evaluate_policy(g, s.original, s.rendered);
  REQUIRE(e.groups.size() == 1);
  CHECK(e.groups[0].size() == 2);
}

TEST_CASE("training is deterministic") {
  KindPolicy a = train_kind_policy(K::kShadow, pairs(), quick());
  KindPolicy b = train_kind_policy(K::kShadow, pairs(), quick());
  const auto& s = pairs().samples[5];
  const auto da = evaluate_policy(a, s.original, s.rendered), db = evaluate_policy(b, s.original, s.rendered);
  CHECK(da.groups == db.groups);
}

TEST_CASE("encoder initialization from a predictor") {
  nn::Network src(policy_encoder(96, 48, {4, 4, 8, 8, 8, 8}, 16));
  Rng rng(8);
  src.initialize(rng);
  PolicyTrainOptions o = quick();
  o.train.learning_rate = 1e-12;  // one epoch barely moves the weights
  o.init_from = &src;
  KindPolicy p = train_kind_policy(K::kHeight, pairs(), o);
  const auto sp = src.parameters();
  const auto ep = p.net.encoder().parameters();
  REQUIRE(sp.size() == ep.size());
  for (std::size_t i = 0; i < sp.size(); ++i) {
    REQUIRE(sp[i]->value.size() == ep[i]->value.size());
    for (std::size_t j = 0; j < sp[i]->value.size(); ++j) {
      CHECK(ep[i]->value[j] == doctest::Approx(sp[i]->value[j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("persistence") {
  const fs::path dir = fs::temp_directory_path() / "uiattr_test_policies";
  fs::remove_all(dir);
  PolicyBundle b;
  b.clip = 5;
  b.policies[index_of(K::kWidth)] = train_kind_policy(K::kWidth, pairs(), quick());
  save_policies(b, dir);
  PolicyBundle r = load_policies(dir);
  CHECK(r.kinds() == KindSet{K::kWidth});
  CHECK(r.clip == 5);
  const auto& s = pairs().samples[7];
  const auto x = evaluate_policy(*b.find(K::kWidth), s.original, s.rendered);
  const auto y = evaluate_policy(*r.find(K::kWidth), s.original, s.rendered);
  CHECK(x.groups == y.groups);
  fs::remove_all(dir);
}
