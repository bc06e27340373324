#include "doctest.h"

#include <filesystem>

#include "gradcheck.hpp"
#include "uiattr/nn/checkpoint.hpp"
#include "uiattr/nn/network.hpp"
#include "uiattr/nn/train.hpp"

using namespace uiattr;
using namespace uiattr::nn;

TEST_CASE("layer gradients") {
  SUBCASE("conv3x3") {
    Conv3x3 l(2, 3);
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {2, 2, 5, 6}, 1)) < 1e-6);
  }
  SUBCASE("relu") {
    Relu l;
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {2, 3, 4, 4}, 2)) < 1e-6);
  }
  SUBCASE("batchnorm spatial") {
    BatchNorm l(3);
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {4, 3, 3, 3}, 3)) < 1e-6);
  }
  SUBCASE("batchnorm flat") {
    BatchNorm l(5);
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {6, 5}, 4)) < 1e-6);
  }
  SUBCASE("maxpool") {
    MaxPool2 l;
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {2, 2, 5, 6}, 5)) < 1e-6);
  }
  SUBCASE("flatten") {
    Flatten l;
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {2, 2, 3, 3}, 6)) < 1e-6);
  }
  SUBCASE("dense") {
    Dense l(7, 4);
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {3, 7}, 7)) < 1e-6);
  }
  SUBCASE("softmax") {
    Softmax l(2);
    CHECK(gradcheck::worst(gradcheck::check_layer(l, {3, 8}, 8)) < 1e-6);
  }
}

TEST_CASE("batchnorm normalizes batch statistics") {
  BatchNorm bn(3);
  Rng rng(1);
  Tensor x({5, 3, 4, 4});
  gradcheck::randomize(x, rng, -30, 70);
  Tensor y;
  bn.forward(x, y, Mode::kTrain);
  const Tensor& xh = bn.normalized();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t i = 0; i < 16; ++i) m += xh.at(n, c, i / 4, i % 4);
    m /= 80;
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t i = 0; i < 16; ++i) v += std::pow(xh.at(n, c, i / 4, i % 4) - m, 2);
    v /= 80;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-6);
  }
}

TEST_CASE("maxpool halves and dominates") {
  MaxPool2 p;
  Rng rng(2);
  Tensor x({2, 3, 7, 6});
  gradcheck::randomize(x, rng);
  CHECK(p.output_shape({3, 7, 6}) == Shape{3, 3, 3});
  Tensor y;
  p.forward(x, y, Mode::kEval);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) CHECK(y.at(n, c, i, j) >= x.at(n, c, 2 * i + a, 2 * j + b));
}

TEST_CASE("two block network gradient") {
  Network net(predictor_architecture({3, 8, 10}, {4, 4}, 16, Head::classification(5)));
  CHECK(gradcheck::worst(gradcheck::check_network(net, 3, 10)) < 1e-5);
}

TEST_CASE("cross entropy gradient") {
  Rng rng(4);
  Tensor logits({4, 6});
  gradcheck::randomize(logits, rng, -2, 2);
  Targets t;
  t.width = 2;
  t.classes = {0, 2, 1, 1, 2, 0, 1, 2};
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  Tensor d;
  loss_and_gradient(logits, t, idx, &d);
  const auto r = gradcheck::check(
      {{"logits", &logits}}, [&] { return loss_and_gradient(logits, t, idx, nullptr); },
      [&] { return std::vector<std::vector<double>>{{d.values().begin(), d.values().end()}}; });
  CHECK(r[0].error < 1e-6);
}

TEST_CASE("architecture text round trip and shapes") {
  const auto spec = predictor_architecture({3, 48, 96}, {8, 8, 16, 16, 32, 32}, 256, Head::classification(13));
  CHECK(ArchitectureSpec::parse(spec.to_text()) == spec);
  CHECK(spec.output_shape() == Shape{13});
  // 48 -> 24 -> 12 -> 6 -> 3 -> 1, then pooling stops
  const auto blocks = conv_blocks({3, 48, 96}, {8, 8, 16, 16, 32, 32});
  int pools = 0;
  for (const auto& l : blocks) pools += l.type == LayerType::kMaxPool2;
  CHECK(pools == 5);
  CHECK_THROWS_AS(ArchitectureSpec::parse("input 3 4 4\nwat 3\nhead none\n"), std::exception);
}

TEST_CASE("gradient clipping bounds the norm") {
  Parameter a{"a", Tensor({3}), Tensor({3})}, b{"b", Tensor({2}), Tensor({2})};
  a.grad[0] = 3;
  a.grad[1] = 4;
  b.grad[0] = 12;
  std::vector<Parameter*> ps{&a, &b};
  CHECK(gradient_norm(ps) == doctest::Approx(13.0));
  const double n = clip_gradients(ps, 3.0);
  CHECK(n <= 3.0 + 1e-9);
  CHECK(gradient_norm(ps) <= 3.0 + 1e-9);
  CHECK(a.grad[1] / a.grad[0] == doctest::Approx(4.0 / 3.0));
}

namespace {

// Two separable blobs in 2-D.
class ToyLearner final : public Learner {
 public:
  explicit ToyLearner(std::uint64_t seed) : net_(ArchitectureSpec{{2}, {{LayerType::kDense, 8}, {LayerType::kRelu, 0}},
                                                                  Head::classification(2)}) {
    Rng rng(seed);
    net_.initialize(rng);
    Rng data(seed + 1);
    for (int i = 0; i < 200; ++i) {
      const int c = i % 2;
      x_.push_back({data.uniform(-1, 1) + (c ? 2.0 : -2.0), data.uniform(-1, 1)});
      targets.classes.push_back(c);
    }
  }
  std::vector<Parameter*> parameters() override { return net_.parameters(); }
  std::vector<Tensor*> state() override { return net_.state(); }
  const Tensor& forward(std::span<const std::size_t> s, Mode mode) override {
    batch_.resize({s.size(), 2});
    for (std::size_t i = 0; i < s.size(); ++i) {
      batch_[2 * i] = x_[s[i]][0];
      batch_[2 * i + 1] = x_[s[i]][1];
    }
    return net_.forward_logits(batch_, mode);
  }
  void backward(const Tensor& d) override { net_.backward(d, false); }
  Targets targets;

 private:
  Network net_;
  std::vector<std::array<double, 2>> x_;
  Tensor batch_;
};

}  // namespace

TEST_CASE("sgd training converges and is deterministic") {
  const auto run = [] {
    ToyLearner l(3);
    auto [tr, va] = split_indices(200, 0.2, 7);
    TrainSpec spec;
    spec.epochs = 30;
    spec.batch_size = 16;
    spec.seed = 5;
    const TrainHistory h = train(l, l.targets, tr, va, spec);
    return std::make_pair(h, l.state());
  };
  const auto [h1, s1] = run();
  CHECK(h1.epochs.at(static_cast<std::size_t>(h1.best_epoch)).val_accuracy > 0.95);
  const auto [h2, s2] = run();
  CHECK(h1.best_val_loss == h2.best_val_loss);
  CHECK(h1.epochs.size() == h2.epochs.size());

  TrainSpec bad;
  bad.batch_size = 0;
  CHECK_THROWS(validate(bad));
}

TEST_CASE("split is a partition") {
  auto [tr, va] = split_indices(101, 0.2, 3);
  CHECK(tr.size() + va.size() == 101);
  std::vector<bool> seen(101, false);
  for (auto i : tr) seen[i] = true;
  for (auto i : va) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "uiattr_nn_test";
  std::filesystem::create_directories(dir);
  Network net(predictor_architecture({3, 8, 8}, {4}, 8, Head::regression(3)));
  Rng rng(1);
  net.initialize(rng);
  save_network(net, dir / "n.ckpt");
  Network back = load_network(dir / "n.ckpt");
  CHECK(back.spec() == net.spec());
  Tensor x({2, 3, 8, 8});
  gradcheck::randomize(x, rng);
  CHECK(back.forward(x, Mode::kEval) == net.forward(x, Mode::kEval));

  auto bytes = encode_checkpoint(net.spec().to_text(), net.state());
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_checkpoint(bytes), CheckpointError);

  SiameseNetwork sn(ArchitectureSpec{{4}, {{LayerType::kDense, 6}, {LayerType::kRelu, 0}}, Head::none()}, 8,
                    Head::classification(3, 2));
  sn.initialize(rng);
  save_siamese(sn, dir / "s.ckpt");
  SiameseNetwork sb = load_siamese(dir / "s.ckpt");
  Tensor a({2, 4}), b({2, 4});
  gradcheck::randomize(a, rng);
  gradcheck::randomize(b, rng);
  CHECK(sb.forward(a, b, Mode::kEval) == sn.forward(a, b, Mode::kEval));
  std::filesystem::remove_all(dir);
}

TEST_CASE("siamese combiner and gradients") {
  SiameseNetwork sn(ArchitectureSpec{{3}, {{LayerType::kDense, 4}, {LayerType::kRelu, 0}}, Head::none()}, 5,
                    Head::classification(3));
  Rng rng(2);
  sn.initialize(rng);
  CHECK(sn.feature_size() == 4);
  Tensor a({2, 3}), b({2, 3});
  gradcheck::randomize(a, rng);
  gradcheck::randomize(b, rng);
  sn.forward(a, b, Mode::kEval);
  const Tensor& h = sn.combined();
  REQUIRE(h.shape() == Shape{2, 20});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 4; ++i) {
      const double x = h[n * 20 + i], r = h[n * 20 + 4 + i];
      CHECK(h[n * 20 + 8 + i] == doctest::Approx(x + r));
      CHECK(h[n * 20 + 12 + i] == doctest::Approx(x - r));
      CHECK(h[n * 20 + 16 + i] == doctest::Approx(x * r));
    }
  }

  Tensor r({2, 3});
  gradcheck::randomize(r, rng);
  const auto loss = [&] {
    const Tensor& out = sn.forward_logits(a, b, Mode::kTrain);
    double v = 0;
    for (std::size_t i = 0; i < out.size(); ++i) v += r[i] * out[i];
    return v;
  };
  std::vector<std::pair<std::string, Tensor*>> wrt;
  for (Parameter* p : sn.parameters()) wrt.emplace_back(p->name, &p->value);
  const auto res = gradcheck::check(wrt, loss, [&] {
    sn.zero_grad();
    sn.forward_logits(a, b, Mode::kTrain);
    sn.backward(r);
    std::vector<std::vector<double>> g;
    for (Parameter* p : sn.parameters()) g.emplace_back(p->grad.values().begin(), p->grad.values().end());
    return g;
  });
  CHECK(gradcheck::worst(res) < 1e-6);
}

TEST_CASE("weight transfer stops at the first mismatch") {
  Network a(predictor_architecture({3, 8, 8}, {4, 4}, 8, Head::classification(3)));
  Network b(predictor_architecture({3, 8, 8}, {4, 4}, 8, Head::none()));
  Rng rng(1);
  a.initialize(rng);
  b.initialize(rng);
  const std::size_t n = transfer_weights(a, b);
  CHECK(n >= 8);
  CHECK(a.parameters()[0]->value == b.parameters()[0]->value);
}
