#include "doctest.h"

#include "oracles.hpp"
#include "uiattr/metrics.hpp"

using namespace uiattr;

namespace {

Image checker(int w, int h, bool invert) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool on = ((x + y) % 2 == 0) != invert;
      img.set(x, y, on ? Rgb{255, 255, 255} : Rgb{0, 0, 0});
    }
  }
  return img;
}

Image noise(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST_CASE("pixel mse") {
  const Image a = noise(20, 12, 1);
  CHECK(pixel_mse(a, a) == 0.0);
  CHECK(pixel_mse(Image(8, 8, {0, 0, 0}), Image(8, 8, {255, 255, 255})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pixel_mse(checker(9, 7, false), checker(9, 7, true)) == doctest::Approx(1.0).epsilon(1e-12));
  const Image b = noise(20, 12, 2);
  CHECK(pixel_mse(a, b) == doctest::Approx(oracle::mse(a, b)).epsilon(1e-12));
  CHECK(pixel_mse(a, b) == pixel_mse(b, a));
  CHECK_THROWS(pixel_mse(a, Image(3, 3)));
}

TEST_CASE("ssim") {
  const Image a = noise(24, 16, 3), b = noise(24, 16, 4);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 0.5);
  CHECK(ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-9));

  // flat images: only the luminance term matters
  const Image g(16, 16, {100, 100, 100}), h(16, 16, {110, 110, 110});
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double lum = (2.0 * 100 * 110 + c1) / (100.0 * 100 + 110.0 * 110 + c1);
  CHECK(ssim(g, h) == doctest::Approx(lum).epsilon(1e-12));
  CHECK(ssim(g, h) == doctest::Approx(oracle::ssim(g, h)).epsilon(1e-12));

  // windows larger than the image are clamped
  const Image s1 = noise(5, 4, 5), s2 = noise(5, 4, 6);
  CHECK(ssim(s1, s2) == doctest::Approx(oracle::ssim(s1, s2)).epsilon(1e-9));
}

TEST_CASE("wasserstein") {
  const Image black(10, 10, {0, 0, 0});
  const Image red(10, 10, {255, 0, 0});
  CHECK(wasserstein(black, black) == 0.0);
  CHECK(wasserstein(black, red) == doctest::Approx(255.0 / 3.0));

  // half the pixels move from 0 to 10 on every channel
  Image half(10, 10, {0, 0, 0});
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 10; ++x) half.set(x, y, {10, 10, 10});
  }
  CHECK(wasserstein(black, half) == doctest::Approx(5.0));

  const Image a = noise(16, 9, 7), b = noise(16, 9, 8);
  CHECK(wasserstein(a, b) == doctest::Approx(oracle::wasserstein(a, b)).epsilon(1e-9));
  CHECK(wasserstein(a, b) == doctest::Approx(wasserstein(b, a)));

  // histograms ignore where the pixels are
  Image shuffled = a;
  std::swap(shuffled.pixels()[0], shuffled.pixels()[30]);
  std::swap(shuffled.pixels()[3], shuffled.pixels()[42]);
  CHECK(wasserstein(a, shuffled) == doctest::Approx(0.0));
}

TEST_CASE("centering") {
  const AttributeConfig c = canonical_config();
  RenderContext left;
  left.canvas_width = 140;
  left.canvas_height = 70;
  left.x_pos = 8;  // clear of the shadow, which edge replication would copy
  left.y_pos = 6;
  RenderContext right = left;
  right.x_pos = 40;
  right.y_pos = 12;
  const Image a = center_component(render(c, left), c, left);
  const Image b = center_component(render(c, right), c, right);
  CHECK(a.width() == 140);
  CHECK(pixel_mse(a, b) == 0.0);

  // already centered: returned unchanged
  RenderContext mid = left;
  mid.x_pos = (140 - c.width) / 2;
  mid.y_pos = (70 - c.height) / 2;
  const Image m = render(c, mid);
  CHECK(center_component(m, c, mid) == m);
}
