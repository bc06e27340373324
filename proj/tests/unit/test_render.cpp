#include "doctest.h"

#include <filesystem>

#include "uiattr/dataset.hpp"
#include "uiattr/render.hpp"

using namespace uiattr;
using K = AttributeKind;

namespace {

RenderContext centered(const AttributeConfig& c, int w = 96, int h = 48) {
  RenderContext ctx;
  ctx.canvas_width = w;
  ctx.canvas_height = h;
  ctx.x_pos = (w - c.width) / 2;
  ctx.y_pos = (h - c.height - shadow_offset(c.shadow)) / 2;
  return ctx;
}

}  // namespace

TEST_CASE("deterministic") {
  const AttributeConfig c = canonical_config();
  const RenderContext ctx = centered(c);
  const Image a = render(c, ctx);
  const Image b = render(c, ctx);
  CHECK(a.width() == 96);
  CHECK(a.height() == 48);
  CHECK(a.pixels().size() == 96u * 48u * 3u);
  CHECK(a == b);
}

TEST_CASE("translation moves pixels exactly") {
  Rng rng(2);
  SamplingBounds b = SamplingBounds::full();
  b.set(K::kHeight, 20, 30);
  b.set(K::kWidth, 25, 60);
  for (int i = 0; i < 40; ++i) {
    AttributeConfig c = sample_config(rng, KindSet::all(), nullptr, b);
    c.shadow = std::min(c.shadow, 4);
    RenderContext ctx;
    ctx.canvas_width = 120;
    ctx.canvas_height = 64;
    ctx.background = Background::solid({200, 210, 220});
    ctx.x_pos = 20;
    ctx.y_pos = 14;
    const Image a = render(c, ctx);
    const int dx = static_cast<int>(rng.uniform_int(-6, 6)), dy = static_cast<int>(rng.uniform_int(-4, 4));
    RenderContext moved = ctx;
    moved.x_pos += dx;
    moved.y_pos += dy;
    const Image m = render(c, moved);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 120; ++x) {
        const int sx = x - dx, sy = y - dy;
        if (sx < 0 || sy < 0 || sx >= 120 || sy >= 64) continue;
        REQUIRE(m.at(x, y) == a.at(sx, sy));
      }
    }
  }
}

TEST_CASE("zero text size draws no text") {
  AttributeConfig c = canonical_config();
  c.text_size = 0;
  RenderContext ctx = centered(c);
  const Image a = render(c, ctx);
  ctx.label = "";
  CHECK(render(c, ctx) == a);
  c.text_color = {250, 0, 0};
  c.text_font = TextFont::kBolt;
  c.text_gravity = TextGravity::kLeft;
  ctx.label = "Cancel";
  CHECK(render(c, ctx) == a);
}

TEST_CASE("border width change is visible") {
  AttributeConfig a = canonical_config();
  AttributeConfig b = a;
  a.border_width = 2;
  b.border_width = 4;
  const RenderContext ctx = centered(a);
  CHECK(render(a, ctx) != render(b, ctx));
}

TEST_CASE("different values give different images") {
  // one comparable kind changed from the canonical config, on a canvas that
  // holds every domain value
  Rng rng(9);
  const AttributeConfig base = canonical_config();
  int checked = 0;
  while (checked < 300) {
    const AttributeKind k = kAllKinds[static_cast<std::size_t>(rng.uniform_int(0, 11))];
    if (!is_comparable(k)) continue;
    AttributeConfig a = base, b = base;
    a.set(k, sample_value(k, rng));
    b.set(k, sample_value(k, rng));
    if (perceivable_class(k, a.get(k), b.get(k)) != PerceivableClass::kDifferent) continue;
    RenderContext ctx;
    ctx.canvas_width = 330;
    ctx.canvas_height = 150;
    ctx.x_pos = 20;
    ctx.y_pos = 20;
    INFO(kind_name(k), " ", value_to_string(k, a.get(k)), " vs ", value_to_string(k, b.get(k)));
    CHECK(render(a, ctx) != render(b, ctx));
    ++checked;
  }
}

TEST_CASE("every padding value moves anchored text") {
  const AttributeConfig base = canonical_config();
  RenderContext ctx;
  ctx.canvas_width = 330;
  ctx.canvas_height = 150;
  ctx.x_pos = 20;
  ctx.y_pos = 20;
  std::vector<Image> seen;
  for (int p : domain_values(AttributeKind::kPadding)) {
    AttributeConfig c = base;
    c.padding = p;
    seen.push_back(render(c, ctx));
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    for (std::size_t j = i + 1; j < seen.size(); ++j) CHECK(seen[i] != seen[j]);
  }
}

TEST_CASE("geometry errors") {
  AttributeConfig c = canonical_config();
  c.width = 120;
  RenderContext ctx;
  CHECK_FALSE(fits(c, ctx));
  CHECK_THROWS_AS(render(c, ctx), GeometryError);
  c = canonical_config();
  c.border_width = 20;
  CHECK_THROWS_AS(render(c, centered(canonical_config())), DomainError);
}

TEST_CASE("ppm round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "uiattr_render_test";
  std::filesystem::create_directories(dir);
  AttributeConfig c = canonical_config();
  RenderContext ctx = centered(c);
  ctx.background = Background::solid({12, 34, 56});
  const Image img = render(c, ctx);
  write_image(img, dir / "a.ppm");
  CHECK(read_image(dir / "a.ppm") == img);
  CHECK(decode_ppm(encode_ppm(img)) == img);
  CHECK_THROWS_AS(decode_ppm("P6 3 3 255\nxx"), ImageIoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("screenshot background tiles the source") {
  auto shots = synthetic_screenshots(2, 40, 30, 4);
  REQUIRE(shots.size() == 2);
  RenderContext ctx;
  ctx.background.type = Background::Type::kScreenshot;
  ctx.background.screenshot = shots[0];
  const Image bg = render_background(ctx);
  CHECK(bg.width() == 96);
  CHECK(bg.at(0, 0) == shots[0]->at(0, 0));
  CHECK(bg.at(45, 31) == shots[0]->at(5, 1));
}

TEST_CASE("context json") {
  RenderContext ctx;
  ctx.x_pos = 3;
  ctx.y_pos = 4;
  ctx.label = "Go";
  ctx.background = Background::solid({1, 2, 3});
  const RenderContext back = context_from_json(context_to_json(ctx));
  CHECK(back.x_pos == 3);
  CHECK(back.y_pos == 4);
  CHECK(back.label == "Go");
  CHECK(back.background.color == Rgb{1, 2, 3});
}
