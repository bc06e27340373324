#include "uiattr/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace uiattr {
namespace {

// 5x7 bitmap glyphs, rows top to bottom.
struct Glyph {
  char ch;
  std::array<const char*, 7> rows;
};

constexpr Glyph kGlyphs[] = {
    {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
    {'B', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
    {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
    {'D', {"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}},
    {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
    {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
    {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}},
    {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
    {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    {'J', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
    {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
    {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
    {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
    {'N', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
    {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
    {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
    {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
    {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
    {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
    {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
    {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
    {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
    {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
    {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
    {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
    {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
    {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
    {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
    {'3', {"####.", "....#", "....#", ".###.", "....#", "....#", "####."}},
    {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
    {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
    {'6', {".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."}},
    {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
    {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
    {'9', {".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."}},
};

const Glyph* find_glyph(char c) {
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  for (const auto& g : kGlyphs) {
    if (g.ch == c) return &g;
  }
  return nullptr;  // rendered as a space
}

constexpr int kSubsamples = 4;
constexpr double kShadowOpacity = 0.4;
constexpr double kLightInk = 0.7;

struct RoundedRect {
  double x0, y0, x1, y1, radius;

  bool empty() const { return x1 <= x0 || y1 <= y0; }

  double sdf(double px, double py) const {
    const double cx = 0.5 * (x0 + x1);
    const double cy = 0.5 * (y0 + y1);
    const double hx = 0.5 * (x1 - x0);
    const double hy = 0.5 * (y1 - y0);
    const double qx = std::abs(px - cx) - (hx - radius);
    const double qy = std::abs(py - cy) - (hy - radius);
    const double ox = std::max(qx, 0.0);
    const double oy = std::max(qy, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0) - radius;
  }

  // Fraction of a kSubsamples^2 grid inside the shape for local pixel (x, y).
  double coverage(int x, int y) const {
    if (empty()) return 0.0;
    const double center = sdf(x + 0.5, y + 0.5);
    if (center < -0.75) return 1.0;
    if (center > 0.75) return 0.0;
    int inside = 0;
    for (int j = 0; j < kSubsamples; ++j) {
      for (int i = 0; i < kSubsamples; ++i) {
        const double px = x + (i + 0.5) / kSubsamples;
        const double py = y + (j + 0.5) / kSubsamples;
        if (sdf(px, py) < 0.0) ++inside;
      }
    }
    return static_cast<double>(inside) / (kSubsamples * kSubsamples);
  }
};

double effective_radius(const AttributeConfig& c) {
  const double half = 0.5 * std::min(c.width, c.height);
  if (c.border_radius == kRoundRadius) return half;
  return std::min<double>(c.border_radius, half);
}

// Layers of one component in a local frame whose origin is the component's
// top-left corner shifted by (-margin, -margin).
struct LocalLayers {
  int margin = 0;
  int w = 0;
  int h = 0;
  std::vector<double> shadow;     // alpha of black
  std::vector<double> outer;      // component coverage
  std::vector<double> inner;      // fill coverage (inside the border)
  std::vector<double> text;       // ink alpha, already clipped to the fill

  std::size_t at(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }
};

void box_blur(std::vector<double>& buf, int w, int h, int radius) {
  std::vector<double> tmp(buf.size());
  const double norm = 1.0 / (2 * radius + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius); ++k) {
        s += buf[static_cast<std::size_t>(y) * w + k];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius); ++k) {
        s += tmp[static_cast<std::size_t>(k) * w + x];
      }
      buf[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  }
}

std::vector<bool> text_mask(const AttributeConfig& c, const std::string& label, int& ox_out,
                            int& oy_out) {
  std::vector<bool> mask(static_cast<std::size_t>(c.width) * c.height, false);
  const int cap = cap_height(c.text_size);
  if (cap == 0 || label.empty()) return mask;
  const double cell = cap / 7.0;
  const auto n = static_cast<double>(label.size());
  const double tw = (6.0 * n - 1.0) * cell;
  const double th = 7.0 * cell;

  // Gravity anchors the text to the inset box even when it overflows; the
  // inset stops one pixel short of the far edge so some text stays inside.
  const double inset = c.border_width + c.padding;
  const double ix_in = std::min(inset, c.width - 1.0);
  const double iy_in = std::min(inset, c.height - 1.0);
  const double bx0 = ix_in, bx1 = c.width - ix_in;
  const double by0 = iy_in, by1 = c.height - iy_in;
  double ox = 0.5 * (bx0 + bx1 - tw);
  double oy = 0.5 * (by0 + by1 - th);
  if (c.text_gravity == TextGravity::kLeft) ox = bx0;
  if (c.text_gravity == TextGravity::kRight) ox = bx1 - tw;
  if (c.text_gravity == TextGravity::kTop) oy = by0;
  if (c.text_gravity == TextGravity::kBottom) oy = by1 - th;
  const int ix = static_cast<int>(std::floor(ox + 0.5));
  const int iy = static_cast<int>(std::floor(oy + 0.5));
  ox_out = ix;
  oy_out = iy;

  for (int y = 0; y < c.height; ++y) {
    const double v = (y + 0.5 - iy) / cell;
    if (v < 0.0 || v >= 7.0) continue;
    const int row = static_cast<int>(v);
    for (int x = 0; x < c.width; ++x) {
      const double u = (x + 0.5 - ix) / cell;
      if (u < 0.0 || u >= 6.0 * n) continue;
      const int col_abs = static_cast<int>(u);
      const int ci = col_abs / 6;
      const int col = col_abs % 6;
      if (col == 5) continue;
      const Glyph* g = find_glyph(label[static_cast<std::size_t>(ci)]);
      if (g != nullptr && g->rows[static_cast<std::size_t>(row)][col] == '#') {
        mask[static_cast<std::size_t>(y) * c.width + x] = true;
      }
    }
  }

  const auto at = [&](const std::vector<bool>& m, int x, int y) {
    return x >= 0 && y >= 0 && x < c.width && y < c.height &&
           m[static_cast<std::size_t>(y) * c.width + x];
  };
  const auto dilate = [&](const std::vector<bool>& m) {
    std::vector<bool> out(m.size(), false);
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) {
        out[static_cast<std::size_t>(y) * c.width + x] =
            at(m, x, y) || at(m, x - 1, y) || at(m, x, y - 1) || at(m, x - 1, y - 1);
      }
    }
    return out;
  };

  switch (c.text_font) {
    case TextFont::kThin: {
      // Drop the trailing pixel of every run that is at least two pixels long.
      std::vector<bool> out = mask;
      for (int y = 0; y < c.height; ++y) {
        for (int x = 0; x < c.width; ++x) {
          if (!at(mask, x, y)) continue;
          const bool run_end_x = at(mask, x - 1, y) && !at(mask, x + 1, y);
          const bool run_end_y = at(mask, x, y - 1) && !at(mask, x, y + 1);
          if (run_end_x || run_end_y) out[static_cast<std::size_t>(y) * c.width + x] = false;
        }
      }
      return out;
    }
    case TextFont::kMedium: return dilate(mask);
    case TextFont::kBolt: return dilate(dilate(mask));
    case TextFont::kLight:
    case TextFont::kRegular: return mask;
  }
  return mask;
}

LocalLayers build_layers(const AttributeConfig& c, const std::string& label) {
  LocalLayers L;
  const int s = c.shadow;
  L.margin = s > 0 ? shadow_spread(s) + 1 : 0;
  const int off = shadow_offset(s);
  L.w = c.width + 2 * L.margin;
  L.h = c.height + 2 * L.margin + off;
  const std::size_t n = static_cast<std::size_t>(L.w) * L.h;
  L.outer.assign(n, 0.0);
  L.inner.assign(n, 0.0);
  L.text.assign(n, 0.0);
  L.shadow.assign(n, 0.0);

  const double r = effective_radius(c);
  const RoundedRect outer{0.0, 0.0, static_cast<double>(c.width), static_cast<double>(c.height), r};
  const double bw = std::min<double>(c.border_width, 0.5 * std::min(c.width, c.height));
  const RoundedRect inner{bw, bw, c.width - bw, c.height - bw, std::max(r - bw, 0.0)};

  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      const std::size_t i = L.at(x + L.margin, y + L.margin);
      L.outer[i] = outer.coverage(x, y);
      L.inner[i] = bw > 0.0 ? inner.coverage(x, y) : L.outer[i];
    }
  }

  if (s > 0) {
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) {
        L.shadow[L.at(x + L.margin, y + L.margin + off)] = L.outer[L.at(x + L.margin, y + L.margin)];
      }
    }
    box_blur(L.shadow, L.w, L.h, s);
    box_blur(L.shadow, L.w, L.h, s);
    for (double& a : L.shadow) a *= kShadowOpacity;
  }

  int tx = 0, ty = 0;
  const auto mask = text_mask(c, label, tx, ty);
  const double ink = c.text_font == TextFont::kLight ? kLightInk : 1.0;
  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      if (!mask[static_cast<std::size_t>(y) * c.width + x]) continue;
      const std::size_t i = L.at(x + L.margin, y + L.margin);
      L.text[i] = ink * L.outer[i];
    }
  }
  return L;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

void require_renderable(const AttributeConfig& config, const RenderContext& ctx) {
  const auto violations = validate(config);
  if (!violations.empty()) throw DomainError("render: " + violations.front().message);
  if (ctx.canvas_width <= 0 || ctx.canvas_height <= 0) {
    throw GeometryError("render: empty canvas");
  }
  if (!fits(config, ctx)) {
    throw GeometryError("render: component " + std::to_string(config.width) + "x" +
                        std::to_string(config.height) + " at (" + std::to_string(ctx.x_pos) + "," +
                        std::to_string(ctx.y_pos) + ") does not fit canvas " +
                        std::to_string(ctx.canvas_width) + "x" + std::to_string(ctx.canvas_height));
  }
  if (ctx.background.type == Background::Type::kScreenshot &&
      (!ctx.background.screenshot || ctx.background.screenshot->empty())) {
    throw GeometryError("render: screenshot background without an image");
  }
}

}  // namespace

int shadow_spread(int shadow) { return 2 * shadow; }
int shadow_offset(int shadow) { return (shadow + 1) / 2; }

int cap_height(int text_size) {
  if (text_size <= 0) return 0;
  return static_cast<int>(std::floor(0.7 * text_size + 0.5));
}

Box component_box(const AttributeConfig& config, const RenderContext& ctx) {
  return {ctx.x_pos, ctx.y_pos, config.width, config.height};
}

Box footprint_box(const AttributeConfig& config, const RenderContext& ctx) {
  const int s = config.shadow > 0 ? shadow_spread(config.shadow) : 0;
  const int off = shadow_offset(config.shadow);
  return {ctx.x_pos - s, ctx.y_pos - s, config.width + 2 * s, config.height + 2 * s + off};
}

bool fits(const AttributeConfig& config, const RenderContext& ctx) {
  return ctx.x_pos >= 0 && ctx.y_pos >= 0 && ctx.x_pos + config.width <= ctx.canvas_width &&
         ctx.y_pos + config.height + shadow_offset(config.shadow) <= ctx.canvas_height;
}

bool footprint_fits(const AttributeConfig& config, const RenderContext& ctx) {
  const Box b = footprint_box(config, ctx);
  return b.x >= 0 && b.y >= 0 && b.x + b.w <= ctx.canvas_width && b.y + b.h <= ctx.canvas_height;
}

Image render_background(const RenderContext& ctx) {
  const auto& bg = ctx.background;
  switch (bg.type) {
    case Background::Type::kWhite: return Image(ctx.canvas_width, ctx.canvas_height);
    case Background::Type::kSolid: return Image(ctx.canvas_width, ctx.canvas_height, bg.color);
    case Background::Type::kScreenshot: {
      if (!bg.screenshot || bg.screenshot->empty()) {
        throw GeometryError("screenshot background without an image");
      }
      const Image& src = *bg.screenshot;
      Image out(ctx.canvas_width, ctx.canvas_height);
      for (int y = 0; y < ctx.canvas_height; ++y) {
        const int sy = ((y + bg.offset_y) % src.height() + src.height()) % src.height();
        for (int x = 0; x < ctx.canvas_width; ++x) {
          const int sx = ((x + bg.offset_x) % src.width() + src.width()) % src.width();
          out.set(x, y, src.at(sx, sy));
        }
      }
      return out;
    }
  }
  return Image(ctx.canvas_width, ctx.canvas_height);
}

Image render(const AttributeConfig& config, const RenderContext& ctx) {
  require_renderable(config, ctx);
  Image img = render_background(ctx);
  const LocalLayers L = build_layers(config, ctx.label);
  const int base_x = ctx.x_pos - L.margin;
  const int base_y = ctx.y_pos - L.margin;
  const Rgb main = config.main_color;
  const Rgb border = config.border_color;
  const Rgb text = config.text_color;

  for (int ly = 0; ly < L.h; ++ly) {
    const int y = base_y + ly;
    if (y < 0 || y >= img.height()) continue;
    for (int lx = 0; lx < L.w; ++lx) {
      const int x = base_x + lx;
      if (x < 0 || x >= img.width()) continue;
      const std::size_t i = L.at(lx, ly);
      const double sh = L.shadow[i];
      const double o = L.outer[i];
      if (sh == 0.0 && o == 0.0) continue;
      const double in = L.inner[i];
      const double t = L.text[i];
      const Rgb under = img.at(x, y);
      const auto blend = [&](double u, double m, double b, double tx) {
        double v = u * (1.0 - sh);
        v = v * (1.0 - o) + b * (o - in) + m * in;
        return v * (1.0 - t) + tx * t;
      };
      img.set(x, y,
              {to_byte(blend(under.r, main.r, border.r, text.r)),
               to_byte(blend(under.g, main.g, border.g, text.g)),
               to_byte(blend(under.b, main.b, border.b, text.b))});
    }
  }
  return img;
}

std::vector<bool> render_footprint(const AttributeConfig& config, const RenderContext& ctx) {
  require_renderable(config, ctx);
  std::vector<bool> mask(static_cast<std::size_t>(ctx.canvas_width) * ctx.canvas_height, false);
  const LocalLayers L = build_layers(config, ctx.label);
  for (int ly = 0; ly < L.h; ++ly) {
    const int y = ctx.y_pos - L.margin + ly;
    if (y < 0 || y >= ctx.canvas_height) continue;
    for (int lx = 0; lx < L.w; ++lx) {
      const int x = ctx.x_pos - L.margin + lx;
      if (x < 0 || x >= ctx.canvas_width) continue;
      const std::size_t i = L.at(lx, ly);
      if (L.shadow[i] > 0.0 || L.outer[i] > 0.0) {
        mask[static_cast<std::size_t>(y) * ctx.canvas_width + x] = true;
      }
    }
  }
  return mask;
}

const std::vector<std::string>& label_words() {
  static const std::vector<std::string> words = {
      "OK",   "GO",   "BUY",  "ADD",  "PAY",  "SEND", "NEXT", "SAVE", "PLAY", "SHOP",
      "JOIN", "EDIT", "HELP", "MENU", "BACK", "DONE", "STOP", "SKIP", "VIEW", "MORE",
  };
  return words;
}

nlohmann::json context_to_json(const RenderContext& ctx) {
  nlohmann::json j;
  j["canvas"] = {ctx.canvas_width, ctx.canvas_height};
  j["pos"] = {ctx.x_pos, ctx.y_pos};
  j["label"] = ctx.label;
  const auto& bg = ctx.background;
  switch (bg.type) {
    case Background::Type::kWhite: j["background"] = {{"type", "white"}}; break;
    case Background::Type::kSolid:
      j["background"] = {{"type", "solid"}, {"color", {bg.color.r, bg.color.g, bg.color.b}}};
      break;
    case Background::Type::kScreenshot:
      j["background"] = {{"type", "screenshot"},
                         {"index", bg.screenshot_index},
                         {"offset", {bg.offset_x, bg.offset_y}}};
      break;
  }
  return j;
}

RenderContext context_from_json(const nlohmann::json& j,
                                const std::vector<std::shared_ptr<const Image>>& pool) {
  RenderContext ctx;
  ctx.canvas_width = j.at("canvas").at(0).get<int>();
  ctx.canvas_height = j.at("canvas").at(1).get<int>();
  ctx.x_pos = j.at("pos").at(0).get<int>();
  ctx.y_pos = j.at("pos").at(1).get<int>();
  ctx.label = j.at("label").get<std::string>();
  const auto& b = j.at("background");
  const std::string type = b.at("type").get<std::string>();
  if (type == "white") {
    ctx.background = Background::white();
  } else if (type == "solid") {
    const auto& c = b.at("color");
    ctx.background = Background::solid({c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(),
                                        c.at(2).get<std::uint8_t>()});
  } else if (type == "screenshot") {
    ctx.background.type = Background::Type::kScreenshot;
    ctx.background.screenshot_index = b.at("index").get<int>();
    ctx.background.offset_x = b.at("offset").at(0).get<int>();
    ctx.background.offset_y = b.at("offset").at(1).get<int>();
    const auto idx = ctx.background.screenshot_index;
    if (idx < 0 || static_cast<std::size_t>(idx) >= pool.size()) {
      throw std::runtime_error("context: screenshot index " + std::to_string(idx) +
                               " not in pool of size " + std::to_string(pool.size()));
    }
    ctx.background.screenshot = pool[static_cast<std::size_t>(idx)];
  } else {
    throw std::runtime_error("context: unknown background type " + type);
  }
  return ctx;
}

}  // namespace uiattr
