#include "uiattr/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace uiattr {

namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument(std::string(what) + ": image sizes differ");
  }
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty image");
}

// Summed-area table of one channel expression, (w+1) x (h+1).
template <typename F>
std::vector<double> integral(int w, int h, F f) {
  std::vector<double> s(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += f(x, y);
      s[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = s[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  return s;
}

double box_sum(const std::vector<double>& s, int w, int x, int y, int bw, int bh) {
  const auto at = [&](int xx, int yy) { return s[static_cast<std::size_t>(yy) * (w + 1) + xx]; };
  return at(x + bw, y + bh) - at(x, y + bh) - at(x + bw, y) + at(x, y);
}

}  // namespace

double pixel_mse(const Image& a, const Image& b) {
  require_same_size(a, b, "pixel_mse");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  double s = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = (static_cast<double>(pa[i]) - pb[i]) / 255.0;
    s += d * d;
  }
  return s / static_cast<double>(pa.size());
}

double ssim(const Image& a, const Image& b, const SsimOptions& o) {
  require_same_size(a, b, "ssim");
  if (o.window < 1) throw std::invalid_argument("ssim: window must be positive");
  const int w = a.width(), h = a.height();
  const int ww = std::min(o.window, w), wh = std::min(o.window, h);
  const double n = static_cast<double>(ww) * wh;
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < 3; ++c) {
    const auto sa = integral(w, h, [&](int x, int y) { return static_cast<double>(a.channel(x, y, c)); });
    const auto sb = integral(w, h, [&](int x, int y) { return static_cast<double>(b.channel(x, y, c)); });
    const auto saa = integral(w, h, [&](int x, int y) { return static_cast<double>(a.channel(x, y, c)) * a.channel(x, y, c); });
    const auto sbb = integral(w, h, [&](int x, int y) { return static_cast<double>(b.channel(x, y, c)) * b.channel(x, y, c); });
    const auto sab = integral(w, h, [&](int x, int y) { return static_cast<double>(a.channel(x, y, c)) * b.channel(x, y, c); });
    for (int y = 0; y + wh <= h; ++y) {
      for (int x = 0; x + ww <= w; ++x) {
        const double mx = box_sum(sa, w, x, y, ww, wh) / n;
        const double my = box_sum(sb, w, x, y, ww, wh) / n;
        const double vx = std::max(0.0, box_sum(saa, w, x, y, ww, wh) / n - mx * mx);
        const double vy = std::max(0.0, box_sum(sbb, w, x, y, ww, wh) / n - my * my);
        const double cxy = box_sum(sab, w, x, y, ww, wh) / n - mx * my;
        total += ((2 * mx * my + o.c1) * (2 * cxy + o.c2)) / ((mx * mx + my * my + o.c1) * (vx + vy + o.c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

double wasserstein(const Image& a, const Image& b) {
  require_same_size(a, b, "wasserstein");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  const double n = static_cast<double>(pa.size() / 3);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::array<double, 256> ha{}, hb{};
    for (std::size_t i = static_cast<std::size_t>(c); i < pa.size(); i += 3) {
      ha[pa[i]] += 1.0;
      hb[pb[i]] += 1.0;
    }
    double ca = 0.0, cb = 0.0, d = 0.0;
    for (int v = 0; v < 255; ++v) {
      ca += ha[static_cast<std::size_t>(v)] / n;
      cb += hb[static_cast<std::size_t>(v)] / n;
      d += std::abs(ca - cb);
    }
    total += d;
  }
  return total / 3.0;
}

Image center_component(const Image& img, const AttributeConfig& config, const RenderContext& ctx) {
  const Box box = component_box(config, ctx);
  const int dx = center_offset(box.w, img.width()) - box.x;
  const int dy = center_offset(box.h, img.height()) - box.y;
  if (dx == 0 && dy == 0) return img;
  return shift_image(img, dx, dy);
}

}  // namespace uiattr
