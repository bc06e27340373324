#pragma once

// Reference computations written independently of the library code paths.

#include <algorithm>
#include <cmath>
#include <vector>

#include "uiattr/attributes.hpp"
#include "uiattr/image.hpp"

namespace oracle {

struct Lab {
  double l, a, b;
};

// sRGB -> XYZ -> Lab with the CIE kappa/epsilon constants. White is the
// matrix image of (1, 1, 1) so that sRGB white lands on L = 100 exactly.
inline Lab lab(uiattr::Rgb c) {
  const double m[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                          {0.2126729, 0.7151522, 0.0721750},
                          {0.0193339, 0.1191920, 0.9503041}};
  const auto lin = [](int v) {
    const double s = v / 255.0;
    return s > 0.04045 ? std::pow((s + 0.055) / 1.055, 2.4) : s / 12.92;
  };
  const double rgb[3] = {lin(c.r), lin(c.g), lin(c.b)};
  double xyz[3], white[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = 0.0;
    white[i] = 0.0;
    for (int j = 0; j < 3; ++j) {
      xyz[i] += m[i][j] * rgb[j];
      white[i] += m[i][j];
    }
  }
  const double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const double t = xyz[i] / white[i];
    f[i] = t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0;
  }
  return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

inline double delta_e(uiattr::Rgb x, uiattr::Rgb y) {
  const Lab p = lab(x), q = lab(y);
  return std::hypot(p.l - q.l, p.a - q.a, p.b - q.b);
}

// Threshold table, transcribed row by row: {same upper bound, similar upper bound}.
struct Row {
  uiattr::AttributeKind kind;
  double same, similar;
};

inline const std::vector<Row>& threshold_table() {
  using K = uiattr::AttributeKind;
  static const std::vector<Row> rows = {
      {K::kBorderColor, 5, 10}, {K::kBorderRadius, 1, 3}, {K::kBorderWidth, 0, 1}, {K::kMainColor, 5, 10},
      {K::kPadding, 1, 3},      {K::kShadow, 0, 2},       {K::kTextColor, 5, 10},  {K::kTextSize, 1, 2},
      {K::kHeight, 1, 3},       {K::kWidth, 2, 4},
  };
  return rows;
}

// 0 same, 1 similar, 2 different
inline int classify(double eps, double same, double similar) {
  if (eps <= same) return 0;
  if (eps <= similar) return 1;
  return 2;
}

// Distance on numeric codes; the round radius is infinitely far from any finite radius.
inline double numeric_distance(uiattr::AttributeKind k, int a, int b) {
  if (k == uiattr::AttributeKind::kBorderRadius && (a == uiattr::kRoundRadius) != (b == uiattr::kRoundRadius)) {
    return INFINITY;
  }
  return std::abs(a - b);
}

// --- image metrics, computed the slow way -----------------------------------

inline double mse(const uiattr::Image& a, const uiattr::Image& b) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double d = a.channel(x, y, c) / 255.0 - b.channel(x, y, c) / 255.0;
        s += d * d;
        ++n;
      }
    }
  }
  return s / n;
}

// Two-pass window statistics per window position.
inline double ssim(const uiattr::Image& a, const uiattr::Image& b, int window = 8) {
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  const int ww = std::min(window, a.width()), wh = std::min(window, a.height());
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y0 = 0; y0 + wh <= a.height(); ++y0) {
      for (int x0 = 0; x0 + ww <= a.width(); ++x0) {
        double ma = 0, mb = 0;
        for (int y = y0; y < y0 + wh; ++y)
          for (int x = x0; x < x0 + ww; ++x) {
            ma += a.channel(x, y, c);
            mb += b.channel(x, y, c);
          }
        const double n = ww * wh;
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (int y = y0; y < y0 + wh; ++y)
          for (int x = x0; x < x0 + ww; ++x) {
            const double da = a.channel(x, y, c) - ma, db = b.channel(x, y, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= n;
        vb /= n;
        cov /= n;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / count;
}

// Equal-size samples: W1 is the mean gap between sorted values.
inline double wasserstein(const uiattr::Image& a, const uiattr::Image& b) {
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<int> va, vb;
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        va.push_back(a.channel(x, y, c));
        vb.push_back(b.channel(x, y, c));
      }
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
    total += s / va.size();
  }
  return total / 3.0;
}

}  // namespace oracle
