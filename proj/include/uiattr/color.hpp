#pragma once

#include "uiattr/attributes.hpp"

namespace uiattr {

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// 8-bit sRGB (D65) to CIE 1976 L*a*b*. The reference white is the image of
/// sRGB white under the sRGB->XYZ matrix, so (255,255,255) maps to L*=100, a*=b*=0.
Lab srgb_to_lab(Rgb c);

/// CIE76 color difference: Euclidean distance in L*a*b*.
double delta_e76(Rgb a, Rgb b);

}  // namespace uiattr
