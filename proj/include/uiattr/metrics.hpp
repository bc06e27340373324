#pragma once

// Image-similarity baselines: pixel MSE, SSIM and a histogram Wasserstein distance.

#include "uiattr/attributes.hpp"
#include "uiattr/image.hpp"
#include "uiattr/render.hpp"

namespace uiattr {

/// Mean squared difference over all channels with intensities scaled to [0, 1].
double pixel_mse(const Image& a, const Image& b);

struct SsimOptions {
  int window = 8;
  double c1 = (0.01 * 255) * (0.01 * 255);
  double c2 = (0.03 * 255) * (0.03 * 255);
};

/// Mean SSIM over every window position (stride 1) and channel. Windows are
/// clamped to the image size.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

/// Mean over channels of the 1-D Wasserstein-1 distance between the 256-bin
/// intensity histograms, in intensity units.
double wasserstein(const Image& a, const Image& b);

/// Translates `img` so that the component of `config` placed by `ctx` sits at
/// the canvas center (uncovered pixels replicate the border).
Image center_component(const Image& img, const AttributeConfig& config, const RenderContext& ctx);

}  // namespace uiattr
