#pragma once

// Deterministic software rasterizer for the Button component.
//
// Paint order: background, shadow, fill, border, text. Geometry is evaluated
// in component-local coordinates, so integer translations of the component
// translate the output exactly.

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/image.hpp"

namespace uiattr {

struct Background {
  enum class Type { kWhite, kSolid, kScreenshot };
  Type type = Type::kWhite;
  Rgb color{255, 255, 255};
  /// Source image for kScreenshot; tiled when smaller than the canvas.
  std::shared_ptr<const Image> screenshot;
  /// Index of the screenshot in its pool (metadata for manifests).
  int screenshot_index = -1;
  int offset_x = 0;
  int offset_y = 0;

  static Background white() { return {}; }
  static Background solid(Rgb c) {
    Background b;
    b.type = Type::kSolid;
    b.color = c;
    return b;
  }
};

struct RenderContext {
  int canvas_width = 96;
  int canvas_height = 48;
  /// Top-left corner of the component.
  int x_pos = 0;
  int y_pos = 0;
  Background background;
  /// Text content; metadata, not an inferred attribute.
  std::string label = "OK";
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pixels the shadow reaches beyond the component rectangle (box blur of
/// radius s applied twice spreads 2s; the shadow is offset ceil(s/2) down).
int shadow_spread(int shadow);
int shadow_offset(int shadow);

/// Component rectangle in canvas coordinates.
Box component_box(const AttributeConfig& config, const RenderContext& ctx);
/// Component rectangle grown by the full shadow extent.
Box footprint_box(const AttributeConfig& config, const RenderContext& ctx);

/// True when the component rectangle and its shadow offset fit in the canvas
/// (the render precondition). The blurred shadow tail may be clipped.
bool fits(const AttributeConfig& config, const RenderContext& ctx);
/// True when the whole footprint, including the blur tail, fits.
bool footprint_fits(const AttributeConfig& config, const RenderContext& ctx);

/// Renders the component. Throws DomainError for invalid configs and
/// GeometryError when the component does not fit the canvas.
Image render(const AttributeConfig& config, const RenderContext& ctx);

/// Pixels touched by any paint layer (shadow, fill, border or text).
std::vector<bool> render_footprint(const AttributeConfig& config, const RenderContext& ctx);

/// Background-only canvas for `ctx`.
Image render_background(const RenderContext& ctx);

/// Word list used for button labels.
const std::vector<std::string>& label_words();

/// Cap height in pixels used for a text size (0 for no text).
int cap_height(int text_size);

nlohmann::json context_to_json(const RenderContext& ctx);
/// `pool` resolves screenshot indices; may be empty when no screenshot is used.
RenderContext context_from_json(const nlohmann::json& j,
                                const std::vector<std::shared_ptr<const Image>>& pool = {});

}  // namespace uiattr
