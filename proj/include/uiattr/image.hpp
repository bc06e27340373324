#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "uiattr/attributes.hpp"

namespace uiattr {

/// Row-major, 3-channel, 8-bit raster.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const {
    const std::size_t i = offset(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = offset(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }
  std::uint8_t channel(int x, int y, int c) const { return pixels_[offset(x, y) + c]; }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::vector<std::uint8_t>& pixels() { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary PPM: "P6 <w> <h> 255\n" followed by w*h*3 bytes.
std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& bytes);
void write_image(const Image& img, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

enum class PaddingMode {
  kEdge,        ///< replicate the nearest border pixel outward
  kConstant,    ///< fill with a given color
  kBboxExpand,  ///< re-render on a larger canvas (falls back to edge without a config)
  kNone,        ///< no padding: image at the top-left, remaining pixels black
};

std::string_view padding_mode_name(PaddingMode m);
PaddingMode parse_padding_mode(std::string_view s);

/// Offset at which a source of size `src` is centered in `dst`.
inline int center_offset(int src, int dst) { return (dst - src) / 2; }

/// Pads `img` to target size, centering the source (except kNone). kBboxExpand
/// without a re-render callback behaves like kEdge; see pad_for_model().
Image pad_image(const Image& img, int target_w, int target_h, PaddingMode mode,
                Rgb constant = {255, 255, 255});

/// Translates by (dx, dy), filling uncovered pixels by edge replication.
Image shift_image(const Image& img, int dx, int dy);

Image crop_image(const Image& img, int x, int y, int w, int h);

/// Sub-image of `img` pasted into `canvas` at (x, y); pixels outside are clipped.
void paste_image(Image& canvas, const Image& img, int x, int y);

/// Bounding box of pixels that differ from the most frequent border color.
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool empty() const { return w <= 0 || h <= 0; }
};
Box foreground_box(const Image& img);

}  // namespace uiattr
