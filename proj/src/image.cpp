#include "uiattr/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace uiattr {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("Image: negative size");
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6 " + std::to_string(img.width()) + " " + std::to_string(img.height()) +
                    " 255\n";
  out.append(reinterpret_cast<const char*>(img.pixels().data()), img.pixels().size());
  return out;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (start == pos) throw ImageIoError("ppm: truncated header");
  return s.substr(start, pos - start);
}

int parse_dim(const std::string& tok) {
  if (tok.empty() || tok.size() > 6 ||
      !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw ImageIoError("ppm: bad header number '" + tok + "'");
  }
  return std::stoi(tok);
}

}  // namespace

Image decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw ImageIoError("ppm: missing P6 magic");
  const int w = parse_dim(next_token(bytes, pos));
  const int h = parse_dim(next_token(bytes, pos));
  const int maxval = parse_dim(next_token(bytes, pos));
  if (maxval != 255) throw ImageIoError("ppm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ImageIoError("ppm: truncated header");
  }
  ++pos;
  const std::size_t body = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() - pos != body) {
    throw ImageIoError("ppm: expected " + std::to_string(body) + " pixel bytes, found " +
                       std::to_string(bytes.size() - pos));
  }
  Image img(w, h);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.pixels().begin());
  return img;
}

void write_image(const Image& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ImageIoError("cannot open " + path.string() + " for writing");
  const std::string data = encode_ppm(img);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw ImageIoError("write failed: " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return decode_ppm(ss.str());
  } catch (const ImageIoError& e) {
    throw ImageIoError(path.string() + ": " + e.what());
  }
}

std::string_view padding_mode_name(PaddingMode m) {
  switch (m) {
    case PaddingMode::kEdge: return "edge";
    case PaddingMode::kConstant: return "constant";
    case PaddingMode::kBboxExpand: return "bbox_expand";
    case PaddingMode::kNone: return "none";
  }
  return "?";
}

PaddingMode parse_padding_mode(std::string_view s) {
  if (s == "edge") return PaddingMode::kEdge;
  if (s == "constant") return PaddingMode::kConstant;
  if (s == "bbox_expand") return PaddingMode::kBboxExpand;
  if (s == "none") return PaddingMode::kNone;
  throw std::invalid_argument("unknown padding mode: " + std::string(s));
}

Image pad_image(const Image& img, int target_w, int target_h, PaddingMode mode, Rgb constant) {
  if (target_w < img.width() || target_h < img.height()) {
    throw std::invalid_argument("pad_image: target smaller than source");
  }
  if (img.empty()) throw std::invalid_argument("pad_image: empty source");
  if (mode == PaddingMode::kNone) {
    Image out(target_w, target_h, {0, 0, 0});
    paste_image(out, img, 0, 0);
    return out;
  }
  const int ox = center_offset(img.width(), target_w);
  const int oy = center_offset(img.height(), target_h);
  if (mode == PaddingMode::kConstant) {
    Image out(target_w, target_h, constant);
    paste_image(out, img, ox, oy);
    return out;
  }
  Image out(target_w, target_h);
  for (int y = 0; y < target_h; ++y) {
    const int sy = std::clamp(y - oy, 0, img.height() - 1);
    for (int x = 0; x < target_w; ++x) {
      const int sx = std::clamp(x - ox, 0, img.width() - 1);
      out.set(x, y, img.at(sx, sy));
    }
  }
  return out;
}

Image shift_image(const Image& img, int dx, int dy) {
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    const int sy = std::clamp(y - dy, 0, img.height() - 1);
    for (int x = 0; x < img.width(); ++x) {
      const int sx = std::clamp(x - dx, 0, img.width() - 1);
      out.set(x, y, img.at(sx, sy));
    }
  }
  return out;
}

Image crop_image(const Image& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > img.width() || y + h > img.height()) {
    throw std::invalid_argument("crop_image: region outside image");
  }
  Image out(w, h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) out.set(i, j, img.at(x + i, y + j));
  }
  return out;
}

void paste_image(Image& canvas, const Image& img, int x, int y) {
  for (int j = 0; j < img.height(); ++j) {
    const int cy = y + j;
    if (cy < 0 || cy >= canvas.height()) continue;
    for (int i = 0; i < img.width(); ++i) {
      const int cx = x + i;
      if (cx < 0 || cx >= canvas.width()) continue;
      canvas.set(cx, cy, img.at(i, j));
    }
  }
}

Box foreground_box(const Image& img) {
  if (img.empty()) return {};
  std::map<Rgb, int> counts;
  for (int x = 0; x < img.width(); ++x) {
    ++counts[img.at(x, 0)];
    ++counts[img.at(x, img.height() - 1)];
  }
  for (int y = 0; y < img.height(); ++y) {
    ++counts[img.at(0, y)];
    ++counts[img.at(img.width() - 1, y)];
  }
  Rgb bg = counts.begin()->first;
  int best = 0;
  for (const auto& [c, n] : counts) {
    if (n > best) {
      best = n;
      bg = c;
    }
  }
  int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (img.at(x, y) == bg) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace uiattr
