#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "thermo/error.hpp"

// 8-bit raster carrier plus the binary PGM (P5) / PPM (P6) codec. Pixels are
// row-major and channel-interleaved for 3-channel images. Only maxval 255 is
// supported; other formats are converted externally.

namespace thermo {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c)
      : width(w), height(h), channels(c), pixels(w * h * c, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return width * height; }
  bool same_dims(const Image& o) const { return width == o.width && height == o.height; }
};

inline bool operator==(const Image& a, const Image& b) {
  return a.width == b.width && a.height == b.height && a.channels == b.channels &&
         a.pixels == b.pixels;
}

struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1 per pixel

  Mask() = default;
  Mask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::size_t area() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
};

namespace detail {

class PnmReader {
 public:
  explicit PnmReader(const std::string& bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments (to end of line).
  void skip_space() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t(1) << 32)) {
        throw ParseError(std::string("pnm: malformed header: ") + what + " too large",
                         start);
      }
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("pnm: malformed header: expected ") + what, pos_);
    }
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  const std::string& bytes() const { return bytes_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Decodes binary PGM (P5) or PPM (P6), maxval 255.
inline Image decode_image(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("pnm: bad magic, expected P5 or P6", 0);
  }
  detail::PnmReader rd(bytes);
  rd.advance(2);

  Image img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  img.width = rd.read_uint("width");
  img.height = rd.read_uint("height");
  if (img.width == 0 || img.height == 0) {
    throw ParseError("pnm: malformed header: zero image dimension", rd.pos());
  }
  rd.skip_space();
  const std::size_t maxval_at = rd.pos();
  const std::size_t maxval = rd.read_uint("maxval");
  if (maxval != 255) {
    throw ParseError("pnm: unsupported maxval " + std::to_string(maxval) +
                         " (only 255 is supported)",
                     maxval_at);
  }
  // exactly one whitespace byte separates the header from the payload
  if (rd.pos() >= bytes.size() ||
      (bytes[rd.pos()] != '\n' && bytes[rd.pos()] != ' ' && bytes[rd.pos()] != '\t' &&
       bytes[rd.pos()] != '\r')) {
    throw ParseError("pnm: malformed header: missing whitespace before payload", rd.pos());
  }
  rd.advance(1);

  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - rd.pos() < need) {
    throw ParseError("pnm: truncated payload: need " + std::to_string(need) +
                         " bytes, have " + std::to_string(bytes.size() - rd.pos()),
                     bytes.size());
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos()),
                    bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos() + need));
  return img;
}

// Emits P5 for 1-channel, P6 for 3-channel. decode(encode(img)) == img, and
// the header layout is canonical so the byte round-trip is exact too.
inline std::string encode_image(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw DataError("pnm: only 1- or 3-channel images can be encoded, got " +
                    std::to_string(img.channels));
  }
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw DataError("pnm: pixel buffer does not match image dimensions");
  }
  std::string out;
  out += img.channels == 3 ? "P6\n" : "P5\n";
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

inline void save_image(const std::filesystem::path& path, const Image& img) {
  const std::string bytes = encode_image(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write on image file: " + path.string());
}

namespace detail {
inline std::uint8_t round_half_up_u8(double v) {
  const double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(r < 0.0 ? 0.0 : (r > 255.0 ? 255.0 : r));
}
}  // namespace detail

// ITU-R BT.601 luminance, rounded half-up.
inline Image to_grayscale(const Image& img) {
  if (img.channels != 3) {
    throw ShapeError("to_grayscale: expected a 3-channel image, got " +
                     std::to_string(img.channels) + " channel(s)");
  }
  Image gray(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double r = img.pixels[3 * i + 0];
    const double g = img.pixels[3 * i + 1];
    const double b = img.pixels[3 * i + 2];
    gray.pixels[i] = detail::round_half_up_u8(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return gray;
}

// Zeroes every pixel outside the mask.
inline Image apply_mask(const Image& img, const Mask& mask) {
  if (img.width != mask.width || img.height != mask.height) {
    throw ShapeError("apply_mask: image " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " does not match mask " +
                     std::to_string(mask.width) + "x" + std::to_string(mask.height));
  }
  Image out = img;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!mask.bits[i]) {
      for (std::size_t c = 0; c < img.channels; ++c) out.pixels[i * img.channels + c] = 0;
    }
  }
  return out;
}

// Bilinear resize with half-pixel-centred sampling; edge samples replicate.
// Resizing to the source dimensions is the exact identity.
inline Image resize(const Image& img, std::size_t target_w, std::size_t target_h) {
  if (target_w == 0 || target_h == 0) {
    throw ShapeError("resize: target dimensions must be positive");
  }
  Image out(target_w, target_h, img.channels);
  const double sx = static_cast<double>(img.width) / static_cast<double>(target_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target_h);
  for (std::size_t y = 0; y < target_h; ++y) {
    double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    if (src_y < 0.0) src_y = 0.0;
    std::size_t y0 = static_cast<std::size_t>(src_y);
    if (y0 >= img.height - 1) y0 = img.height - 1;
    const std::size_t y1 = y0 + 1 < img.height ? y0 + 1 : y0;
    const double fy = src_y - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_w; ++x) {
      double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      if (src_x < 0.0) src_x = 0.0;
      std::size_t x0 = static_cast<std::size_t>(src_x);
      if (x0 >= img.width - 1) x0 = img.width - 1;
      const std::size_t x1 = x0 + 1 < img.width ? x0 + 1 : x0;
      const double fx = src_x - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double a = img.at(x0, y0, c), b = img.at(x1, y0, c);
        const double d = img.at(x0, y1, c), e = img.at(x1, y1, c);
        const double v = (1.0 - fy) * ((1.0 - fx) * a + fx * b) +
                         fy * ((1.0 - fx) * d + fx * e);
        out.at(x, y, c) = detail::round_half_up_u8(v);
      }
    }
  }
  return out;
}

}  // namespace thermo
