#pragma once

// Synthetic raster fixtures shared by the imaging tests and the acceptance
// suite.

#include <cmath>
#include <cstdint>

#include "thermo/image.hpp"
#include "thermo/rng.hpp"

namespace fixtures {

// Hard-edged bright disk on a dark background with optional uniform noise.
inline thermo::Image disk_image(std::size_t w, std::size_t h, double cx, double cy,
                                double radius, int fg, int bg, int noise,
                                std::uint64_t seed) {
  thermo::Image img(w, h, 1);
  thermo::SplitMix64 rng(seed);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      int v = dx * dx + dy * dy <= radius * radius ? fg : bg;
      if (noise > 0) v += static_cast<int>(rng.next_int(-noise, noise));
      img.at(x, y) = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
    }
  }
  return img;
}

// Intersection-over-union of a mask against the analytic disk.
inline double disk_iou(const thermo::Mask& mask, double cx, double cy, double radius) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const bool in_disk = dx * dx + dy * dy <= radius * radius;
      const bool in_mask = mask.at(x, y) != 0;
      inter += in_disk && in_mask;
      uni += in_disk || in_mask;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline thermo::Image to_color(const thermo::Image& gray) {
  thermo::Image out(gray.width, gray.height, 3);
  for (std::size_t i = 0; i < gray.pixel_count(); ++i) {
    out.pixels[3 * i] = gray.pixels[i];
    out.pixels[3 * i + 1] = gray.pixels[i];
    out.pixels[3 * i + 2] = gray.pixels[i];
  }
  return out;
}

}  // namespace fixtures
