#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/image.hpp"

// Region-of-interest pipeline: Sobel gradient magnitude -> Otsu threshold ->
// 3x3 morphological closing -> largest 8-connected component -> hole fill.
// `preprocess` composes it and resizes the masked colour image to 300x300.

namespace thermo {

inline constexpr std::size_t kRoiSize = 300;

// Sobel 3x3 gradient magnitude on a replicate-padded image:
// magnitude = min(255, round(sqrt(gx^2 + gy^2))).
inline Image detect_edges(const Image& img) {
  if (img.channels != 1) {
    throw ShapeError("detect_edges: expected a 1-channel image");
  }
  if (img.width < 3 || img.height < 3) {
    throw ShapeError("detect_edges: image must be at least 3x3, got " +
                     std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  const auto clamp_i = [](long v, long hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  Image out(img.width, img.height, 1);
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      int p[3][3];
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          p[dy + 1][dx + 1] =
              img.at(static_cast<std::size_t>(clamp_i(x + dx, w - 1)),
                     static_cast<std::size_t>(clamp_i(y + dy, h - 1)));
      const int gx = (p[0][2] + 2 * p[1][2] + p[2][2]) - (p[0][0] + 2 * p[1][0] + p[2][0]);
      const int gy = (p[2][0] + 2 * p[2][1] + p[2][2]) - (p[0][0] + 2 * p[0][1] + p[0][2]);
      const double mag = std::sqrt(static_cast<double>(gx) * gx + static_cast<double>(gy) * gy);
      const double r = std::floor(mag + 0.5);
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
          static_cast<std::uint8_t>(r > 255.0 ? 255.0 : r);
    }
  }
  return out;
}

// Otsu's threshold over a 256-bin histogram: maximizes the between-class
// variance; ties resolve to the smallest threshold. Foreground is value > t.
inline int otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
  std::uint64_t total = 0;
  double weighted = 0.0;
  for (int v = 0; v < 256; ++v) {
    total += hist[v];
    weighted += static_cast<double>(v) * static_cast<double>(hist[v]);
  }
  int best_t = 0;
  double best_var = -1.0;
  std::uint64_t w0 = 0;
  double sum0 = 0.0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += static_cast<double>(t) * static_cast<double>(hist[t]);
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = sum0 / static_cast<double>(w0);
    const double mu1 = (weighted - sum0) / static_cast<double>(w1);
    const double between = static_cast<double>(w0) * static_cast<double>(w1) *
                           (mu0 - mu1) * (mu0 - mu1);
    if (between > best_var) {
      best_var = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace detail {

inline Mask dilate3x3(const Mask& m) {
  Mask out(m.width, m.height);
  const long w = static_cast<long>(m.width), h = static_cast<long>(m.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (long dy = -1; dy <= 1 && !v; ++dy)
        for (long dx = -1; dx <= 1 && !v; ++dx) {
          const long nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;  // outside ignored
          v = m.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
        }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = v;
    }
  return out;
}

inline Mask erode3x3(const Mask& m) {
  Mask out(m.width, m.height);
  const long w = static_cast<long>(m.width), h = static_cast<long>(m.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      std::uint8_t v = 1;
      for (long dy = -1; dy <= 1 && v; ++dy)
        for (long dx = -1; dx <= 1 && v; ++dx) {
          const long nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;  // outside ignored
          if (!m.at(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny))) v = 0;
        }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = v;
    }
  return out;
}

// Largest 8-connected foreground component; ties go to the component seen
// first in row-major scan order.
inline Mask largest_component(const Mask& m) {
  const std::size_t w = m.width, h = m.height;
  std::vector<std::int32_t> label(w * h, -1);
  std::vector<std::size_t> area;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (!m.bits[start] || label[start] >= 0) continue;
    const std::int32_t id = static_cast<std::int32_t>(area.size());
    area.push_back(0);
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++area[static_cast<std::size_t>(id)];
      const long px = static_cast<long>(p % w), py = static_cast<long>(p / w);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long nx = px + dx, ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h))
            continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (m.bits[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(q);
          }
        }
    }
  }
  std::int32_t best = -1;
  std::size_t best_area = 0;
  for (std::size_t i = 0; i < area.size(); ++i) {
    if (area[i] > best_area) {
      best_area = area[i];
      best = static_cast<std::int32_t>(i);
    }
  }
  Mask out(w, h);
  if (best >= 0)
    for (std::size_t i = 0; i < w * h; ++i) out.bits[i] = label[i] == best ? 1 : 0;
  return out;
}

// Background flood from the border (4-connectivity); zeros the flood cannot
// reach are interior holes and become foreground.
inline Mask fill_holes(const Mask& m) {
  const std::size_t w = m.width, h = m.height;
  std::vector<std::uint8_t> outside(w * h, 0);
  std::vector<std::size_t> stack;
  const auto push = [&](std::size_t x, std::size_t y) {
    const std::size_t p = y * w + x;
    if (!m.bits[p] && !outside[p]) {
      outside[p] = 1;
      stack.push_back(p);
    }
  };
  for (std::size_t x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (std::size_t y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    const std::size_t x = p % w, y = p / w;
    if (x > 0) push(x - 1, y);
    if (x + 1 < w) push(x + 1, y);
    if (y > 0) push(x, y - 1);
    if (y + 1 < h) push(x, y + 1);
  }
  Mask out(w, h);
  for (std::size_t i = 0; i < w * h; ++i) out.bits[i] = (m.bits[i] || !outside[i]) ? 1 : 0;
  return out;
}

}  // namespace detail

// Edge-magnitude image -> ROI mask. Throws NoRoiError when thresholding
// leaves no foreground (e.g. an all-zero edge image).
inline Mask build_roi_mask(const Image& edges) {
  if (edges.channels != 1) {
    throw ShapeError("build_roi_mask: expected a 1-channel edge image");
  }
  std::array<std::uint64_t, 256> hist{};
  for (std::uint8_t v : edges.pixels) ++hist[v];
  const int t = otsu_threshold(hist);

  Mask binary(edges.width, edges.height);
  std::size_t fg = 0;
  for (std::size_t i = 0; i < edges.pixels.size(); ++i) {
    binary.bits[i] = edges.pixels[i] > t ? 1 : 0;
    fg += binary.bits[i];
  }
  if (fg == 0) {
    throw NoRoiError("build_roi_mask: no ROI found (no pixel above threshold " +
                     std::to_string(t) + ")");
  }
  const Mask closed = detail::erode3x3(detail::dilate3x3(binary));
  const Mask component = detail::largest_component(closed);
  if (component.area() == 0) {
    throw NoRoiError("build_roi_mask: no ROI found after morphology");
  }
  return detail::fill_holes(component);
}

// Full pipeline of the preprocessing stage: grayscale -> edges -> mask ->
// masked colour image -> 300x300 resize.
inline Image preprocess(const Image& color) {
  if (color.channels != 3) {
    throw ShapeError("preprocess: expected a 3-channel image, got " +
                     std::to_string(color.channels) + " channel(s)");
  }
  const Image gray = to_grayscale(color);
  const Image edges = detect_edges(gray);
  const Mask roi = build_roi_mask(edges);
  const Image masked = apply_mask(color, roi);
  return resize(masked, kRoiSize, kRoiSize);
}

}  // namespace thermo
