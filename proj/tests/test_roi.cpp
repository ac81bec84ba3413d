#include <catch2/catch_amalgamated.hpp>

#include "support/fixtures.hpp"
#include "thermo/roi.hpp"

using namespace thermo;

namespace {

Image rot180(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(img.width - 1 - x, img.height - 1 - y, c) = img.at(x, y, c);
  return out;
}

// Background (4-connected) flood from the border; true if any zero pixel
// is unreachable, i.e. the mask has an interior hole.
bool has_holes(const Mask& m) {
  std::vector<std::uint8_t> seen(m.width * m.height, 0);
  std::vector<std::size_t> stack;
  const auto push = [&](std::size_t x, std::size_t y) {
    const std::size_t p = y * m.width + x;
    if (!m.bits[p] && !seen[p]) {
      seen[p] = 1;
      stack.push_back(p);
    }
  };
  for (std::size_t x = 0; x < m.width; ++x) {
    push(x, 0);
    push(x, m.height - 1);
  }
  for (std::size_t y = 0; y < m.height; ++y) {
    push(0, y);
    push(m.width - 1, y);
  }
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    const std::size_t x = p % m.width, y = p / m.width;
    if (x > 0) push(x - 1, y);
    if (x + 1 < m.width) push(x + 1, y);
    if (y > 0) push(x, y - 1);
    if (y + 1 < m.height) push(x, y + 1);
  }
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    if (!m.bits[i] && !seen[i]) return true;
  return false;
}

std::size_t count_components(const Mask& m) {
  std::vector<std::uint8_t> seen(m.width * m.height, 0);
  std::size_t components = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < m.bits.size(); ++start) {
    if (!m.bits[start] || seen[start]) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long px = static_cast<long>(p % m.width), py = static_cast<long>(p / m.width);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long nx = px + dx, ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(m.width) ||
              ny >= static_cast<long>(m.height))
            continue;
          const std::size_t q =
              static_cast<std::size_t>(ny) * m.width + static_cast<std::size_t>(nx);
          if (m.bits[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
    }
  }
  return components;
}

}  // namespace

TEST_CASE("sobel: constant image has no response") {
  Image img(8, 8, 1);
  std::fill(img.pixels.begin(), img.pixels.end(), 77);
  const Image edges = detect_edges(img);
  for (auto p : edges.pixels) REQUIRE(p == 0);
}

TEST_CASE("sobel: vertical step edge responds on the boundary columns") {
  Image img(10, 6, 1);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 10; ++x) img.at(x, y) = x < 5 ? 0 : 255;
  const Image edges = detect_edges(img);
  for (std::size_t y = 0; y < 6; ++y) {
    REQUIRE(edges.at(4, y) == 255);  // |gx| = 4*255, clamped
    REQUIRE(edges.at(5, y) == 255);
    REQUIRE(edges.at(0, y) == 0);
    REQUIRE(edges.at(9, y) == 0);
  }
}

TEST_CASE("sobel: response commutes with 180-degree rotation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = fixtures::disk_image(40, 30, 17.0, 14.0, 9.0, 200, 30, 10, seed);
    REQUIRE(detect_edges(rot180(img)) == rot180(detect_edges(img)));
  }
}

TEST_CASE("sobel: rejects images smaller than the kernel") {
  REQUIRE_THROWS_AS(detect_edges(Image(2, 5, 1)), ShapeError);
}

TEST_CASE("otsu splits a bimodal histogram") {
  std::array<std::uint64_t, 256> hist{};
  hist[20] = 1000;
  hist[200] = 500;
  const int t = otsu_threshold(hist);
  REQUIRE(t >= 20);
  REQUIRE(t < 200);
}

TEST_CASE("roi mask: analytic disk oracle") {
  const double cx = 150.0, cy = 150.0, r = 60.0;
  const Image img = fixtures::disk_image(300, 300, cx, cy, r, 200, 20, 6, 42);
  const Mask mask = build_roi_mask(detect_edges(img));
  REQUIRE(fixtures::disk_iou(mask, cx, cy, r) >= 0.95);
}

TEST_CASE("roi mask: only the largest component survives") {
  // two bright rectangles on a zero background, areas 500 and 50
  Image edges(100, 60, 1);
  for (std::size_t y = 10; y < 30; ++y)
    for (std::size_t x = 10; x < 35; ++x) edges.at(x, y) = 200;  // 25*20 = 500
  for (std::size_t y = 40; y < 45; ++y)
    for (std::size_t x = 70; x < 80; ++x) edges.at(x, y) = 200;  // 10*5 = 50
  const Mask mask = build_roi_mask(edges);
  REQUIRE(mask.area() == 500);
  for (std::size_t y = 40; y < 45; ++y)
    for (std::size_t x = 70; x < 80; ++x) REQUIRE(mask.at(x, y) == 0);
  for (std::size_t y = 11; y < 29; ++y)
    for (std::size_t x = 11; x < 34; ++x) REQUIRE(mask.at(x, y) == 1);
}

TEST_CASE("roi mask: annulus interior is filled") {
  Image edges(120, 120, 1);
  for (std::size_t y = 0; y < 120; ++y)
    for (std::size_t x = 0; x < 120; ++x) {
      const double dx = static_cast<double>(x) - 60.0, dy = static_cast<double>(y) - 60.0;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= 40.0 * 40.0 && d2 >= 25.0 * 25.0) edges.at(x, y) = 220;
    }
  const Mask mask = build_roi_mask(edges);
  REQUIRE(mask.at(60, 60) == 1);  // hole centre is inside after filling
  REQUIRE(!has_holes(mask));
}

TEST_CASE("roi mask: all-zero edge image has no ROI") {
  REQUIRE_THROWS_AS(build_roi_mask(Image(50, 50, 1)), NoRoiError);
}

TEST_CASE("roi mask: always one component, never a hole") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SplitMix64 rng(seed);
    const double cx = rng.next_uniform(100.0, 200.0);
    const double cy = rng.next_uniform(100.0, 200.0);
    const double r = rng.next_uniform(40.0, 80.0);
    const Image img = fixtures::disk_image(300, 300, cx, cy, r, 190, 25, 8, seed * 13);
    const Mask mask = build_roi_mask(detect_edges(img));
    REQUIRE(count_components(mask) == 1);
    REQUIRE(!has_holes(mask));
  }
}

TEST_CASE("preprocess: warm-cuvette fixture") {
  const Image gray = fixtures::disk_image(200, 160, 100.0, 80.0, 45.0, 210, 15, 0, 0);
  const Image color = fixtures::to_color(gray);
  const Image out = preprocess(color);
  REQUIRE(out.width == kRoiSize);
  REQUIRE(out.height == kRoiSize);
  REQUIRE(out.channels == 3);
  // far corners are outside the ROI, the blob centre is inside
  REQUIRE(out.at(2, 2, 0) == 0);
  REQUIRE(out.at(297, 297, 1) == 0);
  REQUIRE(out.at(150, 150, 0) > 100);

  SECTION("deterministic: identical bytes in, identical bytes out") {
    const Image again = preprocess(color);
    REQUIRE(again == out);
  }
}

TEST_CASE("preprocess: all-black input propagates the empty-mask error") {
  REQUIRE_THROWS_AS(preprocess(Image(64, 64, 3)), NoRoiError);
}

TEST_CASE("preprocess: grayscale input is rejected") {
  REQUIRE_THROWS_AS(preprocess(Image(64, 64, 1)), ShapeError);
}
