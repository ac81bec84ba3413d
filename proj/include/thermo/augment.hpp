#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "thermo/dataset.hpp"
#include "thermo/error.hpp"
#include "thermo/image.hpp"
#include "thermo/rng.hpp"

// Temperature Fluctuations augmentation: bounded random integer perturbations
// of the pixel intensities, output = clamp(pixel + variation, 0, 255).

namespace thermo {

enum class FluctuationMode { kPerPixel, kPerImage };

struct FluctuationSpec {
  int amplitude = 5;  // variations drawn from [-amplitude, +amplitude]
  FluctuationMode mode = FluctuationMode::kPerPixel;
  std::uint64_t seed = 0;
};

// Variations come from splitmix64(spec.seed) as (next64 mod (2A+1)) - A and
// are consumed in storage order: row-major pixels, channels interleaved.
// Per-image mode draws a single variation for the whole image.
inline Image temperature_fluctuate(const Image& img, const FluctuationSpec& spec) {
  if (spec.amplitude < 0 || spec.amplitude > 255) {
    throw DataError("temperature_fluctuate: amplitude must lie in [0, 255], got " +
                    std::to_string(spec.amplitude));
  }
  const std::uint64_t span = 2 * static_cast<std::uint64_t>(spec.amplitude) + 1;
  SplitMix64 rng(spec.seed);
  Image out = img;
  if (spec.mode == FluctuationMode::kPerImage) {
    const int variation = static_cast<int>(rng.next() % span) - spec.amplitude;
    for (auto& p : out.pixels) {
      const int v = static_cast<int>(p) + variation;
      p = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
    }
  } else {
    for (auto& p : out.pixels) {
      const int variation = static_cast<int>(rng.next() % span) - spec.amplitude;
      const int v = static_cast<int>(p) + variation;
      p = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
    }
  }
  return out;
}

// Per-channel absolute difference between an original and its augmented
// counterpart, one grayscale image per channel.
inline std::array<Image, 3> channel_abs_diff(const Image& original, const Image& augmented) {
  if (!original.same_dims(augmented) || original.channels != 3 || augmented.channels != 3) {
    throw ShapeError("channel_abs_diff: images must be 3-channel with matching dimensions");
  }
  std::array<Image, 3> out{Image(original.width, original.height, 1),
                           Image(original.width, original.height, 1),
                           Image(original.width, original.height, 1)};
  for (std::size_t i = 0; i < original.pixel_count(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const int a = original.pixels[3 * i + c];
      const int b = augmented.pixels[3 * i + c];
      out[c].pixels[i] = static_cast<std::uint8_t>(a > b ? a - b : b - a);
    }
  }
  return out;
}

struct AugmentOutcome {
  Manifest manifest;                 // originals plus appended augmented records
  std::vector<std::string> errors;   // per-record failures; the run continues
};

// Emits exactly one augmented copy per record into `out_dir` using the
// `_aug` name suffix. Record i uses seed splitmix64(spec.seed XOR i), so a
// rerun (or a parallel run) reproduces identical bytes.
inline AugmentOutcome augment_dataset(const Manifest& manifest, const FluctuationSpec& spec,
                                      const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) {
    throw DataError("augment_dataset: cannot create output directory " + out_dir.string());
  }

  AugmentOutcome outcome{manifest, {}};
  std::set<std::string> used_names;
  for (const auto& rec : manifest.records) {
    used_names.insert(std::filesystem::path(rec.path).filename().string());
  }

  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const SampleRecord& rec = manifest.records[i];
    Image img;
    try {
      img = load_image(manifest.resolve(rec));
    } catch (const DataError& e) {
      outcome.errors.push_back(rec.path + ": " + e.what());
      continue;
    }
    FluctuationSpec rec_spec = spec;
    rec_spec.seed = splitmix64_mix(spec.seed ^ static_cast<std::uint64_t>(i));
    const Image aug = temperature_fluctuate(img, rec_spec);

    const std::filesystem::path src(rec.path);
    const std::string ext = img.channels == 3 ? ".ppm" : ".pgm";
    std::string name = src.stem().string() + "_aug" + ext;
    for (std::size_t k = 2; !used_names.insert(name).second; ++k) {
      name = src.stem().string() + "_aug_" + std::to_string(k) + ext;
    }
    save_image(out_dir / name, aug);

    SampleRecord copy = rec;
    copy.path = detail::relative_to(out_dir / name, manifest.base_dir);
    copy.augmented = true;
    outcome.manifest.records.push_back(std::move(copy));
  }
  return outcome;
}

}  // namespace thermo
