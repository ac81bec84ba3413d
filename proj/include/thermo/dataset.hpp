#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/image.hpp"
#include "thermo/rng.hpp"

// Manifest registry, the frame-sampling policy, the grouped train/validation
// split, and a synthetic thermal-image generator for desk-scale runs.

namespace thermo {

enum class Split { kUnassigned, kTrain, kVal };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    default: return "unassigned";
  }
}

// One labeled thermal image. The class label is always derived from the
// adulteration level: 0% is the negative (unadulterated) class, everything
// else is positive.
struct SampleRecord {
  std::string path;
  int adulteration_pct = 0;  // one of {0, 10, 25, 50}
  std::string sample_id;
  Split split = Split::kUnassigned;
  bool augmented = false;

  bool positive() const { return adulteration_pct != 0; }
  int label() const { return positive() ? 1 : 0; }
};

struct ClassCounts {
  std::size_t negatives = 0;
  std::size_t positives = 0;
  std::size_t total() const { return negatives + positives; }
};

struct Manifest {
  std::vector<SampleRecord> records;
  std::vector<std::string> provenance;   // free-text header lines
  std::filesystem::path base_dir;        // record paths resolve against this

  std::filesystem::path resolve(const SampleRecord& rec) const {
    const std::filesystem::path p(rec.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline ClassCounts class_counts(const Manifest& m) {
  ClassCounts c;
  for (const auto& r : m.records) {
    if (r.positive()) ++c.positives;
    else ++c.negatives;
  }
  return c;
}

inline constexpr const char* kManifestHeader =
    "path,adulteration_pct,sample_id,split,augmented";

namespace detail {

inline bool valid_pct(int pct) {
  return pct == 0 || pct == 10 || pct == 25 || pct == 50;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

// Lexically relative path from `base` to `target`; falls back to the
// absolute form when the two share no usable prefix.
inline std::string relative_to(const std::filesystem::path& target,
                               const std::filesystem::path& base) {
  const auto rel = target.lexically_normal().lexically_relative(base.lexically_normal());
  if (rel.empty() || *rel.begin() == "..") {
    const auto again = std::filesystem::absolute(target).lexically_normal()
                           .lexically_relative(
                               std::filesystem::absolute(base).lexically_normal());
    if (!again.empty()) return again.generic_string();
    return std::filesystem::absolute(target).generic_string();
  }
  return rel.generic_string();
}

}  // namespace detail

// CSV with header `path,adulteration_pct,sample_id,split,augmented`.
// Lines starting with '#' before the header carry free-text provenance.
inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());

  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::set<std::string> seen_paths;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line[0] == '#') {
        std::string note = line.substr(1);
        if (!note.empty() && note.front() == ' ') note.erase(note.begin());
        m.provenance.push_back(note);
        continue;
      }
      if (line != kManifestHeader) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": bad manifest header, expected `" + std::string(kManifestHeader) +
                        "`, got `" + line + "`");
      }
      header_seen = true;
      continue;
    }

    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 5) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns, got " +
                      std::to_string(fields.size()));
    }
    SampleRecord rec;
    rec.path = fields[0];
    if (rec.path.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty path");
    }
    try {
      rec.adulteration_pct = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": adulteration_pct is not an integer: " + fields[1]);
    }
    if (!detail::valid_pct(rec.adulteration_pct)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": adulteration_pct " + fields[1] + " is not a study level {0,10,25,50}");
    }
    rec.sample_id = fields[2];
    if (fields[3] == "train") rec.split = Split::kTrain;
    else if (fields[3] == "val") rec.split = Split::kVal;
    else if (fields[3] == "unassigned") rec.split = Split::kUnassigned;
    else
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown split `" +
                      fields[3] + "`");
    if (fields[4] == "true") rec.augmented = true;
    else if (fields[4] == "false") rec.augmented = false;
    else
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": augmented must be true or false, got `" + fields[4] + "`");
    if (!seen_paths.insert(rec.path).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate path `" +
                      rec.path + "`");
    }
    m.records.push_back(std::move(rec));
  }
  if (!header_seen) throw DataError(path.string() + ": missing manifest header");
  return m;
}

// Writes UTF-8, LF endings. Record paths are re-expressed relative to the
// target location so a manifest stays valid wherever it is saved.
inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  const std::filesystem::path target_dir = path.parent_path();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& note : m.provenance) out << "# " << note << "\n";
  out << kManifestHeader << "\n";
  std::set<std::string> seen_paths;
  for (const auto& rec : m.records) {
    std::string rel = rec.path;
    if (m.base_dir.lexically_normal() != target_dir.lexically_normal()) {
      rel = detail::relative_to(m.resolve(rec), target_dir);
    }
    if (!seen_paths.insert(rel).second) {
      throw DataError("save_manifest: duplicate path `" + rel + "`");
    }
    out << rel << ',' << rec.adulteration_pct << ',' << rec.sample_id << ','
        << split_name(rec.split) << ',' << (rec.augmented ? "true" : "false") << "\n";
  }
  if (!out) throw DataError("short write on manifest: " + path.string());
}

// Frame indices for "one frame per interval": round(k * interval * fps),
// k = 0, 1, ..., while the index stays below frame_count. Duplicates are
// dropped, order preserved.
inline std::vector<std::size_t> select_frames(std::size_t frame_count, double interval_s,
                                              double fps) {
  if (frame_count == 0) return {};
  if (!(interval_s > 0.0) || !(fps > 0.0)) {
    throw DataError("select_frames: interval and fps must be positive");
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0;; ++k) {
    const double pos = static_cast<double>(k) * interval_s * fps;
    const auto idx = static_cast<std::size_t>(std::llround(pos));
    if (idx >= frame_count) break;
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

namespace detail {

// Round half to even; quotas land on .5 often (e.g. 10 * 0.25) and this
// keeps totals closest to the requested fraction across classes.
inline std::size_t round_half_even(double v) {
  const double fl = std::floor(v);
  const double frac = v - fl;
  auto n = static_cast<std::size_t>(fl);
  if (frac > 0.5) return n + 1;
  if (frac < 0.5) return n;
  return n % 2 == 0 ? n : n + 1;
}

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

// Grouped split: every frame of one physical sample lands in the same fold.
// Per class, round(n_samples * val_fraction) samples (at least one, at most
// n-1) go to validation; assignment order comes from the pinned PRNG.
inline Manifest split_manifest(const Manifest& m, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0)) {
    throw DataError("split_manifest: val_fraction must lie in (0, 1)");
  }
  // samples in first-appearance order, negatives and positives separately
  std::vector<std::string> neg_ids, pos_ids;
  std::map<std::string, int> sample_class;
  bool any_unassigned = false;
  for (const auto& rec : m.records) {
    if (rec.split != Split::kUnassigned) continue;
    any_unassigned = true;
    if (sample_class.emplace(rec.sample_id, rec.label()).second) {
      (rec.positive() ? pos_ids : neg_ids).push_back(rec.sample_id);
    }
  }
  if (!any_unassigned) throw DataError("split_manifest: no unassigned records");
  if (neg_ids.size() < 2 || pos_ids.size() < 2) {
    throw DataError("split_manifest: need at least 2 samples per class, got " +
                    std::to_string(neg_ids.size()) + " negative / " +
                    std::to_string(pos_ids.size()) + " positive");
  }

  SplitMix64 rng(seed);
  std::set<std::string> val_ids;
  for (auto* ids : {&neg_ids, &pos_ids}) {
    detail::shuffle(*ids, rng);
    std::size_t quota = detail::round_half_even(static_cast<double>(ids->size()) * val_fraction);
    quota = std::clamp<std::size_t>(quota, 1, ids->size() - 1);
    for (std::size_t i = 0; i < quota; ++i) val_ids.insert((*ids)[i]);
  }

  Manifest out = m;
  for (auto& rec : out.records) {
    if (rec.split != Split::kUnassigned) continue;
    rec.split = val_ids.count(rec.sample_id) ? Split::kVal : Split::kTrain;
  }
  return out;
}

// Synthetic stand-in for the private thermal dataset: a centred warm disk
// with a radial Gaussian profile. The unadulterated class is hotter and more
// compact, the adulterated one cooler and more diffuse.
//   I(r) = clamp(round(B + P * exp(-(r/sigma)^2)), 0, 255), B = 25
//   unadulterated: sigma in [70, 85],  P in [150, 180]
//   adulterated:   sigma in [95, 110], P in [110, 140]
// The disk centre jitters +-10 px and every pixel gets uniform noise in
// [-8, 8], applied equally to the three channels. Image k of class c draws
// from an independent stream seeded with splitmix64(seed XOR image_index).
inline Manifest generate_synthetic(std::size_t count_per_class, std::uint64_t seed,
                                   const std::filesystem::path& out_dir) {
  if (count_per_class == 0) {
    throw DataError("generate_synthetic: count_per_class must be at least 1");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) {
    throw DataError("generate_synthetic: cannot create output directory " +
                    out_dir.string());
  }

  constexpr int kBackground = 25;
  constexpr int kNoise = 8;
  constexpr std::size_t kSize = 300;

  Manifest m;
  m.base_dir = out_dir;
  m.provenance = {"source: synthetic thermal generator",
                  "seed: " + std::to_string(seed),
                  "per_class: " + std::to_string(count_per_class)};

  const int pct_cycle[3] = {10, 25, 50};
  for (std::size_t cls = 0; cls < 2; ++cls) {
    for (std::size_t k = 0; k < count_per_class; ++k) {
      const std::size_t index = cls * count_per_class + k;
      SplitMix64 rng(splitmix64_mix(seed ^ static_cast<std::uint64_t>(index)));
      const bool adulterated = cls == 1;
      const double sigma =
          adulterated ? rng.next_uniform(95.0, 110.0) : rng.next_uniform(70.0, 85.0);
      const double peak =
          adulterated ? rng.next_uniform(110.0, 140.0) : rng.next_uniform(150.0, 180.0);
      const double cx = 150.0 + static_cast<double>(rng.next_int(-10, 10));
      const double cy = 150.0 + static_cast<double>(rng.next_int(-10, 10));

      Image img(kSize, kSize, 3);
      for (std::size_t y = 0; y < kSize; ++y) {
        for (std::size_t x = 0; x < kSize; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          const double r2 = dx * dx + dy * dy;
          const double body = kBackground + peak * std::exp(-r2 / (sigma * sigma));
          const int noise = static_cast<int>(rng.next_int(-kNoise, kNoise));
          const int v = static_cast<int>(std::floor(body + 0.5)) + noise;
          const auto px = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
          img.at(x, y, 0) = px;
          img.at(x, y, 1) = px;
          img.at(x, y, 2) = px;
        }
      }

      char name[64];
      std::snprintf(name, sizeof(name), "syn_%c_%04zu.ppm", adulterated ? 'a' : 'u', k);
      save_image(out_dir / name, img);

      SampleRecord rec;
      rec.path = name;
      rec.adulteration_pct = adulterated ? pct_cycle[k % 3] : 0;
      rec.sample_id = std::string(name, std::strlen(name) - 4);
      rec.split = Split::kUnassigned;
      rec.augmented = false;
      m.records.push_back(std::move(rec));
    }
  }
  return m;
}

}  // namespace thermo
