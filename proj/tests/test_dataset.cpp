#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "thermo/dataset.hpp"
#include "thermo/roi.hpp"

using namespace thermo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("thermo_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("manifest: row parsing and label derivation") {
  const auto dir = temp_dir("manifest_basic");
  spit(dir / "m.csv",
       "# source: unit test\n"
       "path,adulteration_pct,sample_id,split,augmented\n"
       "img/p01_f00.ppm,0,p01,train,false\n"
       "img/p02_f00.ppm,25,p02,val,true\n");
  const Manifest m = load_manifest(dir / "m.csv");
  REQUIRE(m.records.size() == 2);
  REQUIRE(m.provenance == std::vector<std::string>{"source: unit test"});
  REQUIRE(m.records[0].label() == 0);  // 0% adulteration is the negative class
  REQUIRE(m.records[0].split == Split::kTrain);
  REQUIRE_FALSE(m.records[0].augmented);
  REQUIRE(m.records[1].label() == 1);
  REQUIRE(m.records[1].augmented);
}

TEST_CASE("manifest: validation failures carry the line number") {
  const auto dir = temp_dir("manifest_bad");
  SECTION("adulteration level outside the study set") {
    spit(dir / "m.csv",
         "path,adulteration_pct,sample_id,split,augmented\n"
         "a.ppm,30,p01,train,false\n");
    REQUIRE_THROWS_WITH(load_manifest(dir / "m.csv"),
                        Catch::Matchers::ContainsSubstring(":2:") &&
                            Catch::Matchers::ContainsSubstring("30"));
  }
  SECTION("duplicate path") {
    spit(dir / "m.csv",
         "path,adulteration_pct,sample_id,split,augmented\n"
         "a.ppm,0,p01,train,false\n"
         "a.ppm,10,p02,train,false\n");
    REQUIRE_THROWS_WITH(load_manifest(dir / "m.csv"),
                        Catch::Matchers::ContainsSubstring(":3:") &&
                            Catch::Matchers::ContainsSubstring("duplicate"));
  }
  SECTION("missing column") {
    spit(dir / "m.csv",
         "path,adulteration_pct,sample_id,split,augmented\n"
         "a.ppm,0,p01,train\n");
    REQUIRE_THROWS_WITH(load_manifest(dir / "m.csv"),
                        Catch::Matchers::ContainsSubstring("5 columns"));
  }
  SECTION("wrong header") {
    spit(dir / "m.csv", "path,pct\na.ppm,0\n");
    REQUIRE_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
  }
}

TEST_CASE("manifest: save/load round-trip is stable") {
  const auto dir = temp_dir("manifest_rt");
  Manifest m;
  m.base_dir = dir;
  m.provenance = {"source: rt", "seed: 9"};
  for (int i = 0; i < 6; ++i) {
    SampleRecord r;
    r.path = "img_" + std::to_string(i) + ".ppm";
    r.adulteration_pct = i % 2 ? 25 : 0;
    r.sample_id = "s" + std::to_string(i / 2);
    r.split = i % 3 == 0 ? Split::kUnassigned : (i % 3 == 1 ? Split::kTrain : Split::kVal);
    r.augmented = i % 2 == 1;
    m.records.push_back(r);
  }
  save_manifest(m, dir / "m.csv");
  const Manifest loaded = load_manifest(dir / "m.csv");
  REQUIRE(loaded.provenance == m.provenance);
  REQUIRE(loaded.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    REQUIRE(loaded.records[i].path == m.records[i].path);
    REQUIRE(loaded.records[i].adulteration_pct == m.records[i].adulteration_pct);
    REQUIRE(loaded.records[i].sample_id == m.records[i].sample_id);
    REQUIRE(loaded.records[i].split == m.records[i].split);
    REQUIRE(loaded.records[i].augmented == m.records[i].augmented);
  }
  // byte-normalized: re-saving reproduces the same file
  save_manifest(loaded, dir / "m2.csv");
  REQUIRE(slurp(dir / "m.csv") == slurp(dir / "m2.csv"));
}

TEST_CASE("manifest: Table-2 level counts give the Table-3 class totals") {
  Manifest m;
  const int levels[] = {0, 10, 25, 50};
  const int counts[] = {150, 75, 75, 60};
  int id = 0;
  for (int li = 0; li < 4; ++li)
    for (int k = 0; k < counts[li]; ++k) {
      SampleRecord r;
      r.path = "f" + std::to_string(id++) + ".ppm";
      r.adulteration_pct = levels[li];
      r.sample_id = "s" + std::to_string(li) + "_" + std::to_string(k / 15);
      m.records.push_back(r);
    }
  const ClassCounts c = class_counts(m);
  REQUIRE(c.negatives == 150);
  REQUIRE(c.positives == 210);
  REQUIRE(c.total() == 360);
}

TEST_CASE("select_frames follows the one-frame-per-interval policy") {
  SECTION("15-minute clip at 8.7 fps, 30 s interval") {
    const auto idx = select_frames(7830, 30.0, 8.7);
    REQUIRE(idx.size() == 30);
    REQUIRE(idx[0] == 0);
    REQUIRE(idx[1] == 261);
    REQUIRE(idx[2] == 522);
    REQUIRE(idx.back() == 7569);
  }
  SECTION("single frame") {
    REQUIRE(select_frames(1, 30.0, 8.7) == std::vector<std::size_t>{0});
  }
  SECTION("interval longer than the clip") {
    REQUIRE(select_frames(100, 1000.0, 8.7) == std::vector<std::size_t>{0});
  }
  SECTION("non-positive arguments are rejected") {
    REQUIRE_THROWS_AS(select_frames(10, 0.0, 8.7), DataError);
    REQUIRE_THROWS_AS(select_frames(10, 30.0, -1.0), DataError);
  }
  SECTION("indices are strictly increasing and bounded by ceil(duration/interval)") {
    SplitMix64 rng(55);
    for (int t = 0; t < 30; ++t) {
      const std::size_t frames = 1 + rng.next() % 5000;
      const double fps = rng.next_uniform(1.0, 30.0);
      const double interval = rng.next_uniform(0.5, 60.0);
      const auto idx = select_frames(frames, interval, fps);
      for (std::size_t i = 1; i < idx.size(); ++i) REQUIRE(idx[i] > idx[i - 1]);
      const double duration = static_cast<double>(frames) / fps;
      REQUIRE(idx.size() <= static_cast<std::size_t>(std::ceil(duration / interval)) + 1);
    }
  }
}

namespace {

// 24 samples with the study's composition (10 pure, 5+5+4 adulterated),
// several frames each.
Manifest study_manifest(std::size_t frames_per_sample) {
  Manifest m;
  const int levels[] = {0, 10, 25, 50};
  const int samples[] = {10, 5, 5, 4};
  for (int li = 0; li < 4; ++li)
    for (int s = 0; s < samples[li]; ++s)
      for (std::size_t f = 0; f < frames_per_sample; ++f) {
        SampleRecord r;
        r.sample_id = "p" + std::to_string(li) + "_" + std::to_string(s);
        r.path = r.sample_id + "_f" + std::to_string(f) + ".ppm";
        r.adulteration_pct = levels[li];
        m.records.push_back(r);
      }
  return m;
}

}  // namespace

TEST_CASE("split_manifest groups by sample and hits the quota") {
  const Manifest m = study_manifest(15);
  const Manifest out = split_manifest(m, 0.25, 7);

  std::set<std::string> val_ids, train_ids;
  for (const auto& r : out.records) {
    REQUIRE(r.split != Split::kUnassigned);
    (r.split == Split::kVal ? val_ids : train_ids).insert(r.sample_id);
  }
  REQUIRE(val_ids.size() == 6);
  REQUIRE(train_ids.size() == 18);

  SECTION("no sample straddles the folds") {
    for (const auto& id : val_ids) REQUIRE(train_ids.count(id) == 0);
  }
  SECTION("same seed reproduces the same assignment") {
    const Manifest again = split_manifest(m, 0.25, 7);
    for (std::size_t i = 0; i < out.records.size(); ++i)
      REQUIRE(again.records[i].split == out.records[i].split);
  }
  SECTION("both classes appear in both folds") {
    bool val_has[2] = {false, false}, train_has[2] = {false, false};
    for (const auto& r : out.records)
      (r.split == Split::kVal ? val_has : train_has)[r.label()] = true;
    REQUIRE((val_has[0] && val_has[1] && train_has[0] && train_has[1]));
  }
}

TEST_CASE("split_manifest contract failures") {
  SECTION("fewer than 2 samples per class") {
    Manifest m;
    for (int i = 0; i < 4; ++i) {
      SampleRecord r;
      r.path = "f" + std::to_string(i) + ".ppm";
      r.sample_id = i < 3 ? "neg" + std::to_string(i) : "pos0";
      r.adulteration_pct = i < 3 ? 0 : 50;
      m.records.push_back(r);
    }
    REQUIRE_THROWS_WITH(split_manifest(m, 0.25, 1),
                        Catch::Matchers::ContainsSubstring("2 samples per class"));
  }
  SECTION("nothing to assign") {
    Manifest m = study_manifest(2);
    for (auto& r : m.records) r.split = Split::kTrain;
    REQUIRE_THROWS_AS(split_manifest(m, 0.25, 1), DataError);
  }
  SECTION("bad fraction") {
    REQUIRE_THROWS_AS(split_manifest(study_manifest(2), 0.0, 1), DataError);
    REQUIRE_THROWS_AS(split_manifest(study_manifest(2), 1.0, 1), DataError);
  }
}

TEST_CASE("synthetic generator: counts, dimensions, reproducibility") {
  const auto dir = temp_dir("synth_counts");
  const Manifest m = generate_synthetic(100, 4242, dir / "a");
  REQUIRE(m.records.size() == 200);
  const ClassCounts c = class_counts(m);
  REQUIRE(c.negatives == 100);
  REQUIRE(c.positives == 100);

  const Image sample = load_image(m.resolve(m.records[0]));
  REQUIRE(sample.width == 300);
  REQUIRE(sample.height == 300);
  REQUIRE(sample.channels == 3);

  SECTION("sample ids are unique and splits start unassigned") {
    std::set<std::string> ids;
    for (const auto& r : m.records) {
      REQUIRE(r.split == Split::kUnassigned);
      REQUIRE(ids.insert(r.sample_id).second);
    }
  }
  SECTION("fixed seed reproduces identical bytes") {
    const Manifest m2 = generate_synthetic(3, 4242, dir / "b");
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(slurp(dir / "a" / m.records[i].path) == slurp(dir / "b" / m2.records[i].path));
    }
  }
  SECTION("count of zero is rejected") {
    REQUIRE_THROWS_AS(generate_synthetic(0, 1, dir / "c"), DataError);
  }

  // Learnability oracle for everything downstream: the mean intensity over
  // the central disk (r <= 60, inside every blob core) must separate the
  // classes by >= 15 gray levels and support a >= 90% threshold classifier.
  SECTION("classes are separable by a brute-force threshold sweep") {
    std::vector<std::pair<double, int>> stats;
    double mean_by_class[2] = {0.0, 0.0};
    for (const auto& rec : m.records) {
      const Image img = load_image(m.resolve(rec));
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
          const double dx = static_cast<double>(x) - 150.0;
          const double dy = static_cast<double>(y) - 150.0;
          if (dx * dx + dy * dy <= 60.0 * 60.0) {
            sum += img.at(x, y, 0);
            ++count;
          }
        }
      stats.push_back({sum / static_cast<double>(count), rec.label()});
      mean_by_class[rec.label()] += sum / static_cast<double>(count);
    }
    mean_by_class[0] /= 100.0;
    mean_by_class[1] /= 100.0;
    REQUIRE(mean_by_class[0] - mean_by_class[1] >= 15.0);  // pure runs hotter

    std::sort(stats.begin(), stats.end());
    std::size_t best = 0;
    for (std::size_t cut = 0; cut <= stats.size(); ++cut) {
      std::size_t ok = 0;
      for (std::size_t i = 0; i < stats.size(); ++i) {
        const int pred = i < cut ? 1 : 0;  // cooler disk means adulterated
        ok += pred == stats[i].second;
      }
      best = std::max(best, ok);
    }
    REQUIRE(static_cast<double>(best) / static_cast<double>(stats.size()) >= 0.90);
  }
}
