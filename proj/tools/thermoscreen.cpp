// thermoscreen: honey-adulteration screening on thermal images.
//
// Pipeline subcommands: synth -> preprocess -> augment -> split -> train ->
// eval/predict/plot. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "thermo/augment.hpp"
#include "thermo/checkpoint.hpp"
#include "thermo/dataset.hpp"
#include "thermo/history.hpp"
#include "thermo/model.hpp"
#include "thermo/parallel.hpp"
#include "thermo/roi.hpp"
#include "thermo/train.hpp"
#include "thermo/version.hpp"

namespace fs = std::filesystem;
using namespace thermo;

namespace {

std::string version_text() {
  std::string out;
  out += std::string(kToolName) + " " + kToolVersion + "\n";
  out += std::string("prng=") + kPrngName + "\n";
  out += std::string("checkpoint=") + kCheckpointMagic + "/" +
         std::to_string(kCheckpointVersion) + "\n";
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Output name for a processed record: source stem + suffix, deduplicated.
std::string output_name(const std::string& path, const char* suffix,
                        std::set<std::string>& used) {
  const std::string stem = fs::path(path).stem().string();
  std::string name = stem + suffix + ".ppm";
  for (std::size_t k = 2; !used.insert(name).second; ++k) {
    name = stem + suffix + "_" + std::to_string(k) + ".ppm";
  }
  return name;
}

int cmd_synth(std::size_t per_class, std::uint64_t seed, const fs::path& out_dir) {
  const Manifest m = generate_synthetic(per_class, seed, out_dir);
  save_manifest(m, out_dir / "manifest.csv");
  const auto c = class_counts(m);
  std::cout << "synth: wrote " << m.records.size() << " images (" << c.negatives
            << " unadulterated / " << c.positives << " adulterated) to " << out_dir.string()
            << "\n";
  std::cout << "manifest: " << (out_dir / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_preprocess(const fs::path& manifest_path, const fs::path& out_dir) {
  const Manifest m = load_manifest(manifest_path);
  fs::create_directories(out_dir);
  Manifest out = m;
  out.base_dir = out_dir;
  std::set<std::string> used;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const Image img = load_image(m.resolve(m.records[i]));
    const Image processed = preprocess(img);
    const std::string name = output_name(m.records[i].path, "", used);
    save_image(out_dir / name, processed);
    out.records[i].path = name;
  }
  out.provenance.push_back("preprocess: roi=sobel+otsu resize=" +
                           std::to_string(kRoiSize) + "x" + std::to_string(kRoiSize));
  save_manifest(out, out_dir / "manifest.csv");
  std::cout << "preprocess: " << m.records.size() << " images -> " << out_dir.string()
            << "\n";
  return 0;
}

int cmd_augment(const fs::path& manifest_path, int amplitude, const std::string& mode,
                std::uint64_t seed, const fs::path& out_dir, bool include_val) {
  const Manifest m = load_manifest(manifest_path);
  FluctuationSpec spec;
  spec.amplitude = amplitude;
  spec.seed = seed;
  if (mode == "per-pixel") spec.mode = FluctuationMode::kPerPixel;
  else if (mode == "per-image") spec.mode = FluctuationMode::kPerImage;
  else throw CLI::ValidationError("--mode must be per-pixel or per-image");

  // Augmentation stays out of the validation fold unless asked for.
  Manifest subset;
  subset.base_dir = m.base_dir;
  for (const auto& rec : m.records) {
    if (include_val || rec.split != Split::kVal) subset.records.push_back(rec);
  }
  fs::create_directories(out_dir);
  const AugmentOutcome outcome = augment_dataset(subset, spec, out_dir);
  for (const auto& err : outcome.errors) std::cerr << "warning: " << err << "\n";

  Manifest merged = m;
  merged.provenance.push_back("augment: amplitude=" + std::to_string(amplitude) +
                              " mode=" + mode + " seed=" + std::to_string(seed));
  for (std::size_t i = subset.records.size(); i < outcome.manifest.records.size(); ++i) {
    SampleRecord rec = outcome.manifest.records[i];
    rec.path = detail::relative_to(subset.base_dir / rec.path, out_dir);
    merged.records.push_back(std::move(rec));
  }
  merged.base_dir = out_dir;
  // original records keep resolving against their own directory
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    merged.records[i].path = detail::relative_to(m.resolve(m.records[i]), out_dir);
  }
  save_manifest(merged, out_dir / "manifest.csv");
  const std::size_t augmented =
      outcome.manifest.records.size() - subset.records.size();
  std::cout << "augment: " << augmented << " augmented images -> " << out_dir.string()
            << " (" << outcome.errors.size() << " errors)\n";
  std::cout << "manifest: " << merged.records.size() << " records total\n";
  return 0;
}

int cmd_split(const fs::path& manifest_path, double val_fraction, std::uint64_t seed,
              const fs::path& out_path) {
  const Manifest m = load_manifest(manifest_path);
  Manifest out = split_manifest(m, val_fraction, seed);
  out.provenance.push_back("split: val_fraction=" + fmt(val_fraction) +
                           " seed=" + std::to_string(seed) + " grouped_by=sample_id");
  const fs::path target = out_path.empty() ? manifest_path : out_path;
  save_manifest(out, target);
  std::size_t train_n = 0, val_n = 0;
  for (const auto& r : out.records) {
    if (r.split == Split::kTrain) ++train_n;
    else if (r.split == Split::kVal) ++val_n;
  }
  std::cout << "split: " << train_n << " train / " << val_n << " val -> "
            << target.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& manifest_path, const TrainConfig& cfg,
              const fs::path& out_path) {
  std::cout << kToolName << " train: lr=" << cfg.learning_rate << " batch="
            << cfg.batch_size << " epochs=" << cfg.epochs << " steps="
            << cfg.steps_per_epoch << " optimizer=adam seed=" << cfg.seed << "\n";

  const Manifest m = load_manifest(manifest_path);
  const LabeledImages train_set = load_labeled(m, Split::kTrain);
  const LabeledImages val_set = load_labeled(m, Split::kVal);
  std::cout << "folds: " << train_set.size() << " train / " << val_set.size()
            << " val\n";

  auto model = Model<float>::build(ModelDef::proposed(), cfg.seed);
  std::cout << "model: " << model.parameter_count() << " learnable parameters\n";

  const TrainHistory history =
      train(model, cfg, train_set, val_set, [&](const EpochRow& r) {
        std::cout << "epoch " << r.epoch << "/" << cfg.epochs << ": train_loss="
                  << fmt(r.train_loss) << " train_acc=" << fmt(r.train_acc)
                  << " val_loss=" << fmt(r.val_loss) << " val_acc=" << fmt(r.val_acc)
                  << " (" << fmt(r.seconds) << "s)\n"
                  << std::flush;
      });

  save_checkpoint(model, cfg, out_path);
  std::cout << "checkpoint: " << out_path.string() << "\n";
  if (!history.empty()) {
    fs::path csv = out_path;
    csv.replace_extension(".history.csv");
    fs::path svg = out_path;
    svg.replace_extension(".history.svg");
    export_history(history, csv, svg);
    std::cout << "history: " << csv.string() << ", " << svg.string() << "\n";
  }
  return 0;
}

Split parse_fold(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  throw CLI::ValidationError("--split must be all, train or val");
}

int cmd_eval(const fs::path& model_path, const fs::path& manifest_path, double threshold,
             const std::string& fold, const fs::path& out_csv, bool json) {
  const auto loaded = load_checkpoint<float>(model_path);
  const Manifest m = load_manifest(manifest_path);
  LabeledImages data;
  if (fold == "all") {
    for (const auto& rec : m.records) {
      data.images.push_back(load_image(m.resolve(rec)));
      data.labels.push_back(rec.label());
      data.names.push_back(rec.path);
    }
  } else {
    data = load_labeled(m, parse_fold(fold));
  }
  const MetricsReport r = evaluate(loaded.model, data, threshold);

  if (json) {
    std::cout << "{\"tp\":" << r.tp << ",\"tn\":" << r.tn << ",\"fp\":" << r.fp
              << ",\"fn\":" << r.fn << ",\"accuracy\":" << fmt(r.accuracy)
              << ",\"precision\":" << fmt(r.precision) << ",\"recall\":" << fmt(r.recall)
              << ",\"loss\":" << fmt(r.loss) << "}\n";
  } else {
    std::cout << "tp=" << r.tp << "\n"
              << "tn=" << r.tn << "\n"
              << "fp=" << r.fp << "\n"
              << "fn=" << r.fn << "\n"
              << "accuracy=" << fmt(r.accuracy) << "\n"
              << "precision=" << fmt(r.precision) << "\n"
              << "recall=" << fmt(r.recall) << "\n"
              << "loss=" << fmt(r.loss) << "\n";
  }
  if (!out_csv.empty()) {
    std::ofstream out(out_csv, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write metrics csv: " + out_csv.string());
    out << "tp,tn,fp,fn,accuracy,precision,recall,loss\n"
        << r.tp << ',' << r.tn << ',' << r.fp << ',' << r.fn << ',' << fmt(r.accuracy)
        << ',' << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.loss) << "\n";
  }
  return 0;
}

int cmd_predict(const fs::path& model_path, const fs::path& image_path, double threshold,
                bool json) {
  const auto loaded = load_checkpoint<float>(model_path);
  const Image img = load_image(image_path);
  LabeledImages one;
  one.images.push_back(img);
  one.labels.push_back(0);
  one.names.push_back(image_path.string());
  detail::check_fold(loaded.model, one, "predict");

  const Tensor<float> batch = detail::batch_to_tensor<float>(one, {0});
  const auto probs = loaded.model.forward(batch, BnMode::kInfer);
  const double p = probs[0];
  const char* verdict = p >= threshold ? "adulterated" : "unadulterated";
  if (json) {
    std::cout << "{\"probability\":" << fmt(p) << ",\"verdict\":\"" << verdict
              << "\",\"threshold\":" << fmt(threshold) << "}\n";
  } else {
    std::cout << "probability=" << fmt(p) << "\n" << "verdict=" << verdict << "\n";
  }
  return 0;
}

int cmd_plot(const fs::path& history_path, const fs::path& out_path) {
  const TrainHistory history = load_history(history_path);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write svg: " + out_path.string());
  out << history_to_svg(history);
  std::cout << "plot: " << history.rows.size() << " epochs -> " << out_path.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // The training loop cycles multi-hundred-MB activation tensors every step;
  // keeping them on the heap instead of fresh mmaps avoids refaulting.
  mallopt(M_MMAP_THRESHOLD, 1u << 30);
#endif

  CLI::App app{"honey-adulteration screening on thermal images"};
  app.set_version_flag("--version", version_text());
  app.require_subcommand(1);
  app.fallthrough();

  unsigned threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = auto)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  std::size_t per_class = 100;
  std::uint64_t synth_seed = 0;
  fs::path synth_out;
  synth->add_option("--per-class", per_class, "images per class")->required();
  synth->add_option("--seed", synth_seed, "generator seed")->default_val("0");
  synth->add_option("--out", synth_out, "output directory")->required();

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "ROI-mask and resize every image");
  fs::path prep_manifest, prep_out;
  prep->add_option("--manifest", prep_manifest, "input manifest csv")->required();
  prep->add_option("--out", prep_out, "output directory")->required();

  // augment
  auto* aug = app.add_subcommand("augment", "temperature-fluctuations augmentation");
  fs::path aug_manifest, aug_out;
  int amplitude = 5;
  std::string aug_mode = "per-pixel";
  std::uint64_t aug_seed = 0;
  bool include_val = false;
  aug->add_option("--manifest", aug_manifest, "input manifest csv")->required();
  aug->add_option("--amplitude", amplitude, "max |variation| in gray levels")
      ->default_val("5");
  aug->add_option("--mode", aug_mode, "per-pixel or per-image")->default_val("per-pixel");
  aug->add_option("--seed", aug_seed, "augmentation seed")->default_val("0");
  aug->add_option("--out", aug_out, "output directory")->required();
  aug->add_flag("--include-val", include_val, "augment the validation fold too");

  // split
  auto* split = app.add_subcommand("split", "grouped train/validation split");
  fs::path split_manifest_path, split_out;
  double val_fraction = 0.25;
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest_path, "manifest csv")->required();
  split->add_option("--val-fraction", val_fraction, "validation share of samples")
      ->default_val("0.25");
  split->add_option("--seed", split_seed, "split seed")->default_val("0");
  split->add_option("--out", split_out, "write here instead of updating in place");

  // train
  auto* tr = app.add_subcommand("train", "train the proposed CNN");
  fs::path train_manifest, train_out;
  TrainConfig cfg;  // defaults mirror the study's schedule
  tr->add_option("--manifest", train_manifest, "manifest csv with split folds")->required();
  tr->add_option("--epochs", cfg.epochs, "training epochs")->default_val("50");
  tr->add_option("--batch-size", cfg.batch_size, "batch size")->default_val("32");
  tr->add_option("--lr", cfg.learning_rate, "Adam learning rate")->default_val("0.001");
  tr->add_option("--steps", cfg.steps_per_epoch, "steps per epoch")->default_val("15");
  tr->add_option("--seed", cfg.seed, "init/shuffle seed")->default_val("0");
  tr->add_option("--threshold", cfg.threshold, "decision threshold")->default_val("0.5");
  tr->add_option("--out", train_out, "checkpoint output path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  fs::path eval_model, eval_manifest, eval_csv;
  double eval_threshold = 0.5;
  std::string eval_fold = "all";
  bool eval_json = false;
  ev->add_option("--model", eval_model, "checkpoint file")->required();
  ev->add_option("--manifest", eval_manifest, "manifest csv")->required();
  ev->add_option("--threshold", eval_threshold, "decision threshold")->default_val("0.5");
  ev->add_option("--split", eval_fold, "all, train or val")->default_val("all");
  ev->add_option("--out", eval_csv, "also write metrics as csv");
  ev->add_flag("--json", eval_json, "machine-readable output");

  // predict
  auto* pr = app.add_subcommand("predict", "score one image");
  fs::path pred_model, pred_image;
  double pred_threshold = 0.5;
  bool pred_json = false;
  pr->add_option("--model", pred_model, "checkpoint file")->required();
  pr->add_option("--image", pred_image, "PPM image, preprocessed size")->required();
  pr->add_option("--threshold", pred_threshold, "decision threshold")->default_val("0.5");
  pr->add_flag("--json", pred_json, "machine-readable output");

  // plot
  auto* pl = app.add_subcommand("plot", "render a history csv as an svg chart");
  fs::path plot_history, plot_out;
  pl->add_option("--history", plot_history, "history csv")->required();
  pl->add_option("--out", plot_out, "output svg path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  set_max_threads(threads);
  try {
    if (synth->parsed()) return cmd_synth(per_class, synth_seed, synth_out);
    if (prep->parsed()) return cmd_preprocess(prep_manifest, prep_out);
    if (aug->parsed())
      return cmd_augment(aug_manifest, amplitude, aug_mode, aug_seed, aug_out, include_val);
    if (split->parsed())
      return cmd_split(split_manifest_path, val_fraction, split_seed, split_out);
    if (tr->parsed()) return cmd_train(train_manifest, cfg, train_out);
    if (ev->parsed())
      return cmd_eval(eval_model, eval_manifest, eval_threshold, eval_fold, eval_csv,
                      eval_json);
    if (pr->parsed()) return cmd_predict(pred_model, pred_image, pred_threshold, pred_json);
    if (pl->parsed()) return cmd_plot(plot_history, plot_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
