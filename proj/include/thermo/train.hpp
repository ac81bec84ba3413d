#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thermo/dataset.hpp"
#include "thermo/image.hpp"
#include "thermo/model.hpp"
#include "thermo/optim.hpp"

// Training loop with the study's fixed schedule: seeded shuffled batches with
// wrap-around, a fixed number of steps per epoch, Adam updates, and an
// inference-mode evaluation of both folds at the end of every epoch.

namespace thermo {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::size_t steps_per_epoch = 15;
  std::uint64_t seed = 0;
  double threshold = 0.5;
};

struct EpochRow {
  std::size_t epoch = 0;  // numbered from 1
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double seconds = 0.0;  // wall clock; everything else is seed-determined
};

struct TrainHistory {
  std::vector<EpochRow> rows;
  bool empty() const { return rows.empty(); }
};

// A fold held in memory: 8-bit images plus derived labels.
struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> names;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

inline LabeledImages load_labeled(const Manifest& manifest, Split fold) {
  LabeledImages out;
  for (const auto& rec : manifest.records) {
    if (rec.split != fold) continue;
    out.images.push_back(load_image(manifest.resolve(rec)));
    out.labels.push_back(rec.label());
    out.names.push_back(rec.path);
  }
  return out;
}

namespace detail {

inline constexpr std::uint64_t kSamplerSalt = 0x7468656d1b5a7331ull;

// Seeded shuffled sampling with wrap-around: when the deck runs out it is
// reshuffled from the same stream and dealing continues.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed)
      : rng_(splitmix64_mix(seed ^ kSamplerSalt)), order_(n), cursor_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
  }

  std::vector<std::size_t> next_batch(std::size_t batch_size) {
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    while (out.size() < batch_size) {
      if (cursor_ >= order_.size()) {
        shuffle(order_, rng_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  SplitMix64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

// Image batch as an N x C x H x W tensor scaled to [0, 1].
template <std::floating_point T>
Tensor<T> batch_to_tensor(const LabeledImages& data, const std::vector<std::size_t>& idx) {
  const Image& first = data.images[idx[0]];
  Tensor<T> out({idx.size(), first.channels, first.height, first.width});
  const T scale = T(1) / T(255);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Image& img = data.images[idx[b]];
    // interleaved u8 -> planar float
    for (std::size_t c = 0; c < img.channels; ++c) {
      T* dst = out.data() + out.offset4(b, c, 0, 0);
      const std::uint8_t* src = img.pixels.data() + c;
      for (std::size_t i = 0; i < img.pixel_count(); ++i)
        dst[i] = static_cast<T>(src[i * img.channels]) * scale;
    }
  }
  return out;
}

template <std::floating_point T>
void check_fold(const Model<T>& model, const LabeledImages& data, const char* fold) {
  const auto& def = model.def();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Image& img = data.images[i];
    if (img.channels != def.in_channels || img.height != def.in_height ||
        img.width != def.in_width) {
      throw ShapeError(std::string("train: ") + fold + " image " + data.names[i] + " is " +
                       std::to_string(img.width) + "x" + std::to_string(img.height) + "x" +
                       std::to_string(img.channels) + ", expected " +
                       std::to_string(def.in_width) + "x" + std::to_string(def.in_height) +
                       "x" + std::to_string(def.in_channels));
    }
  }
}

}  // namespace detail

// Inference-mode forward over the whole fold in fixed-size batches. The
// report is batch-size invariant because running statistics remove any
// cross-sample coupling.
template <std::floating_point T>
MetricsReport evaluate(const Model<T>& model, const LabeledImages& data, double threshold,
                       std::size_t batch_size = 32) {
  if (data.empty()) throw DataError("evaluate: empty manifest");
  detail::check_fold(model, data, "eval");
  Tensor<T> probs({data.size(), 1});
  std::size_t done = 0;
  while (done < data.size()) {
    const std::size_t take = std::min(batch_size, data.size() - done);
    std::vector<std::size_t> idx(take);
    for (std::size_t i = 0; i < take; ++i) idx[i] = done + i;
    const Tensor<T> batch = detail::batch_to_tensor<T>(data, idx);
    const Tensor<T> out = model.forward(batch, BnMode::kInfer);
    for (std::size_t i = 0; i < take; ++i) probs[done + i] = out[i];
    done += take;
  }
  return compute_metrics(probs, data.labels, threshold);
}

// `on_epoch`, when set, sees each history row as the epoch completes.
template <std::floating_point T>
TrainHistory train(Model<T>& model, const TrainConfig& config,
                   const LabeledImages& train_set, const LabeledImages& val_set,
                   const std::function<void(const EpochRow&)>& on_epoch = {}) {
  if (train_set.empty() || val_set.empty()) {
    throw DataError("train: both folds must be non-empty (train " +
                    std::to_string(train_set.size()) + ", val " +
                    std::to_string(val_set.size()) + ")");
  }
  if (config.batch_size == 0 || config.steps_per_epoch == 0) {
    throw DataError("train: batch_size and steps_per_epoch must be positive");
  }
  detail::check_fold(model, train_set, "train");
  detail::check_fold(model, val_set, "val");

  detail::BatchSampler sampler(train_set.size(), config.seed);
  auto adam = AdamState<T>::for_params(model.learnable(),
                                       static_cast<T>(config.learning_rate));

  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t step = 1; step <= config.steps_per_epoch; ++step) {
      const auto idx = sampler.next_batch(config.batch_size);
      const Tensor<T> batch = detail::batch_to_tensor<T>(train_set, idx);
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.labels[idx[i]];

      const ForwardTrace<T> trace = model.forward_trace(batch);
      const auto bce = bce_loss(trace.probs, labels);
      if (!std::isfinite(static_cast<double>(bce.loss))) {
        throw DivergedError("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch) + " step " + std::to_string(step));
      }
      const auto grads = model.backward(trace, bce.grad);
      auto [params, next_adam] = adam_step(model.learnable(), grads, std::move(adam));
      adam = std::move(next_adam);
      model.set_learnable(std::move(params));
      model.commit_bn(trace);
    }
    const MetricsReport on_train = evaluate(model, train_set, config.threshold,
                                            config.batch_size);
    const MetricsReport on_val = evaluate(model, val_set, config.threshold,
                                          config.batch_size);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.rows.push_back(EpochRow{epoch, on_train.loss, on_train.accuracy, on_val.loss,
                                    on_val.accuracy, on_val.precision, on_val.recall,
                                    seconds});
    if (on_epoch) on_epoch(history.rows.back());
  }
  return history;
}

}  // namespace thermo
