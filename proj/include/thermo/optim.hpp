#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/tensor.hpp"

// Adam with bias correction, binary cross-entropy, and confusion-matrix
// metrics. Everything here is a pure function: state goes in, updated state
// comes out.

namespace thermo {

template <std::floating_point T>
struct AdamState {
  T learning_rate = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  std::uint64_t step_count = 0;
  std::vector<Tensor<T>> m;  // first moments, shape-aligned with the params
  std::vector<Tensor<T>> v;  // second moments

  static AdamState for_params(const std::vector<Tensor<T>>& params, T lr = T(0.001)) {
    AdamState st;
    st.learning_rate = lr;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params) {
      st.m.emplace_back(p.shape());
      st.v.emplace_back(p.shape());
    }
    return st;
  }
};

// One Adam update over a shape-aligned parameter/gradient list:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <std::floating_point T>
std::pair<std::vector<Tensor<T>>, AdamState<T>> adam_step(std::vector<Tensor<T>> params,
                                                          const std::vector<Tensor<T>>& grads,
                                                          AdamState<T> state) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter/gradient/moment list lengths differ: " +
                     std::to_string(params.size()) + "/" + std::to_string(grads.size()) +
                     "/" + std::to_string(state.m.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i])) {
      throw ShapeError("adam_step: shape mismatch in tensor " + std::to_string(i) +
                       ": param " + shape_str(params[i].shape()) + ", grad " +
                       shape_str(grads[i].shape()));
    }
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw DataError("adam_step: non-finite gradient in tensor " + std::to_string(i) +
                        " at element " + std::to_string(j));
      }
    }
  }

  state.step_count += 1;
  const T t = static_cast<T>(state.step_count);
  const T bias1 = T(1) - std::pow(state.beta1, t);
  const T bias2 = T(1) - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].data();
    const T* g = grads[i].data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
      const T m_hat = m[j] / bias1;
      const T v_hat = v[j] / bias2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  return {std::move(params), std::move(state)};
}

inline constexpr double kProbClamp = 1e-7;

template <std::floating_point T>
struct BceResult {
  T loss;
  Tensor<T> grad;  // d(loss)/d(prediction), batch-mean convention
};

// Mean over the batch of -[y ln p + (1-y) ln(1-p)] with p clamped to
// [1e-7, 1-1e-7]. The gradient is evaluated on the clamped p.
template <std::floating_point T>
BceResult<T> bce_loss(const Tensor<T>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.size() == 0) {
    throw ShapeError("bce_loss: got " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(labels.size()) + " labels");
  }
  const T lo = static_cast<T>(kProbClamp), hi = T(1) - static_cast<T>(kProbClamp);
  const std::size_t n = predictions.size();
  BceResult<T> res{T(0), Tensor<T>(predictions.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) {
      throw DataError("bce_loss: label " + std::to_string(y) + " at index " +
                      std::to_string(i) + " is not in {0, 1}");
    }
    T p = predictions[i];
    p = p < lo ? lo : (p > hi ? hi : p);
    res.loss += y == 1 ? -std::log(p) : -std::log(T(1) - p);
    res.grad[i] = (p - static_cast<T>(y)) / (p * (T(1) - p)) / static_cast<T>(n);
  }
  res.loss /= static_cast<T>(n);
  return res;
}

// Confusion counts and the derived Table-style metrics. "Adulterated" is the
// positive class.
struct MetricsReport {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double loss = 0.0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
};

inline MetricsReport metrics_from_counts(std::uint64_t tp, std::uint64_t tn,
                                         std::uint64_t fp, std::uint64_t fn,
                                         double loss = 0.0) {
  MetricsReport r;
  r.tp = tp;
  r.tn = tn;
  r.fp = fp;
  r.fn = fn;
  r.loss = loss;
  const std::uint64_t total = r.total();
  if (total > 0) r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return r;
}

// prediction >= threshold counts as positive. Loss is the mean BCE of the
// (clamped) probabilities.
template <std::floating_point T>
MetricsReport compute_metrics(const Tensor<T>& predictions, const std::vector<int>& labels,
                              double threshold = 0.5) {
  if (predictions.size() == 0) throw DataError("compute_metrics: empty input");
  if (predictions.size() != labels.size()) {
    throw ShapeError("compute_metrics: got " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(labels.size()) + " labels");
  }
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) {
      throw DataError("compute_metrics: label " + std::to_string(y) + " at index " +
                      std::to_string(i) + " is not in {0, 1}");
    }
    const bool pred_pos = static_cast<double>(predictions[i]) >= threshold;
    if (pred_pos && y == 1) ++tp;
    else if (pred_pos && y == 0) ++fp;
    else if (!pred_pos && y == 1) ++fn;
    else ++tn;
  }
  const auto bce = bce_loss(predictions, labels);
  return metrics_from_counts(tp, tn, fp, fn, static_cast<double>(bce.loss));
}

}  // namespace thermo
