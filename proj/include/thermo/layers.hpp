#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/parallel.hpp"
#include "thermo/tensor.hpp"

// Forward and backward passes for every layer of the network: 3x3
// same-padding convolution, 2x2/stride-2 max pooling, batch normalization,
// dense, relu, sigmoid and flatten. All functions are pure; backward passes
// return exact analytic gradients of their forward map. Summation orders are
// fixed, so identical inputs give bit-identical outputs at any thread count.

namespace thermo {

template <std::floating_point T>
struct ConvParams {
  Tensor<T> kernels;  // (C_out, C_in, 3, 3)
  Tensor<T> bias;     // (C_out)

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
};

namespace detail {

// One output row of the 3x3 correlation, all taps fused:
// o[x] += sum over available rows of k*r[x-1..x+1], zero padding at the row
// ends. Missing top/bottom rows are compile-time variants so the hot loop
// stays branch-free.
template <typename T, bool kHasR0, bool kHasR2>
inline void conv_row9(T* __restrict o, const T* __restrict r0, const T* __restrict r1,
                      const T* __restrict r2, const T* __restrict k, std::size_t w) {
  {
    T acc = o[0];
    if constexpr (kHasR0) {
      acc += k[1] * r0[0];
      if (w > 1) acc += k[2] * r0[1];
    }
    acc += k[4] * r1[0];
    if (w > 1) acc += k[5] * r1[1];
    if constexpr (kHasR2) {
      acc += k[7] * r2[0];
      if (w > 1) acc += k[8] * r2[1];
    }
    o[0] = acc;
  }
  for (std::size_t x = 1; x + 1 < w; ++x) {
    T acc = o[x];
    if constexpr (kHasR0) acc += k[0] * r0[x - 1] + k[1] * r0[x] + k[2] * r0[x + 1];
    acc += k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1];
    if constexpr (kHasR2) acc += k[6] * r2[x - 1] + k[7] * r2[x] + k[8] * r2[x + 1];
    o[x] = acc;
  }
  if (w > 1) {
    const std::size_t x = w - 1;
    T acc = o[x];
    if constexpr (kHasR0) acc += k[0] * r0[x - 1] + k[1] * r0[x];
    acc += k[3] * r1[x - 1] + k[4] * r1[x];
    if constexpr (kHasR2) acc += k[6] * r2[x - 1] + k[7] * r2[x];
    o[x] = acc;
  }
}

// One (n, c_out) output plane: out = bias + sum over input channels of the
// 3x3 correlation, zero padded, stride 1.
template <typename T>
void conv_plane(const T* in, std::size_t c_in, std::size_t h, std::size_t w,
                const T* kernel, T bias, T* out) {
  for (std::size_t i = 0; i < h * w; ++i) out[i] = bias;
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    const T* plane = in + ci * h * w;
    const T* k = kernel + ci * 9;
    if (h == 1) {
      conv_row9<T, false, false>(out, nullptr, plane, nullptr, k, w);
      continue;
    }
    conv_row9<T, false, true>(out, nullptr, plane, plane + w, k, w);
    for (std::size_t y = 1; y + 1 < h; ++y) {
      conv_row9<T, true, true>(out + y * w, plane + (y - 1) * w, plane + y * w,
                               plane + (y + 1) * w, k, w);
    }
    conv_row9<T, true, false>(out + (h - 1) * w, plane + (h - 2) * w,
                              plane + (h - 1) * w, nullptr, k, w);
  }
}

// Dot product over fixed-width lanes; the summation order does not depend on
// the input length's alignment, keeping reductions deterministic yet SIMD
// friendly.
template <typename T>
inline T lane_dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) lanes[j] += a[i + j] * b[i + j];
  }
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  T sum = T(0);
  for (std::size_t j = 0; j < kLanes; ++j) sum += lanes[j];
  return sum + tail;
}

template <typename T>
inline T lane_sum(const T* a, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) lanes[j] += a[i + j];
  }
  T tail = T(0);
  for (; i < n; ++i) tail += a[i];
  T sum = T(0);
  for (std::size_t j = 0; j < kLanes; ++j) sum += lanes[j];
  return sum + tail;
}

template <typename T>
void check_conv_args(const Tensor<T>& input, const ConvParams<T>& params) {
  if (input.rank() != 4) {
    throw ShapeError("conv2d: input must be NCHW, got " + shape_str(input.shape()));
  }
  if (params.kernels.rank() != 4 || params.kernels.dim(2) != 3 || params.kernels.dim(3) != 3) {
    throw ShapeError("conv2d: kernels must be (C_out, C_in, 3, 3), got " +
                     shape_str(params.kernels.shape()));
  }
  if (params.bias.rank() != 1 || params.bias.dim(0) != params.kernels.dim(0)) {
    throw ShapeError("conv2d: bias shape " + shape_str(params.bias.shape()) +
                     " does not match kernel shape " + shape_str(params.kernels.shape()));
  }
  if (input.dim(1) != params.kernels.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) +
                     " do not match kernel input channels " +
                     std::to_string(params.kernels.dim(1)) + " (input shape " +
                     shape_str(input.shape()) + ", kernel shape " +
                     shape_str(params.kernels.shape()) + ")");
  }
}

}  // namespace detail

// 3x3 convolution, stride 1, zero padding 1: output spatial size equals the
// input's. out[n,co,y,x] = bias[co] + sum_{ci,dy,dx} in[n,ci,y+dy-1,x+dx-1] *
// kernels[co,ci,dy,dx].
template <std::floating_point T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& params) {
  detail::check_conv_args(input, params);
  const std::size_t n = input.dim(0), c_in = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t c_out = params.out_channels();

  Tensor<T> out = Tensor<T>::uninitialized({n, c_out, h, w});
  const T* in_base = input.data();
  const T* k_base = params.kernels.data();
  const T* b = params.bias.data();
  T* out_base = out.data();

  parallel_for(n * c_out, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t bi = i / c_out, co = i % c_out;
      detail::conv_plane(in_base + bi * c_in * h * w, c_in, h, w,
                         k_base + co * c_in * 9, b[co],
                         out_base + (bi * c_out + co) * h * w);
    }
  });
  return out;
}

template <std::floating_point T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

// `want_input_grad = false` skips the grad_input computation (the first
// layer's input gradient has no consumer); grads.input comes back empty.
template <std::floating_point T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& params,
                             const Tensor<T>& grad_out, bool want_input_grad = true) {
  detail::check_conv_args(input, params);
  const std::size_t n = input.dim(0), c_in = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t c_out = params.out_channels();
  const Shape expect{n, c_out, h, w};
  if (grad_out.shape() != expect) {
    throw ShapeError("conv2d_backward: grad shape " + shape_str(grad_out.shape()) +
                     " does not match output shape " + shape_str(expect));
  }

  ConvGrads<T> grads{Tensor<T>(), Tensor<T>({c_out, c_in, 3, 3}), Tensor<T>({c_out})};
  const T* go_base = grad_out.data();

  if (want_input_grad) {
    grads.input = Tensor<T>::uninitialized({n, c_in, h, w});
    // grad_input is the same-padding correlation of grad_out with the kernels
    // flipped spatially and transposed in (c_out, c_in).
    Tensor<T> flipped = Tensor<T>::uninitialized({c_in, c_out, 3, 3});
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t t = 0; t < 9; ++t)
          flipped.data()[(ci * c_out + co) * 9 + (8 - t)] =
              params.kernels.data()[(co * c_in + ci) * 9 + t];

    T* gi_base = grads.input.data();
    parallel_for(n * c_in, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t bi = i / c_in, ci = i % c_in;
        detail::conv_plane(go_base + bi * c_out * h * w, c_out, h, w,
                           flipped.data() + ci * c_out * 9, T(0),
                           gi_base + (bi * c_in + ci) * h * w);
      }
    });
  }

  // grad_kernels[co,ci,dy,dx] = sum_{n,y,x} grad_out[n,co,y,x] *
  // input[n,ci,y+dy-1,x+dx-1]; grad_bias[co] = sum grad_out over n,y,x.
  const T* in_base = input.data();
  T* gk_base = grads.kernels.data();
  T* gb = grads.bias.data();
  parallel_for(c_out, [&](std::size_t begin, std::size_t end) {
    for (std::size_t co = begin; co < end; ++co) {
      T bias_acc = T(0);
      for (std::size_t bi = 0; bi < n; ++bi) {
        const T* go_plane = go_base + (bi * c_out + co) * h * w;
        bias_acc += detail::lane_sum(go_plane, h * w);
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const T* in_plane = in_base + (bi * c_in + ci) * h * w;
          T* gk = gk_base + (co * c_in + ci) * 9;
          for (std::size_t y = 0; y < h; ++y) {
            const T* go_row = go_plane + y * w;
            for (std::size_t dy = 0; dy < 3; ++dy) {
              const std::size_t iy = y + dy;
              if (iy < 1 || iy > h) continue;  // input row y+dy-1 in bounds
              const T* in_row = in_plane + (iy - 1) * w;
              if (w > 1) {
                gk[dy * 3 + 0] += detail::lane_dot(go_row + 1, in_row, w - 1);
                gk[dy * 3 + 2] += detail::lane_dot(go_row, in_row + 1, w - 1);
              }
              gk[dy * 3 + 1] += detail::lane_dot(go_row, in_row, w);
            }
          }
        }
      }
      gb[co] = bias_acc;
    }
  });

  return grads;
}

// Max pooling bookkeeping: flat input offsets of each window's maximum, kept
// for routing gradients back. Ties break toward the smallest flat index.
struct PoolIndices {
  std::vector<std::uint32_t> argmax;
  Shape in_shape;
  Shape out_shape;
};

template <std::floating_point T>
struct PoolResult {
  Tensor<T> output;
  PoolIndices indices;
};

// 2x2 window, stride 2; a trailing odd row/column is dropped.
template <std::floating_point T>
PoolResult<T> maxpool2d(const Tensor<T>& input) {
  if (input.rank() != 4) {
    throw ShapeError("maxpool2d: input must be NCHW, got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) {
    throw ShapeError("maxpool2d: spatial dims must be at least 2x2, got " +
                     shape_str(input.shape()));
  }
  if (input.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("maxpool2d: tensor too large for 32-bit argmax bookkeeping");
  }
  const std::size_t oh = h / 2, ow = w / 2;

  PoolResult<T> res{Tensor<T>::uninitialized({n, c, oh, ow}),
                    PoolIndices{std::vector<std::uint32_t>(n * c * oh * ow),
                                input.shape(),
                                {n, c, oh, ow}}};
  const T* in = input.data();
  T* out = res.output.data();
  std::uint32_t* arg = res.indices.argmax.data();

  parallel_for(n * c, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t plane_in = p * h * w;
      const std::size_t plane_out = p * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t base = plane_in + (2 * oy) * w + 2 * ox;
          std::size_t best = base;
          T best_v = in[base];
          const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
          for (std::size_t k = 0; k < 3; ++k) {
            if (in[cand[k]] > best_v) {  // strict: ties keep the smaller index
              best_v = in[cand[k]];
              best = cand[k];
            }
          }
          out[plane_out + oy * ow + ox] = best_v;
          arg[plane_out + oy * ow + ox] = static_cast<std::uint32_t>(best);
        }
      }
    }
  });
  return res;
}

// Routes each grad element to its argmax source; all other positions zero.
// Written gather-style: one sequential pass over the input layout.
template <std::floating_point T>
Tensor<T> maxpool2d_backward(const PoolIndices& indices, const Tensor<T>& grad_out) {
  if (grad_out.shape() != indices.out_shape) {
    throw ShapeError("maxpool2d_backward: grad shape " + shape_str(grad_out.shape()) +
                     " does not match pooled shape " + shape_str(indices.out_shape));
  }
  const std::size_t n = indices.in_shape[0], c = indices.in_shape[1];
  const std::size_t h = indices.in_shape[2], w = indices.in_shape[3];
  const std::size_t oh = indices.out_shape[2], ow = indices.out_shape[3];

  Tensor<T> grad_in = Tensor<T>::uninitialized(indices.in_shape);
  T* gi = grad_in.data();
  const T* go = grad_out.data();
  const std::uint32_t* arg = indices.argmax.data();

  parallel_for(n * c, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t base_in = p * h * w;
      const std::size_t base_out = p * oh * ow;
      for (std::size_t y = 0; y < h; ++y) {
        T* row = gi + base_in + y * w;
        if (y >= 2 * oh) {  // dropped odd row
          for (std::size_t x = 0; x < w; ++x) row[x] = T(0);
          continue;
        }
        const std::size_t orow = base_out + (y / 2) * ow;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::uint32_t best = arg[orow + ox];
          const T g = go[orow + ox];
          const std::size_t x0 = base_in + y * w + 2 * ox;
          row[2 * ox] = best == x0 ? g : T(0);
          row[2 * ox + 1] = best == x0 + 1 ? g : T(0);
        }
        if (w % 2 == 1) row[w - 1] = T(0);  // dropped odd column
      }
    }
  });
  return grad_in;
}

enum class BnMode { kTrain, kInfer };

// Per-channel scale/shift parameters plus the running statistics used in
// inference mode. Stat updates are returned in a fresh state, never applied
// in place.
template <std::floating_point T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);
  BnMode mode = BnMode::kTrain;

  static BatchNormState identity(std::size_t channels) {
    return BatchNormState{Tensor<T>::full({channels}, T(1)), Tensor<T>({channels}),
                          Tensor<T>({channels}), Tensor<T>::full({channels}, T(1))};
  }
  std::size_t channels() const { return gamma.dim(0); }
};

template <std::floating_point T>
struct BnCache {
  Tensor<T> xhat;              // normalized activations (training mode)
  std::vector<T> inv_std;      // per channel 1/sqrt(var + eps)
};

template <std::floating_point T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormState<T> state;     // running stats advanced in training mode
  BnCache<T> cache;
};

// Training mode normalizes with the batch mean and biased variance and
// advances running stats as r <- (1-momentum)*r + momentum*batch; inference
// mode uses the running stats only.
template <std::floating_point T>
BatchNormResult<T> batchnorm2d(const Tensor<T>& input, const BatchNormState<T>& state) {
  if (input.rank() != 4) {
    throw ShapeError("batchnorm2d: input must be NCHW, got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (c != state.channels()) {
    throw ShapeError("batchnorm2d: input channels " + std::to_string(c) +
                     " do not match state channels " + std::to_string(state.channels()));
  }
  const std::size_t m = n * h * w;  // samples per channel
  const bool training = state.mode == BnMode::kTrain;
  if (training && m < 2) {
    throw ShapeError("batchnorm2d: training mode needs N*H*W >= 2 per channel, got " +
                     std::to_string(m));
  }

  BatchNormResult<T> res{Tensor<T>::uninitialized(input.shape()), state, BnCache<T>{}};
  res.cache.inv_std.assign(c, T(0));
  if (training) res.cache.xhat = Tensor<T>::uninitialized(input.shape());

  const T* in = input.data();
  T* out = res.output.data();
  T* xhat = training ? res.cache.xhat.data() : nullptr;
  const std::size_t plane = h * w;

  parallel_for(c, [&](std::size_t begin, std::size_t end) {
    for (std::size_t ch = begin; ch < end; ++ch) {
      T mean, var;
      if (training) {
        T sum = T(0);
        for (std::size_t bi = 0; bi < n; ++bi)
          sum += detail::lane_sum(in + (bi * c + ch) * plane, plane);
        mean = sum / static_cast<T>(m);
        T sq = T(0);
        for (std::size_t bi = 0; bi < n; ++bi) {
          const T* p = in + (bi * c + ch) * plane;
          constexpr std::size_t kLanes = 16;
          T lanes[kLanes] = {};
          std::size_t i = 0;
          for (; i + kLanes <= plane; i += kLanes)
            for (std::size_t j = 0; j < kLanes; ++j) {
              const T d = p[i + j] - mean;
              lanes[j] += d * d;
            }
          T tail = T(0);
          for (; i < plane; ++i) {
            const T d = p[i] - mean;
            tail += d * d;
          }
          for (std::size_t j = 0; j < kLanes; ++j) sq += lanes[j];
          sq += tail;
        }
        var = sq / static_cast<T>(m);  // biased
        res.state.running_mean[ch] =
            (T(1) - state.momentum) * state.running_mean[ch] + state.momentum * mean;
        res.state.running_var[ch] =
            (T(1) - state.momentum) * state.running_var[ch] + state.momentum * var;
      } else {
        mean = state.running_mean[ch];
        var = state.running_var[ch];
      }
      const T inv_std = T(1) / std::sqrt(var + state.epsilon);
      res.cache.inv_std[ch] = inv_std;
      const T g = state.gamma[ch], b = state.beta[ch];
      for (std::size_t bi = 0; bi < n; ++bi) {
        const T* p = in + (bi * c + ch) * plane;
        T* o = out + (bi * c + ch) * plane;
        T* xh = training ? xhat + (bi * c + ch) * plane : nullptr;
        for (std::size_t i = 0; i < plane; ++i) {
          const T normalized = (p[i] - mean) * inv_std;
          if (training) xh[i] = normalized;
          o[i] = g * normalized + b;
        }
      }
    }
  });
  return res;
}

template <std::floating_point T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

// Training-mode backward through the batch statistics.
template <std::floating_point T>
BatchNormGrads<T> batchnorm2d_backward(const BnCache<T>& cache, const Tensor<T>& gamma,
                                       const Tensor<T>& grad_out) {
  if (grad_out.shape() != cache.xhat.shape()) {
    throw ShapeError("batchnorm2d_backward: grad shape " + shape_str(grad_out.shape()) +
                     " does not match cached shape " + shape_str(cache.xhat.shape()));
  }
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
  const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
  const std::size_t m = n * plane;

  BatchNormGrads<T> grads{Tensor<T>::uninitialized(grad_out.shape()), Tensor<T>({c}),
                          Tensor<T>({c})};
  const T* go = grad_out.data();
  const T* xh = cache.xhat.data();
  T* gi = grads.input.data();

  parallel_for(c, [&](std::size_t begin, std::size_t end) {
    for (std::size_t ch = begin; ch < end; ++ch) {
      T sum_g = T(0), sum_gx = T(0);
      for (std::size_t bi = 0; bi < n; ++bi) {
        const std::size_t off = (bi * c + ch) * plane;
        sum_g += detail::lane_sum(go + off, plane);
        sum_gx += detail::lane_dot(go + off, xh + off, plane);
      }
      grads.beta[ch] = sum_g;
      grads.gamma[ch] = sum_gx;
      const T scale = gamma[ch] * cache.inv_std[ch] / static_cast<T>(m);
      for (std::size_t bi = 0; bi < n; ++bi) {
        const std::size_t off = (bi * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          gi[off + i] =
              scale * (static_cast<T>(m) * go[off + i] - sum_g - xh[off + i] * sum_gx);
        }
      }
    }
  });
  return grads;
}

// output = input (N x F) * weights (F x K) + bias (K), row broadcast.
template <std::floating_point T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights,
                        const Tensor<T>& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1) {
    throw ShapeError("dense: expected input NxF, weights FxK, bias K; got " +
                     shape_str(input.shape()) + ", " + shape_str(weights.shape()) + ", " +
                     shape_str(bias.shape()));
  }
  if (input.dim(1) != weights.dim(0) || weights.dim(1) != bias.dim(0)) {
    throw ShapeError("dense: inner dimensions do not match: input " +
                     shape_str(input.shape()) + " vs weights " +
                     shape_str(weights.shape()));
  }
  const std::size_t n = input.dim(0), f = input.dim(1), k = weights.dim(1);
  Tensor<T> out = Tensor<T>::uninitialized({n, k});
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        T acc = bias[j];
        if (k == 1) {
          acc += detail::lane_dot(input.data() + i * f, weights.data(), f);
        } else {
          for (std::size_t x = 0; x < f; ++x) acc += input.at2(i, x) * weights.at2(x, j);
        }
        out.at2(i, j) = acc;
      }
    }
  });
  return out;
}

template <std::floating_point T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <std::floating_point T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out) {
  const std::size_t n = input.dim(0), f = input.dim(1), k = weights.dim(1);
  if (grad_out.rank() != 2 || grad_out.dim(0) != n || grad_out.dim(1) != k) {
    throw ShapeError("dense_backward: grad shape " + shape_str(grad_out.shape()) +
                     " does not match output shape " + shape_str(Shape{n, k}));
  }
  DenseGrads<T> grads{Tensor<T>({n, f}), Tensor<T>({f, k}), Tensor<T>({k})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const T g = grad_out.at2(i, j);
      grads.bias[j] += g;
      for (std::size_t x = 0; x < f; ++x) {
        grads.input.at2(i, x) += g * weights.at2(x, j);
        grads.weights.at2(x, j) += g * input.at2(i, x);
      }
    }
  }
  return grads;
}

template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = Tensor<T>::uninitialized(input.shape());
  const T* in = input.data();
  T* o = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <std::floating_point T>
void relu_in_place(Tensor<T>& t) {
  T* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
}

// Gradient passes where the forward input was > 0. relu's output may be
// passed for `forward_input`: the masks coincide.
template <std::floating_point T>
Tensor<T> relu_backward(const Tensor<T>& forward_input, const Tensor<T>& grad_out) {
  if (!forward_input.same_shape(grad_out)) {
    throw ShapeError("relu_backward: shapes differ: " + shape_str(forward_input.shape()) +
                     " vs " + shape_str(grad_out.shape()));
  }
  Tensor<T> out = Tensor<T>::uninitialized(grad_out.shape());
  const T* x = forward_input.data();
  const T* g = grad_out.data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = x[i] > T(0) ? g[i] : T(0);
  return out;
}

// Masks `grad` where the forward input was <= 0, without a fresh buffer.
template <std::floating_point T>
void relu_backward_in_place(const Tensor<T>& forward_input, Tensor<T>& grad) {
  if (!forward_input.same_shape(grad)) {
    throw ShapeError("relu_backward: shapes differ: " + shape_str(forward_input.shape()) +
                     " vs " + shape_str(grad.shape()));
  }
  const T* x = forward_input.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) g[i] = x[i] > T(0) ? g[i] : T(0);
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out = Tensor<T>::uninitialized(input.shape());
  const T* in = input.data();
  T* o = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = in[i];
    if (x >= T(0)) {
      o[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      o[i] = e / (T(1) + e);
    }
  }
  return out;
}

// Takes the forward *output* y = sigmoid(x): dL/dx = g * y * (1 - y).
template <std::floating_point T>
Tensor<T> sigmoid_backward(const Tensor<T>& forward_output, const Tensor<T>& grad_out) {
  if (!forward_output.same_shape(grad_out)) {
    throw ShapeError("sigmoid_backward: shapes differ: " +
                     shape_str(forward_output.shape()) + " vs " +
                     shape_str(grad_out.shape()));
  }
  Tensor<T> out = Tensor<T>::uninitialized(grad_out.shape());
  const T* y = forward_output.data();
  const T* g = grad_out.data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = g[i] * y[i] * (T(1) - y[i]);
  return out;
}

// N x C x H x W -> N x (C*H*W); row-major order is preserved, so
// reshaping back is the exact inverse.
template <std::floating_point T>
Tensor<T> flatten(const Tensor<T>& input) {
  if (input.rank() != 4) {
    throw ShapeError("flatten: input must be NCHW, got " + shape_str(input.shape()));
  }
  return input.reshaped({input.dim(0), input.dim(1) * input.dim(2) * input.dim(3)});
}

template <std::floating_point T>
Tensor<T> flatten_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  return grad_out.reshaped(input_shape);
}

}  // namespace thermo
