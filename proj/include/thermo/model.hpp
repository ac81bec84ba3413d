#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "thermo/layers.hpp"
#include "thermo/rng.hpp"
#include "thermo/tensor.hpp"

// The proposed network: five Conv(3x3, same)->ReLU[->BN]->MaxPool blocks with
// 18, 18, 32, 64, 128 filters (batch norm after the third, fourth and fifth),
// then Flatten -> Dense -> Sigmoid producing one adulteration probability.

namespace thermo {

struct ModelDef {
  std::size_t in_channels = 3;
  std::size_t in_height = 300;
  std::size_t in_width = 300;
  std::vector<std::size_t> conv_filters{18, 18, 32, 64, 128};
  std::vector<std::uint8_t> batch_norm{0, 0, 1, 1, 1};
  std::size_t dense_out = 1;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  // The paper's architecture; height/width are parameters so the same layer
  // pattern can run on miniature inputs in tests.
  static ModelDef proposed(std::size_t height = 300, std::size_t width = 300) {
    ModelDef def;
    def.in_height = height;
    def.in_width = width;
    return def;
  }

  void validate() const {
    if (conv_filters.empty() || conv_filters.size() != batch_norm.size()) {
      throw ShapeError("model: conv_filters and batch_norm lists must align");
    }
    if (in_channels == 0 || dense_out == 0) {
      throw ShapeError("model: channel counts must be positive");
    }
    spatial_trace();  // throws when pooling would hit a dimension below 2
  }

  // Spatial size after each pooling stage; 300 -> 150, 75, 37, 18, 9.
  std::vector<std::pair<std::size_t, std::size_t>> spatial_trace() const {
    std::vector<std::pair<std::size_t, std::size_t>> trace;
    std::size_t h = in_height, w = in_width;
    for (std::size_t b = 0; b < conv_filters.size(); ++b) {
      if (h < 2 || w < 2) {
        throw ShapeError("model: input " + std::to_string(in_height) + "x" +
                         std::to_string(in_width) + " is too small for " +
                         std::to_string(conv_filters.size()) + " pooling stages");
      }
      h /= 2;
      w /= 2;
      trace.emplace_back(h, w);
    }
    return trace;
  }

  std::size_t flatten_width() const {
    const auto trace = spatial_trace();
    return conv_filters.back() * trace.back().first * trace.back().second;
  }
};

inline bool operator==(const ModelDef& a, const ModelDef& b) {
  return a.in_channels == b.in_channels && a.in_height == b.in_height &&
         a.in_width == b.in_width && a.conv_filters == b.conv_filters &&
         a.batch_norm == b.batch_norm && a.dense_out == b.dense_out &&
         a.bn_epsilon == b.bn_epsilon && a.bn_momentum == b.bn_momentum;
}

template <std::floating_point T>
struct ForwardTrace {
  struct Block {
    Tensor<T> relu_out;              // conv+relu output
    bool has_bn = false;
    BnCache<T> bn_cache;
    Tensor<T> bn_out;                // pool input when bn is present
    BatchNormState<T> bn_next;       // running stats advanced by this batch
    Tensor<T> pool_out;
    PoolIndices pool_idx;
  };
  Tensor<T> input;
  std::vector<Block> blocks;
  Tensor<T> flat;
  Tensor<T> probs;
};

template <std::floating_point T>
class Model {
 public:
  // He-uniform initialization (bound sqrt(6 / fan_in)) for conv and dense
  // weights, drawn in block order from splitmix64(seed); biases zero, batch
  // norm at identity with running stats (0, 1).
  static Model build(const ModelDef& def, std::uint64_t seed) {
    Model m = zeros(def);
    SplitMix64 rng(seed);
    for (auto& conv : m.convs_) {
      const double fan_in =
          static_cast<double>(conv.kernels.dim(1)) * 3.0 * 3.0;
      const double bound = std::sqrt(6.0 / fan_in);
      conv.kernels.fill_uniform(rng, static_cast<T>(-bound), static_cast<T>(bound));
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(m.dense_w_.dim(0)));
    m.dense_w_.fill_uniform(rng, static_cast<T>(-bound), static_cast<T>(bound));
    return m;
  }

  // All-zero weights shell used by the checkpoint loader.
  static Model zeros(const ModelDef& def) {
    def.validate();
    Model m;
    m.def_ = def;
    std::size_t channels = def.in_channels;
    for (std::size_t b = 0; b < def.conv_filters.size(); ++b) {
      const std::size_t filters = def.conv_filters[b];
      m.convs_.push_back(ConvParams<T>{Tensor<T>({filters, channels, 3, 3}),
                                       Tensor<T>({filters})});
      if (def.batch_norm[b]) {
        auto st = BatchNormState<T>::identity(filters);
        st.epsilon = static_cast<T>(def.bn_epsilon);
        st.momentum = static_cast<T>(def.bn_momentum);
        m.bn_of_block_.push_back(static_cast<int>(m.bns_.size()));
        m.bns_.push_back(std::move(st));
      } else {
        m.bn_of_block_.push_back(-1);
      }
      channels = filters;
    }
    m.dense_w_ = Tensor<T>({def.flatten_width(), def.dense_out});
    m.dense_b_ = Tensor<T>({def.dense_out});
    return m;
  }

  const ModelDef& def() const { return def_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : convs_) n += c.kernels.size() + c.bias.size();
    for (const auto& bn : bns_) n += bn.gamma.size() + bn.beta.size();
    return n + dense_w_.size() + dense_b_.size();
  }

  // Inference-style forward; training mode recomputes batch statistics but
  // leaves the stored running stats untouched.
  Tensor<T> forward(const Tensor<T>& batch, BnMode mode = BnMode::kInfer) const {
    check_input(batch);
    Tensor<T> cur = batch;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      cur = conv2d_forward(cur, convs_[b]);
      relu_in_place(cur);
      if (bn_of_block_[b] >= 0) {
        auto st = bns_[static_cast<std::size_t>(bn_of_block_[b])];
        st.mode = mode;
        cur = batchnorm2d(cur, st).output;
      }
      cur = maxpool2d(cur).output;
    }
    return sigmoid(dense_forward(flatten(cur), dense_w_, dense_b_));
  }

  // Training-mode forward keeping every intermediate needed by backward().
  ForwardTrace<T> forward_trace(const Tensor<T>& batch) const {
    check_input(batch);
    ForwardTrace<T> trace;
    trace.input = batch;
    trace.blocks.resize(convs_.size());
    const Tensor<T>* cur = &trace.input;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      auto& blk = trace.blocks[b];
      blk.relu_out = conv2d_forward(*cur, convs_[b]);
      relu_in_place(blk.relu_out);
      const Tensor<T>* pool_in = &blk.relu_out;
      if (bn_of_block_[b] >= 0) {
        auto st = bns_[static_cast<std::size_t>(bn_of_block_[b])];
        st.mode = BnMode::kTrain;
        auto res = batchnorm2d(blk.relu_out, st);
        blk.has_bn = true;
        blk.bn_out = std::move(res.output);
        blk.bn_cache = std::move(res.cache);
        blk.bn_next = std::move(res.state);
        pool_in = &blk.bn_out;
      }
      auto pooled = maxpool2d(*pool_in);
      blk.pool_out = std::move(pooled.output);
      blk.pool_idx = std::move(pooled.indices);
      cur = &blk.pool_out;
    }
    trace.flat = flatten(*cur);
    trace.probs = sigmoid(dense_forward(trace.flat, dense_w_, dense_b_));
    return trace;
  }

  // Gradients of every learnable tensor, in learnable() order.
  std::vector<Tensor<T>> backward(const ForwardTrace<T>& trace,
                                  const Tensor<T>& grad_probs) const {
    std::vector<Tensor<T>> conv_k(convs_.size()), conv_b(convs_.size());
    std::vector<Tensor<T>> bn_g(bns_.size()), bn_b(bns_.size());

    const Tensor<T> grad_dense_out = sigmoid_backward(trace.probs, grad_probs);
    auto dg = dense_backward(trace.flat, dense_w_, grad_dense_out);

    const std::size_t last = convs_.size() - 1;
    Tensor<T> grad = flatten_backward(trace.blocks[last].pool_out.shape(), dg.input);
    for (std::size_t bi = convs_.size(); bi-- > 0;) {
      const auto& blk = trace.blocks[bi];
      grad = maxpool2d_backward(blk.pool_idx, grad);
      if (blk.has_bn) {
        const auto& gamma = bns_[static_cast<std::size_t>(bn_of_block_[bi])].gamma;
        auto bg = batchnorm2d_backward(blk.bn_cache, gamma, grad);
        bn_g[static_cast<std::size_t>(bn_of_block_[bi])] = std::move(bg.gamma);
        bn_b[static_cast<std::size_t>(bn_of_block_[bi])] = std::move(bg.beta);
        grad = std::move(bg.input);
      }
      relu_backward_in_place(blk.relu_out, grad);
      const Tensor<T>& conv_in = bi == 0 ? trace.input : trace.blocks[bi - 1].pool_out;
      auto cg = conv2d_backward(conv_in, convs_[bi], grad, /*want_input_grad=*/bi != 0);
      conv_k[bi] = std::move(cg.kernels);
      conv_b[bi] = std::move(cg.bias);
      grad = std::move(cg.input);
    }

    std::vector<Tensor<T>> grads;
    grads.reserve(2 * convs_.size() + 2 * bns_.size() + 2);
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      grads.push_back(std::move(conv_k[b]));
      grads.push_back(std::move(conv_b[b]));
    }
    for (std::size_t i = 0; i < bns_.size(); ++i) {
      grads.push_back(std::move(bn_g[i]));
      grads.push_back(std::move(bn_b[i]));
    }
    grads.push_back(std::move(dg.weights));
    grads.push_back(std::move(dg.bias));
    return grads;
  }

  // Adopt the running statistics advanced by a training-mode forward pass.
  void commit_bn(const ForwardTrace<T>& trace) {
    for (std::size_t b = 0; b < trace.blocks.size(); ++b) {
      if (!trace.blocks[b].has_bn) continue;
      auto& st = bns_[static_cast<std::size_t>(bn_of_block_[b])];
      st.running_mean = trace.blocks[b].bn_next.running_mean;
      st.running_var = trace.blocks[b].bn_next.running_var;
    }
  }

  // Learnable tensors in the pinned order: conv kernels/bias per block, then
  // batch-norm gamma/beta per block, then dense weights/bias.
  std::vector<Tensor<T>> learnable() const {
    std::vector<Tensor<T>> out;
    out.reserve(2 * convs_.size() + 2 * bns_.size() + 2);
    for (const auto& c : convs_) {
      out.push_back(c.kernels);
      out.push_back(c.bias);
    }
    for (const auto& bn : bns_) {
      out.push_back(bn.gamma);
      out.push_back(bn.beta);
    }
    out.push_back(dense_w_);
    out.push_back(dense_b_);
    return out;
  }

  void set_learnable(std::vector<Tensor<T>> params) {
    std::size_t i = 0;
    for (auto& c : convs_) {
      c.kernels = std::move(params.at(i++));
      c.bias = std::move(params.at(i++));
    }
    for (auto& bn : bns_) {
      bn.gamma = std::move(params.at(i++));
      bn.beta = std::move(params.at(i++));
    }
    dense_w_ = std::move(params.at(i++));
    dense_b_ = std::move(params.at(i++));
  }

  // Every tensor worth persisting, keyed by a stable name.
  std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const {
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      const std::string prefix = "conv" + std::to_string(b + 1);
      out.emplace_back(prefix + ".kernels", &convs_[b].kernels);
      out.emplace_back(prefix + ".bias", &convs_[b].bias);
    }
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      if (bn_of_block_[b] < 0) continue;
      const auto& bn = bns_[static_cast<std::size_t>(bn_of_block_[b])];
      const std::string prefix = "bn" + std::to_string(b + 1);
      out.emplace_back(prefix + ".gamma", &bn.gamma);
      out.emplace_back(prefix + ".beta", &bn.beta);
      out.emplace_back(prefix + ".running_mean", &bn.running_mean);
      out.emplace_back(prefix + ".running_var", &bn.running_var);
    }
    out.emplace_back("dense.weights", &dense_w_);
    out.emplace_back("dense.bias", &dense_b_);
    return out;
  }

  void load_named(const std::map<std::string, Tensor<T>>& tensors) {
    const auto expected = named_tensors();
    if (tensors.size() != expected.size()) {
      throw DataError("model: checkpoint carries " + std::to_string(tensors.size()) +
                      " tensors, expected " + std::to_string(expected.size()));
    }
    for (const auto& [name, slot] : expected) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw DataError("model: checkpoint is missing tensor " + name);
      if (it->second.shape() != slot->shape()) {
        throw DataError("model: tensor " + name + " has shape " +
                        shape_str(it->second.shape()) + ", expected " +
                        shape_str(slot->shape()));
      }
      *const_cast<Tensor<T>*>(slot) = it->second;
    }
  }

 private:
  void check_input(const Tensor<T>& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != def_.in_channels ||
        batch.dim(2) != def_.in_height || batch.dim(3) != def_.in_width) {
      throw ShapeError("model: expected input (N, " + std::to_string(def_.in_channels) +
                       ", " + std::to_string(def_.in_height) + ", " +
                       std::to_string(def_.in_width) + "), got " +
                       shape_str(batch.shape()));
    }
  }

  ModelDef def_;
  std::vector<ConvParams<T>> convs_;
  std::vector<BatchNormState<T>> bns_;
  std::vector<int> bn_of_block_;
  Tensor<T> dense_w_;
  Tensor<T> dense_b_;
};

}  // namespace thermo
