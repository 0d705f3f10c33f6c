#pragma once

// Fully connected networks with exact reverse-mode gradients.
//
// Batches are column-major: a batch of N inputs of dimension d is a d x N
// matrix, one sample per column.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/core/math.hpp"
#include "nd/core/params.hpp"
#include "nd/core/random.hpp"

namespace nd::nn {

enum class Activation { Identity, ReLU, Softplus, Tanh };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "softplus") return Activation::Softplus;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline void apply_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  switch (a) {
    case Activation::Identity: out = pre; break;
    case Activation::ReLU: out = pre.cwiseMax(0.0); break;
    case Activation::Softplus: out = pre.unaryExpr([](double v) { return softplus(v); }); break;
    case Activation::Tanh: out = pre.array().tanh().matrix(); break;
  }
}

/// Multiplies `delta` in place by the activation derivative evaluated at `pre`.
inline void scale_by_derivative(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& delta) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::ReLU:
      delta.array() *= (pre.array() > 0.0).cast<double>();
      break;
    case Activation::Softplus:
      delta.array() *= pre.unaryExpr([](double v) { return sigmoid(v); }).array();
      break;
    case Activation::Tanh:
      delta.array() *= 1.0 - pre.array().tanh().square();
      break;
  }
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Values recorded by a forward pass and consumed by backward.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to layer k
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of layer k
  std::uint64_t version = 0;
  bool live = false;
};

struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Parameter gradients aligned one-to-one with a DenseNet's layers.
struct GradientTape {
  std::vector<LayerGrad> layers;
  Eigen::MatrixXd input_grad;  // d loss / d input, in_dim x N
  std::size_t accumulated = 0;

  void zero() {
    for (auto& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
    input_grad.setZero();
    accumulated = 0;
  }

  /// this += scale * other; parameter shapes must agree.
  void accumulate(const GradientTape& other, double scale = 1.0) {
    if (layers.empty()) {
      layers = other.layers;
      for (auto& l : layers) {
        l.weight *= scale;
        l.bias *= scale;
      }
      accumulated = 1;
      return;
    }
    if (other.layers.size() != layers.size())
      throw ShapeError("gradient tape layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (other.layers[k].weight.rows() != layers[k].weight.rows() ||
          other.layers[k].weight.cols() != layers[k].weight.cols())
        throw ShapeError("gradient tape shape mismatch at layer " + std::to_string(k));
      layers[k].weight += scale * other.layers[k].weight;
      layers[k].bias += scale * other.layers[k].bias;
    }
    ++accumulated;
  }

  bool is_zero() const {
    for (const auto& l : layers)
      if (!l.weight.isZero(0.0) || !l.bias.isZero(0.0)) return false;
    return true;
  }
};

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  /// in -> hidden[0] -> ... -> out, Identity output; Glorot-uniform weights, zero biases.
  static DenseNet mlp(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                      Activation hidden_activation, Rng& rng) {
    std::vector<DenseLayer> layers;
    Eigen::Index prev = in;
    auto make = [&](Eigen::Index next, Activation act) {
      const double a = std::sqrt(6.0 / static_cast<double>(prev + next));
      DenseLayer l;
      l.weight = uniform(next, prev, -a, a, rng);
      l.bias = Eigen::VectorXd::Zero(next);
      l.activation = act;
      layers.push_back(std::move(l));
      prev = next;
    };
    for (auto h : hidden) make(h, hidden_activation);
    make(out, Activation::Identity);
    return DenseNet(std::move(layers));
  }

  Eigen::Index input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::uint64_t version() const { return version_; }

  /// Mutable layer access; invalidates any outstanding forward caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++version_;
    return layers_;
  }

  /// Marks parameters as modified (invalidates caches).
  void touch() { ++version_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ForwardCache& cache) const {
    check_ready();
    if (x.rows() != input_dim())
      throw ShapeError("forward: layer 0 expects " + std::to_string(input_dim()) +
                       " inputs, got " + std::to_string(x.rows()));
    cache.inputs.resize(layers_.size());
    cache.pre.resize(layers_.size());
    Eigen::MatrixXd a = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (a.rows() != l.in_dim())
        throw ShapeError("forward: dimension mismatch at layer " + std::to_string(k));
      cache.pre[k].noalias() = l.weight * a;
      cache.pre[k].colwise() += l.bias;
      cache.inputs[k] = std::move(a);
      apply_activation(l.activation, cache.pre[k], a);
    }
    cache.version = version_;
    cache.live = true;
    return a;
  }

  /// Forward pass keeping the cache inside the network for a following backward().
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) { return forward(x, cache_); }

  /// Forward pass without recording anything.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const {
    ForwardCache scratch;
    return forward(x, scratch);
  }

  GradientTape backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const {
    if (!cache.live || cache.version != version_ || cache.pre.size() != layers_.size())
      throw StateError("backward: forward cache is stale or missing");
    const Eigen::Index n = cache.pre.back().cols();
    if (upstream.rows() != output_dim() || upstream.cols() != n)
      throw ShapeError("backward: upstream gradient must be " + std::to_string(output_dim()) +
                       " x " + std::to_string(n));
    GradientTape tape;
    tape.layers.resize(layers_.size());
    Eigen::MatrixXd delta = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      scale_by_derivative(l.activation, cache.pre[k], delta);
      tape.layers[k].weight.noalias() = delta * cache.inputs[k].transpose();
      tape.layers[k].bias = delta.rowwise().sum();
      Eigen::MatrixXd next(l.in_dim(), n);
      next.noalias() = l.weight.transpose() * delta;
      delta = std::move(next);
    }
    tape.input_grad = std::move(delta);
    tape.accumulated = 1;
    return tape;
  }

  /// Backward through the cache of the last forward(x) call.
  GradientTape backward(const Eigen::MatrixXd& upstream) const { return backward(cache_, upstream); }

  GradientTape zero_tape() const {
    GradientTape t;
    t.layers.resize(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      t.layers[k].weight = Eigen::MatrixXd::Zero(layers_[k].out_dim(), layers_[k].in_dim());
      t.layers[k].bias = Eigen::VectorXd::Zero(layers_[k].out_dim());
    }
    return t;
  }

  /// Parameter blocks named `<prefix>layer<k>.weight|bias`, paired with `tape`.
  void append_blocks(ParamBlocks& out, const GradientTape& tape, const std::string& prefix) {
    if (tape.layers.size() != layers_.size()) throw ShapeError("tape does not match network " + prefix);
    ++version_;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto base = prefix + "layer" + std::to_string(k);
      if (tape.layers[k].weight.size() != layers_[k].weight.size() ||
          tape.layers[k].bias.size() != layers_[k].bias.size())
        throw ShapeError("tape shape mismatch for " + base);
      out.push_back({base + ".weight", as_span(layers_[k].weight), as_span(tape.layers[k].weight)});
      out.push_back({base + ".bias", as_span(layers_[k].bias), as_span(tape.layers[k].bias)});
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  bool operator==(const DenseNet& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& a = layers_[k];
      const auto& b = o.layers_[k];
      if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
          a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias)
        return false;
    }
    return true;
  }

 private:
  void check_ready() const {
    if (layers_.empty()) throw ConfigError("network has no layers");
  }

  void validate() const {
    check_ready();
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (l.bias.size() != l.out_dim())
        throw ShapeError("layer " + std::to_string(k) + ": bias length differs from output width");
      if (k + 1 < layers_.size() && layers_[k + 1].in_dim() != l.out_dim())
        throw ShapeError("layer " + std::to_string(k + 1) + ": input width does not chain");
      if (!l.weight.allFinite() || !l.bias.allFinite())
        throw NumericError("layer " + std::to_string(k) + ": non-finite parameters");
    }
    if (layers_.back().activation != Activation::Identity)
      throw ConfigError("final layer activation must be identity");
  }

  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
  ForwardCache cache_;
};

}  // namespace nd::nn
