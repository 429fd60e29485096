#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vatlab/numerics.hpp"

namespace vatlab {

enum class Activation { relu, identity };

/// Affine map x·W + b followed by an activation. W is in×out.
struct DenseLayer {
  Tensor weights;
  Tensor biases;
  Activation activation = Activation::relu;

  std::size_t in() const { return weights.rows(); }
  std::size_t out() const { return weights.cols(); }
};

/// Gradients (or parameter deltas) shaped like a network, plus an optional
/// gradient with respect to the network input.
struct GradientBundle {
  std::vector<Tensor> d_weights;
  std::vector<Tensor> d_biases;
  Tensor d_input;

  GradientBundle& add_scaled(const GradientBundle& other, double alpha);
  GradientBundle& scale(double alpha);
  double parameter_squared_norm() const;
  std::size_t parameter_count() const;
  /// Flattened parameter entries in layer order (weights then biases).
  std::vector<double> flatten() const;
};

/// A scalar objective contribution and its parameter gradient.
struct ObjectiveTerm {
  double value = 0.0;
  GradientBundle gradient;
};

/// Multilayer perceptron whose final layer emits logits; softmax lives in the
/// loss and divergence code.
class MlpNetwork {
 public:
  explicit MlpNetwork(std::vector<DenseLayer> layers);
  MlpNetwork(const MlpNetwork& other);
  MlpNetwork& operator=(const MlpNetwork& other);
  MlpNetwork(MlpNetwork&&) noexcept = default;
  MlpNetwork& operator=(MlpNetwork&&) noexcept = default;

  /// ReLU hidden layers, identity output layer. Weights ~ N(0, 2/fan_in), zero biases.
  static MlpNetwork he_initialized(std::size_t input_dim, std::span<const std::size_t> hidden,
                                   std::size_t classes, Rng& rng);
  /// Same topology with every parameter zero.
  static MlpNetwork zeros(std::size_t input_dim, std::span<const std::size_t> hidden,
                          std::size_t classes);

  std::size_t input_dim() const { return layers_.front().in(); }
  std::size_t output_classes() const { return layers_.back().out(); }
  std::size_t depth() const { return layers_.size(); }
  std::vector<std::size_t> hidden_sizes() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  /// Mutable access invalidates outstanding forward caches.
  DenseLayer& mutable_layer(std::size_t i);

  /// θ += alpha·delta over weights and biases.
  void apply(const GradientBundle& delta, double alpha);
  GradientBundle zero_gradients() const;

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

 private:
  void validate() const;

  std::vector<DenseLayer> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

/// Activations retained by forward() for a matching backward().
struct ForwardCache {
  std::uint64_t network_id = 0;
  std::uint64_t network_version = 0;
  /// layer_inputs[i] is the input to layer i; layer_inputs[0] is x.
  std::vector<Tensor> layer_inputs;
  Tensor logits;
};

enum class BackwardTargets { all, parameters, input };

/// Counts of forward and backward passes on the calling thread.
struct PropagationCounts {
  std::size_t forward = 0;
  std::size_t backward = 0;
  friend bool operator==(const PropagationCounts&, const PropagationCounts&) = default;
};
PropagationCounts& propagation_counts();

ForwardCache forward(const MlpNetwork& net, const Tensor& x);
/// Logits only; still counted as a forward pass.
Tensor predict_logits(const MlpNetwork& net, const Tensor& x);

/// Exact gradients of the scalar whose gradient with respect to the logits is
/// `d_logits`. Throws UsageError if the cache came from a different network
/// or an older parameter version.
GradientBundle backward(const MlpNetwork& net, const ForwardCache& cache, const Tensor& d_logits,
                        BackwardTargets targets = BackwardTargets::all);

struct LossAndGradient {
  double value = 0.0;
  Tensor d_logits;
};

/// Mean negative log-likelihood of integer labels and its logit gradient.
LossAndGradient nll_loss(const Tensor& logits, std::span<const int> labels);

/// Inverted dropout: zero each entry with probability 1 - keep, scale survivors by 1/keep.
Tensor apply_dropout(const Tensor& x, double keep_probability, Rng& rng);

}  // namespace vatlab
