#include "vatlab/nn.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "vatlab/kernels.hpp"

namespace vatlab {
namespace {

std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::vector<DenseLayer> build_layers(std::size_t input_dim, std::span<const std::size_t> hidden,
                                     std::size_t classes) {
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    layers.push_back({Tensor({in, h}), Tensor({h}), Activation::relu});
    in = h;
  }
  layers.push_back({Tensor({in, classes}), Tensor({classes}), Activation::identity});
  return layers;
}

}  // namespace

GradientBundle& GradientBundle::add_scaled(const GradientBundle& other, double alpha) {
  if (other.d_weights.size() != d_weights.size()) {
    throw DimensionError("gradient bundle: layer count mismatch");
  }
  for (std::size_t i = 0; i < d_weights.size(); ++i) {
    d_weights[i].axpy(alpha, other.d_weights[i]);
    d_biases[i].axpy(alpha, other.d_biases[i]);
  }
  if (!other.d_input.empty()) {
    if (d_input.empty()) d_input = Tensor(other.d_input.shape());
    d_input.axpy(alpha, other.d_input);
  }
  return *this;
}

GradientBundle& GradientBundle::scale(double alpha) {
  for (auto& w : d_weights) w *= alpha;
  for (auto& b : d_biases) b *= alpha;
  d_input *= alpha;
  return *this;
}

double GradientBundle::parameter_squared_norm() const {
  double s = 0.0;
  for (const auto& w : d_weights) s += dot(w.values(), w.values());
  for (const auto& b : d_biases) s += dot(b.values(), b.values());
  return s;
}

std::size_t GradientBundle::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < d_weights.size(); ++i) n += d_weights[i].size() + d_biases[i].size();
  return n;
}

std::vector<double> GradientBundle::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (std::size_t i = 0; i < d_weights.size(); ++i) {
    out.insert(out.end(), d_weights[i].data().begin(), d_weights[i].data().end());
    out.insert(out.end(), d_biases[i].data().begin(), d_biases[i].data().end());
  }
  return out;
}

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers)
    : layers_(std::move(layers)), id_(next_network_id()) {
  validate();
}

MlpNetwork::MlpNetwork(const MlpNetwork& other)
    : layers_(other.layers_), id_(next_network_id()) {}

MlpNetwork& MlpNetwork::operator=(const MlpNetwork& other) {
  if (this != &other) {
    layers_ = other.layers_;
    id_ = next_network_id();
    version_ = 0;
  }
  return *this;
}

void MlpNetwork::validate() const {
  if (layers_.empty()) throw DimensionError("network: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rank() != 2 || l.biases.rank() != 1 || l.biases.size() != l.out()) {
      throw DimensionError("network: layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw DimensionError("network: layer " + std::to_string(i) + " input " +
                           std::to_string(l.in()) + " does not chain with previous output " +
                           std::to_string(layers_[i - 1].out()));
    }
  }
  if (layers_.back().activation != Activation::identity) {
    throw DimensionError("network: final layer must be identity (logits)");
  }
}

MlpNetwork MlpNetwork::he_initialized(std::size_t input_dim, std::span<const std::size_t> hidden,
                                      std::size_t classes, Rng& rng) {
  auto layers = build_layers(input_dim, hidden, classes);
  for (auto& l : layers) {
    const double sd = std::sqrt(2.0 / static_cast<double>(l.in()));
    for (double& w : l.weights.values()) w = sd * rng.normal();
  }
  return MlpNetwork(std::move(layers));
}

MlpNetwork MlpNetwork::zeros(std::size_t input_dim, std::span<const std::size_t> hidden,
                             std::size_t classes) {
  return MlpNetwork(build_layers(input_dim, hidden, classes));
}

std::vector<std::size_t> MlpNetwork::hidden_sizes() const {
  std::vector<std::size_t> h;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h.push_back(layers_[i].out());
  return h;
}

DenseLayer& MlpNetwork::mutable_layer(std::size_t i) {
  ++version_;
  return layers_.at(i);
}

void MlpNetwork::apply(const GradientBundle& delta, double alpha) {
  if (delta.d_weights.size() != layers_.size()) {
    throw DimensionError("network: update has wrong layer count");
  }
  ++version_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weights.axpy(alpha, delta.d_weights[i]);
    layers_[i].biases.axpy(alpha, delta.d_biases[i]);
  }
}

GradientBundle MlpNetwork::zero_gradients() const {
  GradientBundle g;
  for (const auto& l : layers_) {
    g.d_weights.emplace_back(l.weights.shape());
    g.d_biases.emplace_back(l.biases.shape());
  }
  return g;
}

PropagationCounts& propagation_counts() {
  thread_local PropagationCounts counts;
  return counts;
}

ForwardCache forward(const MlpNetwork& net, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != net.input_dim()) {
    throw DimensionError("forward: input " + shape_string(x.shape()) + " but network expects " +
                         std::to_string(net.input_dim()) + " features");
  }
  ++propagation_counts().forward;
  ForwardCache cache;
  cache.network_id = net.id();
  cache.network_version = net.version();
  cache.layer_inputs.reserve(net.depth());
  cache.layer_inputs.push_back(x);
  const std::size_t batch = x.rows();
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layer(i);
    Tensor out({batch, l.out()});
    kernels::omp::gemm_nn(cache.layer_inputs.back().values(), l.weights.values(), out.values(),
                          {batch, l.in(), l.out()});
    for (std::size_t r = 0; r < batch; ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        double v = row[c] + l.biases[c];
        if (l.activation == Activation::relu && v < 0.0) v = 0.0;
        row[c] = v;
      }
    }
    if (i + 1 < net.depth()) {
      cache.layer_inputs.push_back(std::move(out));
    } else {
      cache.logits = std::move(out);
    }
  }
  require_finite(cache.logits, "forward");
  return cache;
}

Tensor predict_logits(const MlpNetwork& net, const Tensor& x) { return forward(net, x).logits; }

GradientBundle backward(const MlpNetwork& net, const ForwardCache& cache, const Tensor& d_logits,
                        BackwardTargets targets) {
  if (cache.network_id != net.id() || cache.network_version != net.version() ||
      cache.layer_inputs.size() != net.depth()) {
    throw UsageError("backward: forward cache does not belong to this network state");
  }
  if (!d_logits.same_shape(cache.logits)) {
    throw DimensionError("backward: d_logits " + shape_string(d_logits.shape()) +
                         " vs logits " + shape_string(cache.logits.shape()));
  }
  ++propagation_counts().backward;
  const bool want_params = targets != BackwardTargets::input;
  const bool want_input = targets != BackwardTargets::parameters;
  const std::size_t batch = d_logits.rows();

  GradientBundle g;
  g.d_weights.resize(net.depth());
  g.d_biases.resize(net.depth());
  Tensor delta = d_logits;
  for (std::size_t ii = net.depth(); ii-- > 0;) {
    const auto& l = net.layer(ii);
    // ReLU derivative: the layer's output is the next layer's input.
    if (l.activation == Activation::relu) {
      const Tensor& out = cache.layer_inputs[ii + 1];
      for (std::size_t k = 0; k < delta.size(); ++k)
        if (out[k] <= 0.0) delta[k] = 0.0;
    }
    if (want_params) {
      Tensor dw({l.in(), l.out()});
      kernels::omp::gemm_tn(cache.layer_inputs[ii].values(), delta.values(), dw.values(),
                            {l.in(), batch, l.out()});
      Tensor db({l.out()});
      for (std::size_t r = 0; r < batch; ++r) {
        auto row = delta.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
      }
      g.d_weights[ii] = std::move(dw);
      g.d_biases[ii] = std::move(db);
    } else {
      g.d_weights[ii] = Tensor(l.weights.shape());
      g.d_biases[ii] = Tensor(l.biases.shape());
    }
    if (ii > 0 || want_input) {
      Tensor prev({batch, l.in()});
      kernels::omp::gemm_nt(delta.values(), l.weights.values(), prev.values(),
                            {batch, l.out(), l.in()});
      delta = std::move(prev);
    }
  }
  if (want_input) g.d_input = std::move(delta);
  return g;
}

LossAndGradient nll_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("nll_loss: " + std::to_string(logits.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  const Tensor logp = log_softmax(logits);
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  LossAndGradient out{0.0, Tensor(logits.shape())};
  if (batch == 0) return out;
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("nll_loss: label " + std::to_string(y) + " at row " + std::to_string(r) +
                      " outside 0.." + std::to_string(classes - 1));
    }
    out.value -= logp(r, static_cast<std::size_t>(y));
    for (std::size_t c = 0; c < classes; ++c) out.d_logits(r, c) = std::exp(logp(r, c)) * inv;
    out.d_logits(r, static_cast<std::size_t>(y)) -= inv;
  }
  out.value *= inv;
  return out;
}

Tensor apply_dropout(const Tensor& x, double keep_probability, Rng& rng) {
  if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
    throw ConfigError("dropout: keep probability must lie in (0, 1], got " +
                      std::to_string(keep_probability));
  }
  if (keep_probability == 1.0) return x;
  Tensor out = x;
  const double scale = 1.0 / keep_probability;
  for (double& v : out.values()) v = rng.bernoulli(keep_probability) ? v * scale : 0.0;
  return out;
}

}  // namespace vatlab
