#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vatlab/nn.hpp"

namespace vatlab::testing {

/// He-initialized net with random non-zero biases so ReLU kinks sit away from zero.
inline MlpNetwork random_net(Rng& rng, std::size_t input, std::vector<std::size_t> hidden,
                             std::size_t classes) {
  MlpNetwork net = MlpNetwork::he_initialized(input, hidden, classes, rng);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (double& b : net.mutable_layer(l).biases.values()) b = 0.3 * rng.normal();
  }
  return net;
}

/// Owning copy, safe to iterate when `t` is a temporary.
inline std::vector<double> values_of(const Tensor& t) { return t.data(); }

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Two inputs, two ReLU hidden units, two logits; weights chosen by hand.
inline MlpNetwork hand_net_222() {
  DenseLayer h{Tensor::matrix({{1.0, -0.5}, {0.5, 1.0}}), Tensor::vector({0.1, -0.2}), Activation::relu};
  DenseLayer o{Tensor::matrix({{1.0, -1.0}, {-0.5, 2.0}}), Tensor::vector({0.0, 0.3}), Activation::identity};
  return MlpNetwork({h, o});
}

/// Central difference of f along every coordinate of `values`.
inline std::vector<double> central_difference(std::span<double> values, const std::function<double()>& f,
                                              double h = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double fp = f();
    values[i] = saved - h;
    const double fm = f();
    values[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a − b| / max(|a|, |b|, floor): relative error that tolerates near-zero entries.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i], floor));
  return m;
}

/// Finite-difference gradient of loss(net) over every weight and bias, in
/// GradientBundle::flatten order.
inline std::vector<double> fd_parameter_gradient(MlpNetwork& net, const std::function<double(const MlpNetwork&)>& loss,
                                                 double h = 1e-5) {
  std::vector<double> out;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (bool weights : {true, false}) {
      const std::size_t n = weights ? net.layer(l).weights.size() : net.layer(l).biases.size();
      for (std::size_t i = 0; i < n; ++i) {
        auto slot = [&]() -> double& {
          return weights ? net.mutable_layer(l).weights[i] : net.mutable_layer(l).biases[i];
        };
        const double saved = slot();
        slot() = saved + h;
        const double fp = loss(net);
        slot() = saved - h;
        const double fm = loss(net);
        slot() = saved;
        out.push_back((fp - fm) / (2.0 * h));
      }
    }
  }
  return out;
}

}  // namespace vatlab::testing
