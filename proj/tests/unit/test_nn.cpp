#include "doctest.h"

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "vatlab/nn.hpp"

using namespace vatlab;

TEST_SUITE("nn_core") {
  TEST_CASE("zero-weight network gives zero logits") {
    const std::vector<std::size_t> hidden{4, 3};
    const MlpNetwork net = MlpNetwork::zeros(5, hidden, 3);
    Rng rng(1);
    const Tensor logits = predict_logits(net, testing::random_tensor(rng, 6, 5));
    for (double v : logits.values()) CHECK(v == 0.0);
    const Tensor p = softmax(logits);
    for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("identity layer passes inputs through") {
    const MlpNetwork net({DenseLayer{Tensor::matrix({{1, 0}, {0, 1}}), Tensor({2}), Activation::identity}});
    const Tensor x = Tensor::matrix({{0.25, -3.0}, {7.0, 1.5}});
    CHECK(predict_logits(net, x) == x);
  }

  TEST_CASE("hand-set 2-2-2 network") {
    // Hidden: (1·1 + 2·0.5 + 0.1, 1·(−0.5) + 2·1 − 0.2) = (2.1, 1.3), both positive.
    // Logits: (2.1 − 0.65, −2.1 + 2.6 + 0.3) = (1.45, 0.8).
    const Tensor logits = predict_logits(testing::hand_net_222(), Tensor::matrix({{1.0, 2.0}, {-1.0, -1.0}}));
    CHECK(logits(0, 0) == doctest::Approx(1.45).epsilon(1e-14));
    CHECK(logits(0, 1) == doctest::Approx(0.8).epsilon(1e-14));
    // Second row: hidden pre-activations (−1.4, −0.7) are clipped, logits equal the output bias.
    CHECK(logits(1, 0) == 0.0);
    CHECK(logits(1, 1) == doctest::Approx(0.3).epsilon(1e-15));
  }

  TEST_CASE("forward rejects the wrong input width") {
    Rng rng(2);
    const MlpNetwork net = testing::random_net(rng, 4, {3}, 2);
    CHECK_THROWS_AS(forward(net, Tensor({2, 5})), DimensionError);
  }

  TEST_CASE("construction validates the layer chain") {
    CHECK_THROWS_AS(MlpNetwork({DenseLayer{Tensor({2, 3}), Tensor({3}), Activation::relu},
                                DenseLayer{Tensor({4, 2}), Tensor({2}), Activation::identity}}),
                    DimensionError);
    CHECK_THROWS_AS(MlpNetwork({DenseLayer{Tensor({2, 2}), Tensor({2}), Activation::relu}}), DimensionError);
  }

  TEST_CASE("zero upstream gradient gives a zero bundle") {
    Rng rng(3);
    const MlpNetwork net = testing::random_net(rng, 4, {5}, 3);
    const Tensor x = testing::random_tensor(rng, 2, 4);
    const ForwardCache cache = forward(net, x);
    const GradientBundle g = backward(net, cache, Tensor({2, 3}));
    for (double v : g.flatten()) CHECK(v == 0.0);
    for (double v : g.d_input.values()) CHECK(v == 0.0);
  }

  TEST_CASE("linear network: input gradient of the logit sum is the row sums of W") {
    const Tensor w = Tensor::matrix({{1.0, 2.0, -1.0}, {0.5, 0.0, 4.0}});
    const MlpNetwork net({DenseLayer{w, Tensor({3}), Activation::identity}});
    const Tensor x = Tensor::matrix({{3.0, -2.0}, {0.1, 0.2}});
    const ForwardCache cache = forward(net, x);
    const GradientBundle g = backward(net, cache, Tensor({2, 3}, 1.0));
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(g.d_input(r, 0) == doctest::Approx(2.0));
      CHECK(g.d_input(r, 1) == doctest::Approx(4.5));
    }
    // dL/dW[i][j] = Σ_rows x[r][i].
    CHECK(g.d_weights[0](0, 0) == doctest::Approx(3.1));
    CHECK(g.d_weights[0](1, 2) == doctest::Approx(-1.8));
    CHECK(g.d_biases[0][1] == doctest::Approx(2.0));
  }

  TEST_CASE("backward matches central differences of the NLL") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t input = 2 + rng.index(5), classes = 2 + rng.index(3);
      std::vector<std::size_t> hidden;
      for (std::size_t l = 0, n = 1 + rng.index(2); l < n; ++l) hidden.push_back(2 + rng.index(8));
      MlpNetwork net = testing::random_net(rng, input, hidden, classes);
      Tensor x = testing::random_tensor(rng, 3, input);
      std::vector<int> labels(3);
      for (int& y : labels) y = static_cast<int>(rng.index(classes));

      const ForwardCache cache = forward(net, x);
      const LossAndGradient loss = nll_loss(cache.logits, labels);
      const GradientBundle g = backward(net, cache, loss.d_logits);

      auto loss_of = [&](const MlpNetwork& n) { return nll_loss(predict_logits(n, x), labels).value; };
      // Rounding in a central difference at step h is a few ulps of the loss
      // over h; entries too small to resolve to 1e-6 use that as their scale.
      const double h = 1e-5;
      const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss.value)) / h;
      const double resolution = noise / 1e-6;
      const std::vector<double> fd_theta = testing::fd_parameter_gradient(net, loss_of);
      CHECK(testing::max_rel_err(g.flatten(), fd_theta, resolution) < 1e-6);

      const std::vector<double> fd_x =
          testing::central_difference(x.values(), [&] { return loss_of(net); });
      CHECK(testing::max_rel_err(g.d_input.values(), fd_x, resolution) < 1e-6);
    }
  }

  TEST_CASE("backward targets limit what is computed") {
    Rng rng(5);
    const MlpNetwork net = testing::random_net(rng, 3, {4}, 2);
    const Tensor x = testing::random_tensor(rng, 2, 3);
    const ForwardCache cache = forward(net, x);
    const Tensor d = testing::random_tensor(rng, 2, 2);
    const GradientBundle all = backward(net, cache, d);
    const GradientBundle params = backward(net, cache, d, BackwardTargets::parameters);
    const GradientBundle input = backward(net, cache, d, BackwardTargets::input);
    CHECK(params.flatten() == all.flatten());
    CHECK(input.d_input == all.d_input);
  }

  TEST_CASE("stale or foreign caches are refused") {
    Rng rng(6);
    MlpNetwork net = testing::random_net(rng, 3, {4}, 2);
    const MlpNetwork other = testing::random_net(rng, 3, {4}, 2);
    const Tensor x = testing::random_tensor(rng, 2, 3);
    const ForwardCache cache = forward(net, x);
    CHECK_THROWS_AS(backward(other, cache, Tensor({2, 2})), UsageError);
    net.mutable_layer(0).weights[0] += 1.0;
    CHECK_THROWS_AS(backward(net, cache, Tensor({2, 2})), UsageError);
    const MlpNetwork copy = other;
    CHECK_THROWS_AS(backward(copy, forward(other, x), Tensor({2, 2})), UsageError);
  }

  TEST_CASE("nll_loss examples") {
    const LossAndGradient uniform = nll_loss(Tensor({4, 10}), std::vector<int>{0, 3, 9, 5});
    CHECK(uniform.value == doctest::Approx(std::log(10.0)).epsilon(1e-14));
    CHECK(nll_loss(Tensor::matrix({{60.0, 0.0}}), std::vector<int>{0}).value < 1e-25);
    const LossAndGradient one = nll_loss(Tensor::matrix({{1.0, 0.0}}), std::vector<int>{0});
    CHECK(one.value == doctest::Approx(0.313262).epsilon(1e-6));
    const double s = std::exp(1.0) / (std::exp(1.0) + 1.0);
    CHECK(one.d_logits(0, 0) == doctest::Approx(s - 1.0));
    CHECK(one.d_logits(0, 1) == doctest::Approx(1.0 - s));
    const LossAndGradient two = nll_loss(Tensor::matrix({{1.0, 0.0}, {1.0, 0.0}}), std::vector<int>{0, 0});
    CHECK(two.d_logits(1, 0) == doctest::Approx((s - 1.0) / 2.0));
  }

  TEST_CASE("nll_loss rejects out-of-range labels") {
    CHECK_THROWS_AS(nll_loss(Tensor({1, 3}), std::vector<int>{3}), DataError);
    CHECK_THROWS_AS(nll_loss(Tensor({1, 3}), std::vector<int>{-1}), DataError);
    CHECK_THROWS_AS(nll_loss(Tensor({2, 3}), std::vector<int>{0}), DimensionError);
  }

  TEST_CASE("dropout") {
    Rng rng(9);
    const Tensor x = testing::random_tensor(rng, 4, 6);
    CHECK(apply_dropout(x, 1.0, rng) == x);
    CHECK_THROWS_AS(apply_dropout(x, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(apply_dropout(x, 1.5, rng), ConfigError);

    const Tensor ones({1, 100000}, 1.0);
    const Tensor dropped = apply_dropout(ones, 0.3, rng);
    std::size_t kept = 0;
    double sum = 0.0;
    for (double v : dropped.values()) {
      kept += v != 0.0;
      sum += v;
      CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.3)));
    }
    CHECK(std::abs(static_cast<double>(kept) / 1e5 - 0.3) < 0.01);
    CHECK(std::abs(sum / 1e5 - 1.0) < 0.03);

    Rng a(4), b(4);
    CHECK(apply_dropout(x, 0.5, a) == apply_dropout(x, 0.5, b));
  }

  TEST_CASE("forward is deterministic") {
    Rng rng(10);
    const MlpNetwork net = testing::random_net(rng, 5, {7, 4}, 3);
    const Tensor x = testing::random_tensor(rng, 3, 5);
    CHECK(predict_logits(net, x) == predict_logits(net, x));
  }

  TEST_CASE("ReLU networks are piecewise linear along a line") {
    Rng rng(12);
    const MlpNetwork net = testing::random_net(rng, 4, {6, 5}, 3);
    const Tensor x = testing::random_tensor(rng, 1, 4);
    const Tensor d = testing::random_tensor(rng, 1, 4);
    const double alpha = 1e-7;
    auto at = [&](double a) {
      Tensor p = x;
      p.axpy(a, d);
      return predict_logits(net, p);
    };
    const Tensor f0 = at(0.0), f1 = at(alpha), f2 = at(2.0 * alpha);
    for (std::size_t c = 0; c < 3; ++c) {
      // Equal increments along the segment: second difference vanishes up to rounding.
      CHECK(std::abs(f2[c] - 2.0 * f1[c] + f0[c]) < 1e-12);
    }
  }

  TEST_CASE("He initialization scale") {
    Rng rng(13);
    const std::vector<std::size_t> hidden{400};
    const MlpNetwork net = MlpNetwork::he_initialized(200, hidden, 2, rng);
    double s = 0.0;
    for (double w : net.layer(0).weights.values()) s += w * w;
    const double var = s / static_cast<double>(net.layer(0).weights.size());
    CHECK(var == doctest::Approx(2.0 / 200.0).epsilon(0.02));
    for (double b : net.layer(0).biases.values()) CHECK(b == 0.0);
    CHECK(net.hidden_sizes() == hidden);
  }

  TEST_CASE("propagation counters") {
    Rng rng(14);
    const MlpNetwork net = testing::random_net(rng, 3, {4}, 2);
    const Tensor x = testing::random_tensor(rng, 2, 3);
    const PropagationCounts before = propagation_counts();
    const ForwardCache cache = forward(net, x);
    backward(net, cache, Tensor({2, 2}));
    predict_logits(net, x);
    CHECK(propagation_counts().forward - before.forward == 2);
    CHECK(propagation_counts().backward - before.backward == 1);
  }

  TEST_CASE("gradient bundle arithmetic") {
    Rng rng(15);
    const MlpNetwork net = testing::random_net(rng, 3, {4}, 2);
    GradientBundle a = net.zero_gradients();
    CHECK(a.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
    GradientBundle b = a;
    b.d_weights[0][0] = 2.0;
    a.add_scaled(b, 1.5);
    CHECK(a.d_weights[0][0] == 3.0);
    a.scale(2.0);
    CHECK(a.parameter_squared_norm() == 36.0);
  }
}
