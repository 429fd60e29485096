#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "vatlab/divergence.hpp"
#include "vatlab/oracles.hpp"

using namespace vatlab;

TEST_SUITE("divergence") {
  TEST_CASE("kl_categorical examples") {
    const Tensor p = Tensor::matrix({{0.2, 0.5, 0.3}});
    Tensor log_p = p;
    for (double& v : log_p.values()) v = std::log(v);
    CHECK(std::abs(kl_categorical(p, log_p)[0]) < 1e-15);

    const Tensor half = Tensor::matrix({{std::log(0.5), std::log(0.5)}});
    CHECK(kl_categorical(Tensor::matrix({{1.0, 0.0}}), half)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(kl_categorical(Tensor::matrix({{1.0, 0.0}}), half)[0] == doctest::Approx(0.693147).epsilon(1e-6));

    const Tensor q = Tensor::matrix({{std::log(0.7), std::log(0.3)}});
    const double want = 0.3 * std::log(3.0 / 7.0) + 0.7 * std::log(7.0 / 3.0);
    CHECK(kl_categorical(Tensor::matrix({{0.3, 0.7}}), q)[0] == doctest::Approx(want).epsilon(1e-14));
  }

  TEST_CASE("kl_categorical validates its inputs") {
    CHECK_THROWS_AS(kl_categorical(Tensor::matrix({{0.5, 0.6}}), Tensor({1, 2})), DataError);
    CHECK_THROWS_AS(kl_categorical(Tensor::matrix({{0.5, 0.5}}), Tensor({1, 3})), DimensionError);
  }

  TEST_CASE("Gibbs inequality on random rows") {
    Rng rng(31);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t c = 2 + rng.index(8);
      const Tensor a = softmax(testing::random_tensor(rng, 1, c, 3.0));
      const Tensor log_b = log_softmax(testing::random_tensor(rng, 1, c, 3.0));
      CHECK(kl_categorical(a, log_b)[0] >= 0.0);
      const DetachedDistribution d = DetachedDistribution::from_logits(testing::random_tensor(rng, 1, c, 3.0));
      CHECK(kl_categorical(d, d.log_prob)[0] == 0.0);
    }
  }

  TEST_CASE("delta_kl is zero at r = 0 and nonnegative around it") {
    Rng rng(32);
    const MlpNetwork net = testing::random_net(rng, 5, {8}, 3);
    const Tensor x = testing::random_tensor(rng, 4, 5);
    const DetachedDistribution base = base_distribution(net, x);
    for (double v : testing::values_of(delta_kl(net, x, Tensor({4, 5}), base))) CHECK(v == 0.0);
    for (int i = 0; i < 100; ++i) {
      Tensor r({4, 5});
      fill_unit_rows(rng, r);
      r *= 0.3;
      for (double v : testing::values_of(delta_kl(net, x, r, base))) CHECK(v >= 0.0);
    }
  }

  TEST_CASE("delta_kl matches a straight-line evaluation on a 2-2 net") {
    const MlpNetwork net({DenseLayer{Tensor::matrix({{1.0, 2.0}, {-1.0, 0.5}}), Tensor::vector({0.1, -0.3}),
                                     Activation::identity}});
    const double x0 = 0.5, x1 = -1.0, r0 = 0.2, r1 = 0.1;
    const double z0 = x0 * 1.0 + x1 * -1.0 + 0.1, z1 = x0 * 2.0 + x1 * 0.5 - 0.3;
    const double w0 = (x0 + r0) * 1.0 + (x1 + r1) * -1.0 + 0.1, w1 = (x0 + r0) * 2.0 + (x1 + r1) * 0.5 - 0.3;
    const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1)), p1 = 1.0 - p0;
    const double q0 = std::exp(w0) / (std::exp(w0) + std::exp(w1)), q1 = 1.0 - q0;
    const double want = p0 * std::log(p0 / q0) + p1 * std::log(p1 / q1);

    const Tensor x = Tensor::matrix({{x0, x1}});
    const DetachedDistribution base = base_distribution(net, x);
    CHECK(delta_kl(net, x, Tensor::matrix({{r0, r1}}), base)[0] == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("gradient at r = 0 vanishes") {
    Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
      const MlpNetwork net = testing::random_net(rng, 6, {10, 7}, 4);
      const Tensor x = testing::random_tensor(rng, 3, 6);
      const Tensor g = grad_r_delta_kl(net, x, Tensor({3, 6}), base_distribution(net, x));
      const std::vector<double> xn = row_norms(x);
      const std::vector<double> gn = row_norms(g);
      for (std::size_t r = 0; r < 3; ++r) CHECK(gn[r] < 1e-8 * (1.0 + xn[r]));
    }
  }

  TEST_CASE("gradient matches central differences") {
    Rng rng(34);
    for (int trial = 0; trial < 10; ++trial) {
      const MlpNetwork net = testing::random_net(rng, 4, {6}, 3);
      const Tensor x = testing::random_tensor(rng, 2, 4);
      const DetachedDistribution base = base_distribution(net, x);
      Tensor r = testing::random_tensor(rng, 2, 4, 0.5);
      const Tensor g = grad_r_delta_kl(net, x, r, base);
      const std::vector<double> fd = testing::central_difference(r.values(), [&] {
        const Tensor d = delta_kl(net, x, r, base);
        return d[0] + d[1];
      });
      CHECK(testing::max_rel_err(g.values(), fd, 1e-8) < 1e-5);
    }
  }

  TEST_CASE("linear-Gaussian gradient closed form") {
    const oracle::LinearGaussianModel m{Tensor::vector({3.0, 4.0, -1.0}), 2.0};
    Tensor r = Tensor::matrix({{0.2, -0.1, 0.7}});
    const Tensor g = oracle::gaussian_grad_r(m, r);
    const std::vector<double> fd =
        testing::central_difference(r.values(), [&] { return oracle::gaussian_delta_kl(m, r.row(0)); });
    // θᵀr = 0.6 − 0.4 − 0.7 = −0.5, so the gradient is −0.5·θ/2.
    CHECK(g[0] == doctest::Approx(-0.75));
    CHECK(g[1] == doctest::Approx(-1.0));
    CHECK(g[2] == doctest::Approx(0.25));
    CHECK(testing::max_rel_err(g.values(), fd) < 1e-8);
  }

  TEST_CASE("kl logit gradient") {
    const DetachedDistribution base = DetachedDistribution::from_logits(Tensor::matrix({{0.0, 1.0}}));
    const Tensor logits = Tensor::matrix({{2.0, -1.0}});
    const Tensor g = kl_logit_gradient(base, logits);
    const Tensor q = softmax(logits);
    CHECK(g[0] == doctest::Approx(q[0] - base.prob[0]));
    CHECK(g[0] + g[1] == doctest::Approx(0.0));
  }
}
