#include "doctest.h"

#include <array>
#include <cmath>

#include "helpers.hpp"
#include "vatlab/oracles.hpp"
#include "vatlab/vat.hpp"

using namespace vatlab;

namespace {

double abs_cos(std::span<const double> a, std::span<const double> b) {
  return std::abs(dot(a, b)) / (l2_norm(a) * l2_norm(b));
}

// Straight-line evaluation of the hand 2-2-2 net with parameters packed as
// W1 (4), b1 (2), W2 (4), b2 (2) in row-major (input, output) order.
std::array<double, 2> hand_logits(const std::array<double, 12>& t, double x0, double x1) {
  const double h0 = std::max(0.0, x0 * t[0] + x1 * t[2] + t[4]);
  const double h1 = std::max(0.0, x0 * t[1] + x1 * t[3] + t[5]);
  return {h0 * t[6] + h1 * t[8] + t[10], h0 * t[7] + h1 * t[9] + t[11]};
}

std::array<double, 2> log_probs(std::array<double, 2> z) {
  const double m = std::max(z[0], z[1]);
  const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
  return {z[0] - lse, z[1] - lse};
}

}  // namespace

TEST_SUITE("vat") {
  TEST_CASE("config validation") {
    CHECK_NOTHROW(VatConfig{}.validate());
    CHECK_THROWS_AS((VatConfig{0.0, 1e-6, 1, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((VatConfig{0.5, 0.0, 1, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((VatConfig{0.5, 1e-6, 0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((VatConfig{0.5, 1e-6, 1, -1.0}.validate()), ConfigError);
    CHECK_NOTHROW(VatConfig{0.5, 1e-6, 1, 0.0}.validate());
  }

  TEST_CASE("perturbation rows have norm epsilon and LDS is nonpositive") {
    Rng rng(41);
    for (double eps : {0.01, 0.5, 3.0}) {
      for (int ip : {1, 2, 5}) {
        const MlpNetwork net = testing::random_net(rng, 7, {12}, 3);
        const Tensor x = testing::random_tensor(rng, 9, 7);
        const VapResult res = virtual_adversarial(net, x, VatConfig{eps, 1e-6, ip, 1.0}, rng);
        CHECK(res.iterations_used == ip);
        for (double n : row_norms(res.r_vadv)) CHECK(std::abs(n - eps) < 1e-9 * std::max(1.0, eps));
        for (double v : res.lds_estimate.values()) CHECK(v <= 1e-12);
      }
    }
  }

  TEST_CASE("gen_vap is deterministic given the rng seed") {
    Rng init(42);
    const MlpNetwork net = testing::random_net(init, 5, {8}, 3);
    const Tensor x = testing::random_tensor(init, 6, 5);
    Rng a(7), b(7);
    CHECK(gen_vap(net, x, VatConfig{}, a) == gen_vap(net, x, VatConfig{}, b));
  }

  TEST_CASE("rank-one Gaussian oracle converges in one step") {
    const oracle::LinearGaussianModel m{Tensor::vector({3.0, 4.0}), 1.0};
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor start({1, 2});
      fill_unit_rows(rng, start);
      const PowerIterationResult res =
          power_iterate([&](const Tensor& r) { return oracle::gaussian_grad_r(m, r); }, start, 1e-6, 1);
      CHECK(abs_cos(res.direction.row(0), std::vector<double>{0.6, 0.8}) > 1.0 - 1e-6);
      CHECK(std::abs(std::abs(res.direction[0]) - 0.6) < 1e-9);
      CHECK(std::abs(std::abs(res.direction[1]) - 0.8) < 1e-9);

      Tensor r = res.direction;
      r *= 1.0;
      CHECK(-oracle::gaussian_delta_kl(m, r.row(0)) ==
            doctest::Approx(oracle::gaussian_lds_exact(m, 1.0)).epsilon(1e-12));
    }
    CHECK(oracle::gaussian_lds_exact(m, 1.0) == doctest::Approx(-12.5));
  }

  TEST_CASE("degenerate gradient keeps the previous direction") {
    Tensor start = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
    const PowerIterationResult res =
        power_iterate([](const Tensor& r) { return Tensor::zeros_like(r); }, start, 1e-6, 3);
    CHECK(res.direction == start);
    CHECK(res.degenerate_rows == 2);

    // A zero-weight net is flat in x: the perturbation still has norm ε and LDS is 0.
    const MlpNetwork flat = MlpNetwork::zeros(3, std::vector<std::size_t>{4}, 2);
    Rng rng(44);
    const Tensor x = testing::random_tensor(rng, 5, 3);
    const VapResult v = virtual_adversarial(flat, x, VatConfig{}, rng);
    CHECK(v.degenerate_rows == 5);
    for (double n : row_norms(v.r_vadv)) CHECK(n == doctest::Approx(0.5));
    for (double lds : v.lds_estimate.values()) CHECK(lds == 0.0);
  }

  TEST_CASE("finite-difference product matches the brute-force Hessian") {
    Rng rng(45);
    for (int trial = 0; trial < 5; ++trial) {
      const MlpNetwork net = testing::random_net(rng, 4, {6}, 3);
      const Tensor x = testing::random_tensor(rng, 1, 4);
      const DetachedDistribution base = base_distribution(net, x);
      const Tensor h = oracle::brute_force_hessian(net, x);
      Tensor d({1, 4});
      fill_unit_rows(rng, d);
      const double xi = 1e-4;
      Tensor r = d;
      r *= xi;
      const Tensor g = grad_r_delta_kl(net, x, r, base);
      const Tensor hd = matmul(d, h);
      std::vector<double> scaled(4);
      for (std::size_t i = 0; i < 4; ++i) scaled[i] = xi * hd[i];
      CHECK(testing::max_rel_err(g.values(), scaled, 1e-3 * xi * l2_norm(hd.values())) < 1e-3);
    }
  }

  TEST_CASE("alignment with the dominant eigenvector does not decrease with I_p") {
    Rng rng(46);
    for (int trial = 0; trial < 10; ++trial) {
      const MlpNetwork net = testing::random_net(rng, 4, {8}, 3);
      const Tensor x = testing::random_tensor(rng, 1, 4);
      const oracle::EigenPair top = oracle::dominant_eigenvector(oracle::brute_force_hessian(net, x));
      double previous = 0.0;
      for (int ip = 1; ip <= 5; ++ip) {
        Rng same(1000 + trial);
        const Tensor r = gen_vap(net, x, VatConfig{0.5, 1e-6, ip, 1.0}, same);
        const double c = abs_cos(r.row(0), top.vector.values());
        CHECK(c >= previous - 1e-6);
        previous = c;
      }
    }
  }

  TEST_CASE("direction is stable across xi") {
    Rng rng(47);
    const MlpNetwork net = testing::random_net(rng, 6, {10}, 3);
    const Tensor x = testing::random_tensor(rng, 4, 6);
    std::vector<Tensor> dirs;
    for (double xi : {1e-6, 1e-4, 1e-2}) {
      Rng same(5);
      dirs.push_back(gen_vap(net, x, VatConfig{1.0, xi, 3, 1.0}, same));
    }
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(abs_cos(dirs[0].row(r), dirs[1].row(r)) > 0.999);
      CHECK(abs_cos(dirs[0].row(r), dirs[2].row(r)) > 0.99);
    }
  }

  TEST_CASE("lds closed forms") {
    const MlpNetwork flat = MlpNetwork::zeros(3, std::vector<std::size_t>{5}, 4);
    Rng rng(48);
    const Tensor x = testing::random_tensor(rng, 3, 3);
    for (double v : testing::values_of(lds_estimate(flat, x, testing::random_tensor(rng, 3, 3)))) CHECK(v == 0.0);

    // Logistic model with θᵀx = 0, ‖θ‖ = 1, ε = 0.5 along θ.
    const oracle::LogisticModel lm{Tensor::vector({0.6, 0.8})};
    const std::vector<double> x0{0.8, -0.6};
    const double taylor = oracle::logistic_lds_taylor(lm, x0, 0.5);
    CHECK(taylor == doctest::Approx(-0.03125).epsilon(1e-12));
    double previous_gap = 0.0;
    for (double eps : {0.8, 0.4, 0.2, 0.1}) {
      const std::vector<double> r{0.6 * eps, 0.8 * eps};
      const double gap = std::abs(-oracle::logistic_delta_kl(lm, x0, r) - oracle::logistic_lds_taylor(lm, x0, eps));
      CHECK(gap < 0.1 * eps * eps * eps);
      if (previous_gap > 0.0) CHECK(gap < previous_gap / 7.0);
      previous_gap = gap;
    }
  }

  TEST_CASE("duplicating a hidden unit leaves LDS unchanged") {
    Rng rng(49);
    const MlpNetwork net = testing::random_net(rng, 3, {4}, 2);
    const DenseLayer& h = net.layer(0);
    const DenseLayer& o = net.layer(1);
    const std::size_t k = 2;
    Tensor w1({3, 5}), b1({5}), w2({5, 2});
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j) w1(i, j) = h.weights(i, j);
      w1(i, 4) = h.weights(i, k);
    }
    for (std::size_t j = 0; j < 4; ++j) b1[j] = h.biases[j];
    b1[4] = h.biases[k];
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 2; ++c) w2(j, c) = o.weights(j, c) * (j == k ? 0.5 : 1.0);
    for (std::size_t c = 0; c < 2; ++c) w2(4, c) = 0.5 * o.weights(k, c);
    const MlpNetwork wide({DenseLayer{w1, b1, Activation::relu}, DenseLayer{w2, o.biases, Activation::identity}});

    const Tensor x = testing::random_tensor(rng, 8, 3);
    const Tensor r = testing::random_tensor(rng, 8, 3, 0.4);
    const Tensor a = lds_estimate(net, x, r), b = lds_estimate(wide, x, r);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
  }

  TEST_CASE("vat_backward at r = 0 is zero") {
    Rng rng(50);
    const MlpNetwork net = testing::random_net(rng, 4, {6}, 3);
    const Tensor x = testing::random_tensor(rng, 5, 4);
    const ObjectiveTerm t = vat_backward(net, x, Tensor({5, 4}), base_distribution(net, x));
    CHECK(t.value == 0.0);
    CHECK(t.gradient.parameter_squared_norm() < 1e-28);
  }

  TEST_CASE("vat_backward matches finite differences in theta") {
    Rng rng(51);
    for (int trial = 0; trial < 5; ++trial) {
      MlpNetwork net = testing::random_net(rng, 4, {6, 5}, 3);
      const Tensor x = testing::random_tensor(rng, 3, 4);
      const Tensor r = testing::random_tensor(rng, 3, 4, 0.3);
      const DetachedDistribution base = base_distribution(net, x);
      const std::vector<double> analytic = vat_backward(net, x, r, base).gradient.flatten();
      const std::vector<double> fd = testing::fd_parameter_gradient(net, [&](const MlpNetwork& n) {
        return vat_backward(n, x, r, base).value;
      });
      CHECK(testing::max_rel_err(analytic, fd, 1e-7) < 1e-4);
    }
  }

  TEST_CASE("one VAT step on the hand net matches a scalar reference") {
    const MlpNetwork net = testing::hand_net_222();
    const std::array<double, 12> theta{1.0, -0.5, 0.5, 1.0, 0.1, -0.2, 1.0, -1.0, -0.5, 2.0, 0.0, 0.3};
    const double x0 = 1.0, x1 = 2.0, r0 = 0.3, r1 = -0.4, lambda = 1.0;
    const int label = 1;
    const auto base_lp = log_probs(hand_logits(theta, x0, x1));

    auto objective = [&](const std::array<double, 12>& t) {
      const auto lp = log_probs(hand_logits(t, x0, x1));
      const auto lq = log_probs(hand_logits(t, x0 + r0, x1 + r1));
      double kl = 0.0;
      for (int c = 0; c < 2; ++c) kl += std::exp(base_lp[c]) * (base_lp[c] - lq[c]);
      return -lp[label] + lambda * kl;
    };
    std::vector<double> reference(12);
    for (std::size_t i = 0; i < 12; ++i) {
      auto plus = theta, minus = theta;
      plus[i] += 1e-6;
      minus[i] -= 1e-6;
      reference[i] = (objective(plus) - objective(minus)) / 2e-6;
    }

    const Tensor x = Tensor::matrix({{x0, x1}});
    const std::vector<int> labels{label};
    const ForwardCache cache = forward(net, x);
    const LossAndGradient nll = nll_loss(cache.logits, labels);
    GradientBundle total = backward(net, cache, nll.d_logits, BackwardTargets::parameters);
    const ObjectiveTerm v = vat_backward(net, x, Tensor::matrix({{r0, r1}}), base_distribution(net, x));
    total.add_scaled(v.gradient, lambda);
    CHECK(testing::max_rel_err(total.flatten(), reference, 1e-8) < 1e-6);
  }

  TEST_CASE("cost audit counts propagations") {
    Rng rng(52);
    const MlpNetwork net = testing::random_net(rng, 5, {8}, 3);
    const Tensor xl = testing::random_tensor(rng, 4, 5);
    const Tensor xr = testing::random_tensor(rng, 10, 5);
    const std::vector<int> labels{0, 1, 2, 0};
    const PropagationCounts before = propagation_counts();

    CostAudit a = vat_step_cost_audit(net, xl, labels, xr, VatConfig{0.5, 1e-6, 1, 1.0}, rng);
    CHECK(a.likelihood == PropagationCounts{1, 1});
    CHECK(a.regularizer == PropagationCounts{3, 2});
    a = vat_step_cost_audit(net, xl, labels, xr, VatConfig{0.5, 1e-6, 2, 1.0}, rng);
    CHECK(a.regularizer == PropagationCounts{4, 3});
    a = vat_step_cost_audit(net, xl, labels, xr, VatConfig{0.5, 1e-6, 1, 0.0}, rng);
    CHECK(a.regularizer == PropagationCounts{0, 0});

    CHECK(propagation_counts() == before);
  }

  TEST_CASE("lambda scales the regularizer") {
    Rng init(53);
    const MlpNetwork net = testing::random_net(init, 4, {6}, 3);
    const Tensor x = testing::random_tensor(init, 5, 4);
    Rng a(9), b(9);
    const ObjectiveTerm one = vat_regularizer(net, x, VatConfig{0.5, 1e-6, 1, 1.0}, a);
    const ObjectiveTerm three = vat_regularizer(net, x, VatConfig{0.5, 1e-6, 1, 3.0}, b);
    CHECK(three.value == doctest::Approx(3.0 * one.value).epsilon(1e-12));
    CHECK(one.value > 0.0);
  }
}
