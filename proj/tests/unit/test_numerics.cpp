#include "doctest.h"

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "vatlab/numerics.hpp"

using namespace vatlab;

TEST_SUITE("numerics") {
  TEST_CASE("matmul examples") {
    const Tensor a = Tensor::matrix({{2.0, -1.0}, {0.5, 3.0}});
    const Tensor eye = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(matmul(eye, a) == a);
    CHECK(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}})) == Tensor::matrix({{3}, {7}}));
    const Tensor zero({2, 2});
    CHECK(matmul(zero, a) == zero);
  }

  TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 2})), DimensionError);
  }

  TEST_CASE("matmul is associative on random triples") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = 1 + rng.index(7), k = 1 + rng.index(7), n = 1 + rng.index(7), q = 1 + rng.index(7);
      const Tensor a = testing::random_tensor(rng, m, k), b = testing::random_tensor(rng, k, n),
                   c = testing::random_tensor(rng, n, q);
      const Tensor left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
      for (std::size_t i = 0; i < left.size(); ++i) CHECK(testing::rel_err(left[i], right[i], 1.0) < 1e-9);
    }
  }

  TEST_CASE("transpose swaps indices") {
    const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    const Tensor t = transpose(a);
    CHECK(t.shape() == std::vector<std::size_t>{3, 2});
    CHECK(t(2, 1) == 6.0);
  }

  TEST_CASE("log_softmax examples") {
    const Tensor half = log_softmax(Tensor::matrix({{0.0, 0.0}}));
    CHECK(half[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(half[1] == doctest::Approx(std::log(0.5)).epsilon(1e-15));

    const Tensor big = log_softmax(Tensor::matrix({{1000.0, 0.0}}));
    CHECK(big.all_finite());
    // Exact values from the shifted form: log(1 + e^-1000) underflows to 0.
    CHECK(std::abs(big[0]) < 1e-300);
    CHECK(big[1] == doctest::Approx(-1000.0).epsilon(1e-15));

    const Tensor z = Tensor::matrix({{0.3, -1.2, 2.5}});
    Tensor shifted = z;
    for (double& v : shifted.values()) v += 17.0;
    const Tensor a = log_softmax(z), b = log_softmax(shifted);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));
  }

  TEST_CASE("log_softmax rows exponentiate to distributions") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      Tensor z = testing::random_tensor(rng, 3, 2 + rng.index(9), 300.0);
      for (double& v : z.values()) v = std::clamp(v, -1e3, 1e3);
      const Tensor ls = log_softmax(z);
      for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (double v : ls.row(r)) s += std::exp(v);
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("log_softmax errors") {
    CHECK_THROWS_AS(log_softmax(Tensor::matrix({{1.0, std::nan("")}})), NumericError);
    CHECK_THROWS_AS(log_softmax(Tensor::matrix({{1.0, std::numeric_limits<double>::infinity()}})), NumericError);
    CHECK_THROWS_AS(log_softmax(Tensor::matrix({{1.0}})), DimensionError);
  }

  TEST_CASE("sample_unit_vector") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const Tensor v = sample_unit_vector(rng, 1);
      CHECK(std::abs(v[0]) == 1.0);
    }
    for (std::size_t dim : {2, 5, 100, 784}) {
      const Tensor v = sample_unit_vector(rng, dim);
      CHECK(std::abs(l2_norm(v.values()) - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(sample_unit_vector(rng, 0), DimensionError);
  }

  TEST_CASE("sample_unit_vector is centred on the sphere") {
    Rng rng(19);
    double s[3] = {0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const Tensor v = sample_unit_vector(rng, 3);
      for (int c = 0; c < 3; ++c) s[c] += v[c];
    }
    for (double c : s) CHECK(std::abs(c / n) < 0.02);
  }

  TEST_CASE("fill_unit_rows gives independent unit rows") {
    Rng rng(4);
    Tensor t({6, 9});
    fill_unit_rows(rng, t);
    for (double n : row_norms(t)) CHECK(std::abs(n - 1.0) < 1e-12);
    CHECK(t.row(0)[0] != t.row(1)[0]);
  }

  TEST_CASE("rng streams are reproducible") {
    Rng a(123456789), b(123456789);
    bool same = true;
    for (int i = 0; i < 1000000; ++i) same = same && a.next_u64() == b.next_u64();
    CHECK(same);
    Rng c(7), d(7);
    for (int i = 0; i < 1000; ++i) {
      CHECK(c.normal() == d.normal());
      CHECK(c.uniform() == d.uniform());
    }
  }

  TEST_CASE("rng forks are deterministic and distinct") {
    const Rng root(99);
    Rng f1 = root.fork(1), f1b = root.fork(1), f2 = root.fork(2);
    const auto x = f1.next_u64();
    CHECK(x == f1b.next_u64());
    CHECK(x != f2.next_u64());
  }

  TEST_CASE("rng uniform and index ranges") {
    Rng rng(8);
    for (int i = 0; i < 10000; ++i) {
      const double u = rng.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      CHECK(rng.index(7) < 7);
    }
  }

  TEST_CASE("tensor construction validates sizes") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK_THROWS_AS(t += Tensor({3, 2}), DimensionError);
  }

  TEST_CASE("require_finite names the culprit") {
    Tensor t({2}, 0.0);
    t[1] = std::nan("");
    CHECK_THROWS_WITH_AS(require_finite(t, "probe"), doctest::Contains("probe"), NumericError);
  }
}
