#include "vatlab/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vatlab/divergence.hpp"

namespace vatlab::oracle {
namespace {

double theta_dot(const Tensor& theta, std::span<const double> v) {
  if (theta.size() != v.size()) throw DimensionError("oracle: theta and vector lengths differ");
  return dot(theta.values(), v);
}

double bernoulli_kl(double p, double q) {
  auto term = [](double a, double b) {
    return a <= 0.0 ? 0.0 : a * (std::log(a) - std::log(std::max(b, kProbabilityFloor)));
  };
  return term(p, q) + term(1.0 - p, 1.0 - q);
}

}  // namespace

double gaussian_delta_kl(const LinearGaussianModel& m, std::span<const double> r) {
  const double t = theta_dot(m.theta, r);
  return t * t / (2.0 * m.sigma2);
}

Tensor gaussian_grad_r(const LinearGaussianModel& m, const Tensor& r) {
  Tensor g(r.shape());
  for (std::size_t i = 0; i < r.rows(); ++i) {
    const double t = theta_dot(m.theta, r.row(i)) / m.sigma2;
    auto gr = g.row(i);
    for (std::size_t c = 0; c < gr.size(); ++c) gr[c] = t * m.theta[c];
  }
  return g;
}

double gaussian_lds_exact(const LinearGaussianModel& m, double epsilon) {
  if (!(m.sigma2 > 0.0)) throw ConfigError("gaussian oracle: sigma2 must be positive");
  return -epsilon * epsilon * dot(m.theta.values(), m.theta.values()) / (2.0 * m.sigma2);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logistic_delta_kl(const LogisticModel& m, std::span<const double> x,
                         std::span<const double> r) {
  const double a = theta_dot(m.theta, x);
  return bernoulli_kl(sigmoid(a), sigmoid(a + theta_dot(m.theta, r)));
}

double logistic_lds_taylor(const LogisticModel& m, std::span<const double> x, double epsilon) {
  const double s = sigmoid(theta_dot(m.theta, x));
  return -0.5 * s * (1.0 - s) * epsilon * epsilon * dot(m.theta.values(), m.theta.values());
}

Tensor brute_force_hessian(const ScalarField& f, std::size_t dim, double h) {
  if (!(h > 0.0)) throw ConfigError("brute_force_hessian: step must be positive");
  std::vector<double> r(dim, 0.0);
  auto eval = [&](std::size_t i, double si, std::size_t j, double sj) {
    std::fill(r.begin(), r.end(), 0.0);
    r[i] += si * h;
    r[j] += sj * h;
    return f(r);
  };
  std::fill(r.begin(), r.end(), 0.0);
  const double f0 = f(r);
  Tensor hess({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) {
    // eval(i, ±1, i, 0) steps h along e_i.
    const double fp = eval(i, 1.0, i, 0.0);
    const double fm = eval(i, -1.0, i, 0.0);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (std::size_t j = i + 1; j < dim; ++j) {
      const double fpp = eval(i, 1.0, j, 1.0);
      const double fpm = eval(i, 1.0, j, -1.0);
      const double fmp = eval(i, -1.0, j, 1.0);
      const double fmm = eval(i, -1.0, j, -1.0);
      hess(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < i; ++j) hess(i, j) = hess(j, i);
  return hess;
}

Tensor brute_force_hessian(const MlpNetwork& net, const Tensor& x_row, double h) {
  const std::size_t dim = x_row.size();
  if (dim > kMaxHessianDim) {
    throw UsageError("brute_force_hessian: input dimension " + std::to_string(dim) +
                     " exceeds " + std::to_string(kMaxHessianDim));
  }
  const Tensor x({1, dim}, x_row.data());
  const Tensor z0 = predict_logits(net, x);
  const DetachedDistribution base = DetachedDistribution::from_logits(z0);
  // Δ_KL(r) = log Σ p_c exp(v_c), v = u − Σ p_c u_c, u = z(x + r) − z(x), via expm1/log1p.
  auto f = [&](std::span<const double> r) {
    const Tensor rt({1, dim}, std::vector<double>(r.begin(), r.end()));
    const Tensor z = predict_logits(net, x + rt);
    double m = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) m += base.prob[c] * (z[c] - z0[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += base.prob[c] * std::expm1(z[c] - z0[c] - m);
    return std::log1p(s);
  };
  return brute_force_hessian(f, dim, h);
}

SymmetricEigen jacobi_eigen(const Tensor& input) {
  if (input.rank() != 2 || input.rows() != input.cols()) {
    throw DimensionError("jacobi_eigen: expected a square matrix, got " +
                         shape_string(input.shape()));
  }
  const std::size_t n = input.rows();
  double scale = 0.0;
  for (double v : input.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-9 * std::max(1.0, scale)) {
        throw DataError("jacobi_eigen: matrix is not symmetric at (" + std::to_string(i) + "," +
                        std::to_string(j) + ")");
      }

  Tensor a = input;
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  double frob = 0.0;
  for (double x : a.values()) frob += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * frob || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

EigenPair dominant_eigenvector(const Tensor& h) {
  const SymmetricEigen eig = jacobi_eigen(h);
  const std::size_t n = eig.values.size();
  if (n == 0) throw DimensionError("dominant_eigenvector: empty matrix");
  // Values are sorted descending, so the largest magnitude is at either end.
  const std::size_t k = std::abs(eig.values.back()) > std::abs(eig.values.front()) ? n - 1 : 0;
  EigenPair out{eig.values[k], Tensor({n})};
  for (std::size_t i = 0; i < n; ++i) out.vector[i] = eig.vectors(i, k);
  return out;
}

}  // namespace vatlab::oracle
