#pragma once

// Closed-form models and brute-force references. None of this runs during
// training; tests and the acceptance suite check the VAT machinery against it.

#include <functional>

#include "vatlab/nn.hpp"

namespace vatlab::oracle {

/// p(y|x,θ) = N(θᵀx, σ²).
struct LinearGaussianModel {
  Tensor theta;
  double sigma2 = 1.0;
};

/// p(y=1|x,θ) = sigmoid(θᵀx).
struct LogisticModel {
  Tensor theta;
};

/// KL between N(θᵀx, σ²) and N(θᵀ(x+r), σ²): (θᵀr)²/(2σ²), independent of x.
double gaussian_delta_kl(const LinearGaussianModel& m, std::span<const double> r);
/// Row-wise gradient (θᵀr)θ/σ².
Tensor gaussian_grad_r(const LinearGaussianModel& m, const Tensor& r);
/// −ε²‖θ‖²/(2σ²).
double gaussian_lds_exact(const LinearGaussianModel& m, double epsilon);

double sigmoid(double z);
/// Bernoulli KL between the model at x and at x + r.
double logistic_delta_kl(const LogisticModel& m, std::span<const double> x,
                         std::span<const double> r);
/// Second-order value −½·s(1−s)·ε²‖θ‖² with s = sigmoid(θᵀx).
double logistic_lds_taylor(const LogisticModel& m, std::span<const double> x, double epsilon);

using ScalarField = std::function<double(std::span<const double>)>;

/// Second-difference Hessian of f at the origin, symmetrized. Uses only
/// function values: 2·dim² + 1 evaluations.
Tensor brute_force_hessian(const ScalarField& f, std::size_t dim, double h_step = 1e-4);

/// Hessian of Δ_KL(r) at r = 0 for a single input row of `net`. Refuses
/// inputs wider than kMaxHessianDim.
Tensor brute_force_hessian(const MlpNetwork& net, const Tensor& x_row, double h_step = 1e-4);

inline constexpr std::size_t kMaxHessianDim = 32;

/// Eigenvalues (descending) and unit eigenvectors (columns of `vectors`).
struct SymmetricEigen {
  std::vector<double> values;
  Tensor vectors;
};

/// Cyclic Jacobi rotations. Throws DataError for non-symmetric input.
SymmetricEigen jacobi_eigen(const Tensor& a);

struct EigenPair {
  double value = 0.0;
  Tensor vector;
};

/// Eigenpair of largest |λ|, the fixed point of power iteration.
EigenPair dominant_eigenvector(const Tensor& h);

}  // namespace vatlab::oracle
