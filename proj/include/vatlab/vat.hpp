#pragma once

#include <functional>

#include "vatlab/divergence.hpp"

namespace vatlab {

/// Hyperparameters of the smoothness regularizer.
struct VatConfig {
  double epsilon = 0.5;      // perturbation radius, L2, input units
  double xi = 1e-6;          // finite-difference scale
  int power_iterations = 1;  // power-method iterations
  double lambda = 1.0;       // regularization weight

  /// Throws ConfigError unless epsilon > 0, xi > 0, power_iterations >= 1, lambda >= 0.
  void validate() const;
};

struct VapResult {
  Tensor r_vadv;        // batch x I, each row of norm epsilon
  Tensor lds_estimate;  // batch, each <= 0
  int iterations_used = 0;
  std::size_t degenerate_rows = 0;  // rows whose gradient vanished at some iteration
};

/// Row-wise ∇_r Δ_KL at perturbation r. Lets the power method run against a
/// network or against a closed-form model.
using DivergenceGradient = std::function<Tensor(const Tensor& r)>;

struct PowerIterationResult {
  Tensor direction;  // unit rows
  int iterations = 0;
  std::size_t degenerate_rows = 0;
};

/// Runs `iterations` steps of d <- normalize(∇_r Δ_KL |_{r = xi d}) starting
/// from the unit rows of `start`. A row whose gradient norm falls below 1e-12
/// keeps its previous direction.
PowerIterationResult power_iterate(const DivergenceGradient& gradient, Tensor start, double xi,
                                   int iterations);

/// Virtual adversarial perturbation: random unit start, cfg.power_iterations
/// finite-difference power steps, scaled to cfg.epsilon per row.
Tensor gen_vap(const MlpNetwork& net, const Tensor& x, const DetachedDistribution& base,
               const VatConfig& cfg, Rng& rng);
Tensor gen_vap(const MlpNetwork& net, const Tensor& x, const VatConfig& cfg, Rng& rng);

/// Perturbation plus the approximated LDS at it.
VapResult virtual_adversarial(const MlpNetwork& net, const Tensor& x, const VatConfig& cfg,
                              Rng& rng);

/// −Δ_KL(r_vadv) per row.
Tensor lds_estimate(const MlpNetwork& net, const Tensor& x, const Tensor& r_vadv,
                    const DetachedDistribution& base);
Tensor lds_estimate(const MlpNetwork& net, const Tensor& x, const Tensor& r_vadv);

/// Mean over rows of KL[base ‖ p(y | x + r, θ)] and its θ-gradient, with the
/// base and r held constant. One forward and one backward pass.
ObjectiveTerm vat_backward(const MlpNetwork& net, const Tensor& x, const Tensor& r,
                           const DetachedDistribution& base);

/// λ times the penalty above at the virtual adversarial perturbation. With
/// λ = 0 nothing is propagated and a zero term is returned.
ObjectiveTerm vat_regularizer(const MlpNetwork& net, const Tensor& x, const VatConfig& cfg,
                              Rng& rng);

struct CostAudit {
  PropagationCounts likelihood;
  PropagationCounts regularizer;
};

/// Counts the passes of one VAT training step: the likelihood pass on
/// (x_labeled, labels) and the regularizer path on x_reg.
CostAudit vat_step_cost_audit(const MlpNetwork& net, const Tensor& x_labeled,
                              std::span<const int> labels, const Tensor& x_reg,
                              const VatConfig& cfg, Rng& rng);

}  // namespace vatlab
