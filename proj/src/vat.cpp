#include "vatlab/vat.hpp"

#include <cmath>
#include <string>

namespace vatlab {
namespace {

constexpr double kDegenerateNorm = 1e-12;

Tensor mean_rows_weight(std::size_t rows) {
  return Tensor({rows}, rows == 0 ? 0.0 : 1.0 / static_cast<double>(rows));
}

}  // namespace

void VatConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("vat: epsilon must be positive, got " + std::to_string(epsilon));
  }
  if (!(xi > 0.0) || !std::isfinite(xi)) {
    throw ConfigError("vat: xi must be positive, got " + std::to_string(xi));
  }
  if (power_iterations < 1) {
    throw ConfigError("vat: power_iterations must be >= 1, got " +
                      std::to_string(power_iterations));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("vat: lambda must be non-negative, got " + std::to_string(lambda));
  }
}

PowerIterationResult power_iterate(const DivergenceGradient& gradient, Tensor start, double xi,
                                   int iterations) {
  PowerIterationResult res{std::move(start), 0, 0};
  Tensor& d = res.direction;
  std::vector<bool> degenerate(d.rows(), false);
  for (int it = 0; it < iterations; ++it) {
    Tensor probe = d;
    probe *= xi;
    Tensor g = gradient(probe);
    if (!g.same_shape(d)) throw DimensionError("power_iterate: gradient shape differs from d");
    for (std::size_t r = 0; r < d.rows(); ++r) {
      auto gr = g.row(r);
      const double n = l2_norm(gr);
      if (n < kDegenerateNorm || !std::isfinite(n)) {
        degenerate[r] = true;
        continue;
      }
      auto dr = d.row(r);
      for (std::size_t c = 0; c < dr.size(); ++c) dr[c] = gr[c] / n;
    }
    ++res.iterations;
  }
  for (bool b : degenerate) res.degenerate_rows += b ? 1 : 0;
  return res;
}

Tensor gen_vap(const MlpNetwork& net, const Tensor& x, const DetachedDistribution& base,
               const VatConfig& cfg, Rng& rng) {
  cfg.validate();
  require_finite(x, "gen_vap");
  Tensor d(x.shape());
  fill_unit_rows(rng, d);
  auto grad = [&](const Tensor& r) { return grad_r_delta_kl(net, x, r, base); };
  Tensor dir = power_iterate(grad, std::move(d), cfg.xi, cfg.power_iterations).direction;
  dir *= cfg.epsilon;
  return dir;
}

Tensor gen_vap(const MlpNetwork& net, const Tensor& x, const VatConfig& cfg, Rng& rng) {
  return gen_vap(net, x, base_distribution(net, x), cfg, rng);
}

VapResult virtual_adversarial(const MlpNetwork& net, const Tensor& x, const VatConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  require_finite(x, "virtual_adversarial");
  const DetachedDistribution base = base_distribution(net, x);
  Tensor d(x.shape());
  fill_unit_rows(rng, d);
  auto grad = [&](const Tensor& r) { return grad_r_delta_kl(net, x, r, base); };
  PowerIterationResult pi = power_iterate(grad, std::move(d), cfg.xi, cfg.power_iterations);
  VapResult out;
  out.r_vadv = std::move(pi.direction);
  out.r_vadv *= cfg.epsilon;
  out.iterations_used = pi.iterations;
  out.degenerate_rows = pi.degenerate_rows;
  out.lds_estimate = lds_estimate(net, x, out.r_vadv, base);
  return out;
}

Tensor lds_estimate(const MlpNetwork& net, const Tensor& x, const Tensor& r_vadv,
                    const DetachedDistribution& base) {
  Tensor lds = delta_kl(net, x, r_vadv, base);
  lds *= -1.0;
  return lds;
}

Tensor lds_estimate(const MlpNetwork& net, const Tensor& x, const Tensor& r_vadv) {
  return lds_estimate(net, x, r_vadv, base_distribution(net, x));
}

ObjectiveTerm vat_backward(const MlpNetwork& net, const Tensor& x, const Tensor& r,
                           const DetachedDistribution& base) {
  if (!x.same_shape(r)) throw DimensionError("vat_backward: perturbation shape differs");
  const ForwardCache cache = forward(net, x + r);
  const Tensor kl = kl_categorical(base, log_softmax(cache.logits));
  const Tensor w = mean_rows_weight(x.rows());
  ObjectiveTerm term;
  for (std::size_t i = 0; i < kl.size(); ++i) term.value += w[i] * kl[i];
  Tensor d_logits = kl_logit_gradient(base, cache.logits);
  for (std::size_t i = 0; i < d_logits.rows(); ++i)
    for (double& v : d_logits.row(i)) v *= w[i];
  term.gradient = backward(net, cache, d_logits, BackwardTargets::parameters);
  return term;
}

ObjectiveTerm vat_regularizer(const MlpNetwork& net, const Tensor& x, const VatConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  if (cfg.lambda == 0.0) return ObjectiveTerm{0.0, net.zero_gradients()};
  const DetachedDistribution base = base_distribution(net, x);
  const Tensor r = gen_vap(net, x, base, cfg, rng);
  ObjectiveTerm term = vat_backward(net, x, r, base);
  term.value *= cfg.lambda;
  term.gradient.scale(cfg.lambda);
  return term;
}

CostAudit vat_step_cost_audit(const MlpNetwork& net, const Tensor& x_labeled,
                              std::span<const int> labels, const Tensor& x_reg,
                              const VatConfig& cfg, Rng& rng) {
  PropagationCounts& counts = propagation_counts();
  const PropagationCounts saved = counts;
  CostAudit audit;

  counts = {};
  const ForwardCache cache = forward(net, x_labeled);
  const LossAndGradient nll = nll_loss(cache.logits, labels);
  backward(net, cache, nll.d_logits, BackwardTargets::parameters);
  audit.likelihood = counts;

  counts = {};
  vat_regularizer(net, x_reg, cfg, rng);
  audit.regularizer = counts;

  counts = saved;
  return audit;
}

}  // namespace vatlab
