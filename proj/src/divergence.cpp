#include "vatlab/divergence.hpp"

#include <cmath>
#include <string>

namespace vatlab {
namespace {

void check_pair(const Tensor& p, const Tensor& log_q) {
  if (!p.same_shape(log_q) || p.rank() != 2) {
    throw DimensionError("kl_categorical: " + shape_string(p.shape()) + " vs " +
                         shape_string(log_q.shape()));
  }
}

void check_row_sum(double sum, std::size_t r) {
  if (std::abs(sum - 1.0) > 1e-6) {
    throw DataError("kl_categorical: row " + std::to_string(r) + " of p sums to " +
                    std::to_string(sum));
  }
}

}  // namespace

DetachedDistribution DetachedDistribution::from_logits(const Tensor& logits) {
  DetachedDistribution d;
  d.log_prob = log_softmax(logits);
  d.prob = d.log_prob;
  for (double& v : d.prob.values()) v = std::exp(v);
  return d;
}

Tensor kl_categorical(const Tensor& p, const Tensor& log_q) {
  check_pair(p, log_q);
  Tensor out({p.rows()});
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto pr = p.row(r);
    auto lq = log_q.row(r);
    double sum = 0.0;
    double kl = 0.0;
    for (std::size_t c = 0; c < pr.size(); ++c) {
      const double pc = pr[c];
      sum += pc;
      if (pc <= 0.0) continue;
      kl += pc * (std::log(std::max(pc, kProbabilityFloor)) - lq[c]);
    }
    check_row_sum(sum, r);
    // Rounding can leave a tiny negative value when p == q.
    out[r] = std::max(kl, 0.0);
  }
  return out;
}

Tensor kl_categorical(const DetachedDistribution& p, const Tensor& log_q) {
  check_pair(p.prob, log_q);
  Tensor out({p.rows()});
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto pr = p.prob.row(r);
    auto lp = p.log_prob.row(r);
    auto lq = log_q.row(r);
    double sum = 0.0;
    double kl = 0.0;
    for (std::size_t c = 0; c < pr.size(); ++c) {
      sum += pr[c];
      if (pr[c] > 0.0) kl += pr[c] * (lp[c] - lq[c]);
    }
    check_row_sum(sum, r);
    out[r] = std::max(kl, 0.0);
  }
  return out;
}

Tensor kl_logit_gradient(const DetachedDistribution& base, const Tensor& logits) {
  Tensor g = softmax(logits);
  g -= base.prob;
  return g;
}

DetachedDistribution base_distribution(const MlpNetwork& net, const Tensor& x) {
  return DetachedDistribution::from_logits(predict_logits(net, x));
}

Tensor delta_kl(const MlpNetwork& net, const Tensor& x, const Tensor& r,
                const DetachedDistribution& base) {
  if (!x.same_shape(r)) throw DimensionError("delta_kl: perturbation shape differs from input");
  return kl_categorical(base, log_softmax(predict_logits(net, x + r)));
}

Tensor grad_r_delta_kl(const MlpNetwork& net, const Tensor& x, const Tensor& r,
                       const DetachedDistribution& base) {
  if (!x.same_shape(r)) throw DimensionError("grad_r_delta_kl: perturbation shape differs");
  const ForwardCache cache = forward(net, x + r);
  const Tensor d_logits = kl_logit_gradient(base, cache.logits);
  return backward(net, cache, d_logits, BackwardTargets::input).d_input;
}

}  // namespace vatlab
