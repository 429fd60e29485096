#pragma once

#include "vatlab/nn.hpp"

namespace vatlab {

/// Detached snapshot of p(y|x,θ), the constant first argument of every KL.
/// Both forms come from one log-softmax, so KL against the same logits is
/// exactly zero.
struct DetachedDistribution {
  Tensor prob;
  Tensor log_prob;

  static DetachedDistribution from_logits(const Tensor& logits);
  std::size_t rows() const { return prob.rows(); }
};

/// Per-row KL[p ‖ q] = Σ_c p_c (log p_c − log q_c), with 0·log 0 = 0 and the
/// probability floor applied inside log p. Throws DataError if a row of p
/// does not sum to one within 1e-6.
Tensor kl_categorical(const Tensor& p, const Tensor& log_q);

/// Same divergence with log p supplied directly (no floor needed).
Tensor kl_categorical(const DetachedDistribution& p, const Tensor& log_q);

/// Gradient of Σ_rows KL[base ‖ softmax(logits)] with respect to the logits:
/// softmax(logits) − base, row by row.
Tensor kl_logit_gradient(const DetachedDistribution& base, const Tensor& logits);

DetachedDistribution base_distribution(const MlpNetwork& net, const Tensor& x);

/// Δ_KL(r) per row: KL[base ‖ p(y | x + r, θ)].
Tensor delta_kl(const MlpNetwork& net, const Tensor& x, const Tensor& r, const DetachedDistribution& base);

/// ∇_r of Δ_KL per row (each row's gradient of its own divergence), from one
/// forward and one input-only backward pass at x + r. The base is constant.
Tensor grad_r_delta_kl(const MlpNetwork& net, const Tensor& x, const Tensor& r,
                       const DetachedDistribution& base);

}  // namespace vatlab
