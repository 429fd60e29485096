#pragma once

#include <variant>

#include "vatlab/vat.hpp"

namespace vatlab {

enum class AdvNorm { linf, l2 };
/// Whether the adversarial likelihood is added to the clean one or replaces it.
enum class AdvMode { augment, replace };

namespace reg {

struct None {};
struct L2Decay {
  double lambda = 1e-3;
};
/// Input-layer dropout; keep_probability is the retention probability.
struct Dropout {
  double keep_probability = 0.5;
};
struct RandomPerturbation {
  double epsilon = 1.0;
  double lambda = 1.0;
};
struct Adversarial {
  double epsilon = 0.1;
  AdvNorm norm = AdvNorm::l2;
  AdvMode mode = AdvMode::augment;
  double lambda = 1.0;
};
struct Vat {
  VatConfig config;
};

}  // namespace reg

/// Exactly one regularizer per training run.
using RegularizerKind = std::variant<reg::None, reg::L2Decay, reg::Dropout,
                                     reg::RandomPerturbation, reg::Adversarial, reg::Vat>;

/// Short method name ("mle", "l2", "dropout", "random", "adv-linf", "adv-l2", "vat").
std::string regularizer_name(const RegularizerKind& kind);
/// The single hyperparameter each method is searched over (0 for mle).
double regularizer_parameter(const RegularizerKind& kind);
/// True for mle, random perturbation and vat: the methods whose penalty can
/// be evaluated on unlabeled inputs.
bool regularizer_is_label_free(const RegularizerKind& kind);
void validate_regularizer(const RegularizerKind& kind);

/// One-step linearized adversarial perturbation: g = ∇_x NLL per row, then
/// ε·sign(g) (linf) or ε·g/‖g‖₂ (l2). Rows with ‖g‖₂ < 1e-12 get zero.
Tensor adv_perturbation(const MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                        double epsilon, AdvNorm norm);

/// Each row an independent uniform direction of length epsilon.
Tensor random_perturbation(const Tensor& x, double epsilon, Rng& rng);

/// (λ/2)·Σ‖W‖² over weight matrices only, gradient λ·W.
ObjectiveTerm l2_penalty(const MlpNetwork& net, double lambda);

/// Mean NLL at x + r_adv with r_adv held constant; gradient through the
/// perturbed forward only.
ObjectiveTerm adv_loss_term(const MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                            const Tensor& r_adv);

}  // namespace vatlab
