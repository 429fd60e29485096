#include "vatlab/baseline.hpp"

#include <cmath>

namespace vatlab {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
  }
}

void require_non_negative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be non-negative, got " + std::to_string(v));
  }
}

}  // namespace

std::string regularizer_name(const RegularizerKind& kind) {
  return std::visit(overloaded{
                        [](const reg::None&) { return std::string("mle"); },
                        [](const reg::L2Decay&) { return std::string("l2"); },
                        [](const reg::Dropout&) { return std::string("dropout"); },
                        [](const reg::RandomPerturbation&) { return std::string("random"); },
                        [](const reg::Adversarial& a) {
                          return std::string(a.norm == AdvNorm::linf ? "adv-linf" : "adv-l2");
                        },
                        [](const reg::Vat&) { return std::string("vat"); },
                    },
                    kind);
}

double regularizer_parameter(const RegularizerKind& kind) {
  return std::visit(overloaded{
                        [](const reg::None&) { return 0.0; },
                        [](const reg::L2Decay& r) { return r.lambda; },
                        [](const reg::Dropout& r) { return r.keep_probability; },
                        [](const reg::RandomPerturbation& r) { return r.epsilon; },
                        [](const reg::Adversarial& r) { return r.epsilon; },
                        [](const reg::Vat& r) { return r.config.epsilon; },
                    },
                    kind);
}

bool regularizer_is_label_free(const RegularizerKind& kind) {
  return std::holds_alternative<reg::None>(kind) ||
         std::holds_alternative<reg::RandomPerturbation>(kind) ||
         std::holds_alternative<reg::Vat>(kind);
}

void validate_regularizer(const RegularizerKind& kind) {
  std::visit(overloaded{
                 [](const reg::None&) {},
                 [](const reg::L2Decay& r) { require_non_negative(r.lambda, "l2 lambda"); },
                 [](const reg::Dropout& r) {
                   if (!(r.keep_probability > 0.0 && r.keep_probability <= 1.0)) {
                     throw ConfigError("dropout keep probability must lie in (0, 1]");
                   }
                 },
                 [](const reg::RandomPerturbation& r) {
                   require_positive(r.epsilon, "random-perturbation epsilon");
                   require_non_negative(r.lambda, "random-perturbation lambda");
                 },
                 [](const reg::Adversarial& r) {
                   require_positive(r.epsilon, "adversarial epsilon");
                   require_non_negative(r.lambda, "adversarial lambda");
                 },
                 [](const reg::Vat& r) { r.config.validate(); },
             },
             kind);
}

Tensor adv_perturbation(const MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                        double epsilon, AdvNorm norm) {
  require_positive(epsilon, "adversarial epsilon");
  const ForwardCache cache = forward(net, x);
  const LossAndGradient nll = nll_loss(cache.logits, labels);
  Tensor g = backward(net, cache, nll.d_logits, BackwardTargets::input).d_input;
  // Undo the batch mean so each row holds its own example's gradient.
  g *= static_cast<double>(x.rows());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    auto row = g.row(r);
    const double n = l2_norm(row);
    if (n < 1e-12) {
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    for (double& v : row) {
      if (norm == AdvNorm::l2) {
        v = epsilon * v / n;
      } else {
        v = v > 0.0 ? epsilon : (v < 0.0 ? -epsilon : 0.0);
      }
    }
  }
  return g;
}

Tensor random_perturbation(const Tensor& x, double epsilon, Rng& rng) {
  require_positive(epsilon, "random-perturbation epsilon");
  Tensor r(x.shape());
  fill_unit_rows(rng, r);
  r *= epsilon;
  return r;
}

ObjectiveTerm l2_penalty(const MlpNetwork& net, double lambda) {
  require_non_negative(lambda, "l2 lambda");
  ObjectiveTerm term{0.0, net.zero_gradients()};
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const Tensor& w = net.layer(i).weights;
    term.value += 0.5 * lambda * dot(w.values(), w.values());
    term.gradient.d_weights[i].axpy(lambda, w);
  }
  return term;
}

ObjectiveTerm adv_loss_term(const MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                            const Tensor& r_adv) {
  if (!x.same_shape(r_adv)) throw DimensionError("adv_loss_term: perturbation shape differs");
  const ForwardCache cache = forward(net, x + r_adv);
  const LossAndGradient nll = nll_loss(cache.logits, labels);
  return ObjectiveTerm{nll.value,
                       backward(net, cache, nll.d_logits, BackwardTargets::parameters)};
}

}  // namespace vatlab
