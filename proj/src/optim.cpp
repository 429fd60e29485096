#include "vatlab/optim.hpp"

#include <cmath>
#include <string>

namespace vatlab {
namespace {

GradientBundle zeros_like_params(const GradientBundle& g) {
  GradientBundle z;
  for (const auto& w : g.d_weights) z.d_weights.emplace_back(w.shape());
  for (const auto& b : g.d_biases) z.d_biases.emplace_back(b.shape());
  return z;
}

void require_matching(const GradientBundle& a, const GradientBundle& b, const char* who) {
  bool ok = a.d_weights.size() == b.d_weights.size() && a.d_biases.size() == b.d_biases.size();
  for (std::size_t i = 0; ok && i < a.d_weights.size(); ++i) {
    ok = a.d_weights[i].same_shape(b.d_weights[i]) && a.d_biases[i].same_shape(b.d_biases[i]);
  }
  if (!ok) throw DimensionError(std::string(who) + ": gradient shape differs from optimizer state");
}

template <typename F>
void for_each_param(GradientBundle& out, const GradientBundle& in, F&& f) {
  for (std::size_t l = 0; l < in.d_weights.size(); ++l) {
    for (std::size_t i = 0; i < in.d_weights[l].size(); ++i) f(out.d_weights[l][i], in.d_weights[l][i], l, i, true);
    for (std::size_t i = 0; i < in.d_biases[l].size(); ++i) f(out.d_biases[l][i], in.d_biases[l][i], l, i, false);
  }
}

}  // namespace

void DecaySchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("schedule: initial rate must be positive");
  if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("schedule: factor must lie in (0, 1]");
  if (period < 1) throw ConfigError("schedule: period must be >= 1");
}

double schedule_rate(const DecaySchedule& s, std::size_t step) {
  return s.initial * std::pow(s.factor, static_cast<double>(step / s.period));
}

GradientBundle momentum_step(MomentumSgdState& state, const GradientBundle& grad) {
  if (!(state.mu >= 0.0 && state.mu < 1.0)) throw ConfigError("momentum: mu must lie in [0, 1)");
  state.schedule.validate();
  if (state.prev_update.d_weights.empty()) state.prev_update = zeros_like_params(grad);
  require_matching(state.prev_update, grad, "momentum_step");
  const double gamma = schedule_rate(state.schedule, state.step);
  const double mu = state.mu;
  GradientBundle delta = zeros_like_params(grad);
  for (std::size_t l = 0; l < grad.d_weights.size(); ++l) {
    auto upd = [&](Tensor& out, const Tensor& prev, const Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) out[i] = mu * prev[i] + (1.0 - mu) * gamma * g[i];
    };
    upd(delta.d_weights[l], state.prev_update.d_weights[l], grad.d_weights[l]);
    upd(delta.d_biases[l], state.prev_update.d_biases[l], grad.d_biases[l]);
  }
  state.prev_update = delta;
  ++state.step;
  return delta;
}

GradientBundle adam_step(AdamState& state, const GradientBundle& grad) {
  state.schedule.validate();
  if (state.first_moment.d_weights.empty()) {
    state.first_moment = zeros_like_params(grad);
    state.second_moment = zeros_like_params(grad);
  }
  require_matching(state.first_moment, grad, "adam_step");
  const double rate = schedule_rate(state.schedule, state.step);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
  GradientBundle delta = zeros_like_params(grad);
  for_each_param(delta, grad, [&](double& out, double g, std::size_t l, std::size_t i, bool is_w) {
    double& m = is_w ? state.first_moment.d_weights[l][i] : state.first_moment.d_biases[l][i];
    double& v = is_w ? state.second_moment.d_weights[l][i] : state.second_moment.d_biases[l][i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    out = rate * (m / c1) / (std::sqrt(v / c2) + eps);
  });
  return delta;
}

}  // namespace vatlab
