#pragma once

#include <memory>

#include "vatlab/nn.hpp"

namespace vatlab {

/// rate(step) = initial · factor^⌊step / period⌋.
struct DecaySchedule {
  double initial = 0.002;
  double factor = 0.9;
  std::size_t period = 500;

  void validate() const;
};

double schedule_rate(const DecaySchedule& schedule, std::size_t step);

/// Momentum with the damped form Δθ_i = μ Δθ_{i−1} + (1 − μ) γ_i g_i.
struct MomentumSgdState {
  double mu = 0.9;
  DecaySchedule schedule{1.0, 0.995, 1};
  std::size_t step = 0;
  GradientBundle prev_update;  // empty until the first step
};

/// Returns Δθ for gradient g (the caller descends: θ ← θ − Δθ) and stores it
/// as the previous update.
GradientBundle momentum_step(MomentumSgdState& state, const GradientBundle& grad);

struct AdamState {
  DecaySchedule schedule{0.002, 0.9, 500};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  GradientBundle first_moment;
  GradientBundle second_moment;
};

/// Bias-corrected ADAM. Returns Δθ with θ ← θ − Δθ.
GradientBundle adam_step(AdamState& state, const GradientBundle& grad);

/// Owns optimizer state and applies descent updates to a network.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// θ ← θ − Δθ(grad).
  void descend(MlpNetwork& net, const GradientBundle& grad) { net.apply(delta(grad), -1.0); }
  virtual GradientBundle delta(const GradientBundle& grad) = 0;
  virtual double current_rate() const = 0;
};

class MomentumSgd final : public Optimizer {
 public:
  explicit MomentumSgd(MomentumSgdState state) : state_(std::move(state)) {}
  GradientBundle delta(const GradientBundle& grad) override { return momentum_step(state_, grad); }
  double current_rate() const override { return schedule_rate(state_.schedule, state_.step); }
  const MomentumSgdState& state() const { return state_; }

 private:
  MomentumSgdState state_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamState state) : state_(std::move(state)) {}
  GradientBundle delta(const GradientBundle& grad) override { return adam_step(state_, grad); }
  double current_rate() const override { return schedule_rate(state_.schedule, state_.step); }
  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
};

}  // namespace vatlab
