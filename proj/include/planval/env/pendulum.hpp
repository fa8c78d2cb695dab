#pragma once

#include "planval/env/env.hpp"

namespace planval::env {

struct PendulumState {
  double angle = 0.0;  // 0 is upright
  double omega = 0.0;
};

struct PendulumStep {
  PendulumState next;
  double reward = 0.0;
};

inline constexpr double kPendulumDt = 0.05;
inline constexpr double kPendulumMaxSpeed = 8.0;
inline constexpr double kPendulumMaxTorque = 2.0;
inline constexpr int kPendulumHorizon = 200;

/// Wraps into (-pi, pi].
double wrap_angle(double angle);

/// One semi-implicit Euler step (g = 10, m = 1, l = 1). The torque is clamped to [-2, 2].
PendulumStep pendulum_step(PendulumState s, double torque);

/// Swing-up task. Observation (cos angle, sin angle, omega); the action in [-1, 1] scales to torque 2a.
class Pendulum final : public Environment {
 public:
  Pendulum();
  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pendulum"; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Pendulum>(*this); }
  Vector observation() const override;
  const PendulumState& physical_state() const { return s_; }

 protected:
  void reset_state(Rng& rng) override;
  std::pair<double, bool> advance(const Vector& action, Rng& noise) override;
  void set_observation(const Vector& obs) override;

 private:
  EnvSpec spec_;
  PendulumState s_;
};

}  // namespace planval::env
