#pragma once

#include "planval/env/env.hpp"

namespace planval::env {

struct LinchainStep {
  double next = 0.0;
  double reward = 0.0;
};

inline constexpr double kLinchainA = 0.9;
inline constexpr double kLinchainB = 0.5;
inline constexpr double kLinchainNoise = 0.05;
inline constexpr int kLinchainHorizon = 50;

/// s' = 0.9 s + 0.5 a + 0.05 noise, r = -s^2 - 0.1 a^2, with |a| <= 1 enforced by clamping.
LinchainStep linchain_step(double s, double a, double noise);

/// One-dimensional linear-Gaussian chain. Start states are uniform on [-1, 1].
class Linchain final : public Environment {
 public:
  Linchain();
  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "linchain"; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Linchain>(*this); }
  Vector observation() const override { return Vector::Constant(1, s_); }

 protected:
  void reset_state(Rng& rng) override;
  std::pair<double, bool> advance(const Vector& action, Rng& noise) override;
  void set_observation(const Vector& obs) override;

 private:
  EnvSpec spec_;
  double s_ = 0.0;
};

}  // namespace planval::env
