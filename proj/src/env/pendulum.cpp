#include "planval/env/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace planval::env {

double wrap_angle(double angle) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(angle + std::numbers::pi, two_pi);
  if (w < 0) w += two_pi;
  w -= std::numbers::pi;
  return w == -std::numbers::pi ? std::numbers::pi : w;
}

PendulumStep pendulum_step(PendulumState s, double torque) {
  const double g = 10.0, m = 1.0, l = 1.0;
  const double u = std::clamp(torque, -kPendulumMaxTorque, kPendulumMaxTorque);
  const double th = wrap_angle(s.angle);
  const double reward = -(th * th + 0.1 * s.omega * s.omega + 0.001 * u * u);
  double omega = s.omega + kPendulumDt * (3.0 * g / (2.0 * l) * std::sin(s.angle) + 3.0 * u / (m * l * l));
  omega = std::clamp(omega, -kPendulumMaxSpeed, kPendulumMaxSpeed);
  return {{s.angle + kPendulumDt * omega, omega}, reward};
}

Pendulum::Pendulum() {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  spec_ = {3, 1, -1.0, 1.0, kPendulumHorizon,
           -(pi2 + 0.1 * kPendulumMaxSpeed * kPendulumMaxSpeed + 0.001 * kPendulumMaxTorque * kPendulumMaxTorque), 0.0};
}

Vector Pendulum::observation() const { return Vector{{std::cos(s_.angle), std::sin(s_.angle), s_.omega}}; }

void Pendulum::reset_state(Rng& rng) {
  s_.angle = std::numbers::pi * (2.0 * uniform01(rng) - 1.0);
  s_.omega = 2.0 * uniform01(rng) - 1.0;
}

std::pair<double, bool> Pendulum::advance(const Vector& action, Rng&) {
  const PendulumStep r = pendulum_step(s_, kPendulumMaxTorque * action(0));
  s_ = r.next;
  s_.angle = wrap_angle(s_.angle);
  return {r.reward, false};
}

void Pendulum::set_observation(const Vector& obs) {
  s_.angle = std::atan2(obs(1), obs(0));
  s_.omega = std::clamp(obs(2), -kPendulumMaxSpeed, kPendulumMaxSpeed);
}

}  // namespace planval::env
