#include "planval/env/linchain.hpp"

#include <algorithm>
#include <limits>

namespace planval::env {

LinchainStep linchain_step(double s, double a, double noise) {
  a = std::clamp(a, -1.0, 1.0);
  return {kLinchainA * s + kLinchainB * a + kLinchainNoise * noise, -s * s - 0.1 * a * a};
}

Linchain::Linchain() { spec_ = {1, 1, -1.0, 1.0, kLinchainHorizon, -std::numeric_limits<double>::infinity(), 0.0}; }

void Linchain::reset_state(Rng& rng) { s_ = 2.0 * uniform01(rng) - 1.0; }

std::pair<double, bool> Linchain::advance(const Vector& action, Rng& noise) {
  const double eps = std::normal_distribution<double>(0.0, 1.0)(noise);
  const LinchainStep r = linchain_step(s_, action(0), eps);
  s_ = r.next;
  return {r.reward, false};
}

void Linchain::set_observation(const Vector& obs) { s_ = obs(0); }

}  // namespace planval::env
