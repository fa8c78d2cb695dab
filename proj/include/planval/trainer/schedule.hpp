#pragma once

#include "planval/trainer/config.hpp"

#include <algorithm>
#include <cmath>

namespace planval::trainer {

/// min(max(x + (t - a) / (b - a) (y - x), x), y), truncated toward the lower integer.
inline Index rollout_schedule(double t, double x, double y, double a, double b) {
  if (!(a < b)) throw PreconditionError("rollout_schedule: needs a < b");
  const double f = std::min(std::max(x + (t - a) / (b - a) * (y - x), x), y);
  return static_cast<Index>(std::floor(f));
}

inline Index rollout_schedule(double t, const ScheduleConfig& s) { return rollout_schedule(t, s.x, s.y, s.a, s.b); }

}  // namespace planval::trainer
