#pragma once

#include "planval/ad/tape.hpp"

#include <functional>
#include <string>

namespace planval::ad {

/// Builds a scalar loss on `tape`, binding `params` as trainable and anything else it needs as frozen.
using LossBuilder = std::function<Var(Tape& tape, const ParamStore& params)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  Index worst_coordinate = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences on every coordinate of `params` against the tape gradient.
/// Relative error uses the denominator max(1e-8, |analytic|). Requires epsilon in [1e-7, 1e-3].
GradCheckReport finite_diff_check(const LossBuilder& loss, const ParamStore& params, double epsilon = 1e-5);

/// Loss value and tape gradient for `params`.
std::pair<double, Gradients> value_and_gradients(const LossBuilder& loss, const ParamStore& params);

}  // namespace planval::ad
