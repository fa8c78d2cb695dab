#include "planval/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace planval::ad {

std::pair<double, Gradients> value_and_gradients(const LossBuilder& loss, const ParamStore& params) {
  Tape tape;
  const Var out = loss(tape, params);
  if (out.value().size() != 1) throw ShapeError("finite_diff_check: loss must be 1x1");
  tape.backward(out);
  return {out.scalar(), tape.gradients(params)};
}

GradCheckReport finite_diff_check(const LossBuilder& loss, const ParamStore& params, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw PreconditionError("finite_diff_check: epsilon outside [1e-7, 1e-3]");
  const auto [value, grads] = value_and_gradients(loss, params);
  (void)value;
  auto eval = [&](const ParamStore& p) {
    Tape tape;
    return loss(tape, p).scalar();
  };
  GradCheckReport report;
  ParamStore probe = params;
  for (Index e = 0; e < params.size(); ++e) {
    const Matrix& base = params.value(e);
    for (Index j = 0; j < base.size(); ++j) {
      const double x = base.reshaped()(j);
      probe.mutable_value(e).reshaped()(j) = x + epsilon;
      const double up = eval(probe);
      probe.mutable_value(e).reshaped()(j) = x - epsilon;
      const double down = eval(probe);
      probe.mutable_value(e).reshaped()(j) = x;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = grads[static_cast<std::size_t>(e)].reshaped()(j);
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic));
      if (rel > report.max_relative_error || report.worst_coordinate < 0) {
        report.max_relative_error = rel;
        report.worst_entry = params.name(e);
        report.worst_coordinate = j;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace planval::ad
