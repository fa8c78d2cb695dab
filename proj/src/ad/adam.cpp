#include "planval/ad/adam.hpp"

#include <cmath>

namespace planval::ad {

Adam::Adam(const ParamStore& store, AdamConfig config)
    : config_(config), m_(zero_gradients(store)), v_(zero_gradients(store)) {}

void Adam::step(ParamStore& store, const Gradients& grads) {
  if (grads.size() != m_.size() || static_cast<Index>(grads.size()) != store.size())
    throw ShapeError("Adam::step: gradients not aligned with the parameter store");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != m_[i].rows() || g.cols() != m_[i].cols())
      throw ShapeError("Adam::step: gradient shape mismatch for '" + store.name(static_cast<Index>(i)) + "'");
    if (!g.allFinite())
      throw NumericError("Adam::step: non-finite gradient for '" + store.name(static_cast<Index>(i)) + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseAbs2();
    auto p = store.mutable_value(static_cast<Index>(i));
    p.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
  for (Index i = 0; i < store.size(); ++i)
    if (!store.value(i).allFinite()) throw NumericError("Adam::step: non-finite parameter '" + store.name(i) + "'");
  store.advance_step();
}

void Adam::restore(long t, Gradients m, Gradients v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeError("Adam::restore: layout mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace planval::ad
