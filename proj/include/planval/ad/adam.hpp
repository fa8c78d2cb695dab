#pragma once

#include "planval/ad/params.hpp"

namespace planval::ad {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. Moment buffers mirror the store layout.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& store, AdamConfig config = {});

  /// One update. Raises NumericError naming the first entry with a non-finite gradient;
  /// the store is left untouched in that case.
  void step(ParamStore& store, const Gradients& grads);

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }
  void restore(long t, Gradients m, Gradients v);

 private:
  AdamConfig config_;
  Gradients m_, v_;
  long t_ = 0;
};

}  // namespace planval::ad
