#pragma once

#include "planval/env/env.hpp"
#include "planval/model/model.hpp"

namespace planval::testing {

/// Transitions from uniform random actions, resetting at episode ends.
inline model::TransitionBatch collect_uniform(env::Environment& env, Index n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 1), noise = derive_rng(seed, 2);
  const Index d = env.spec().obs_dim, m = env.spec().act_dim;
  model::TransitionBatch b;
  b.s.resize(n, d);
  b.a.resize(n, m);
  b.r.resize(n);
  b.s_next.resize(n, d);
  b.done.assign(static_cast<std::size_t>(n), false);
  env.reset(rng);
  for (Index i = 0; i < n; ++i) {
    if (env.done()) env.reset(rng);
    b.s.row(i) = env.observation().transpose();
    Vector a(m);
    for (Index j = 0; j < m; ++j) a(j) = 2.0 * uniform01(rng) - 1.0;
    const auto r = env.step(a, noise);
    b.a.row(i) = a.transpose();
    b.r(i) = r.reward;
    b.s_next.row(i) = r.observation.transpose();
    b.done[static_cast<std::size_t>(i)] = r.terminal;
  }
  return b;
}

}  // namespace planval::testing
