#include "planval/ad/nn.hpp"

#include <cmath>
#include <numbers>

namespace planval::ad {

Mlp add_mlp(ParamStore& store, const std::string& prefix, MlpSpec spec, Rng& rng) {
  if (spec.sizes.size() < 2) throw PreconditionError("add_mlp: need at least input and output sizes");
  Mlp mlp{spec, prefix, store.size()};
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (Index l = 0; l < spec.n_layers(); ++l) {
    const Index in = spec.sizes[static_cast<std::size_t>(l)];
    const Index out = spec.sizes[static_cast<std::size_t>(l + 1)];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out), b(1, out);
    for (Index r = 0; r < in; ++r)
      for (Index c = 0; c < out; ++c) w(r, c) = bound * unif(rng);
    for (Index c = 0; c < out; ++c) b(0, c) = bound * unif(rng);
    store.add(prefix + ".w" + std::to_string(l), std::move(w));
    store.add(prefix + ".b" + std::to_string(l), std::move(b));
  }
  return mlp;
}

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::Identity:
      return x;
    case Activation::Tanh:
      return tanh(x);
    case Activation::Relu:
      return relu(x);
    case Activation::Silu:
      return silu(x);
  }
  return x;
}

Var mlp_forward(Tape& tape, const ParamStore& store, const Mlp& mlp, Var input, bool trainable) {
  if (input.cols() != mlp.spec.input_width())
    throw ShapeError("mlp_forward(" + mlp.prefix + "): input width " + std::to_string(input.cols()) + ", expected " +
                     std::to_string(mlp.spec.input_width()));
  if (!input.value().allFinite()) throw NumericError("mlp_forward(" + mlp.prefix + "): non-finite input");
  Var h = input;
  for (Index l = 0; l < mlp.spec.n_layers(); ++l) {
    h = add_row(matmul(h, tape.param(store, mlp.weight_index(l), trainable)),
                tape.param(store, mlp.bias_index(l), trainable));
    h = activate(h, l + 1 == mlp.spec.n_layers() ? mlp.spec.output : mlp.spec.hidden);
  }
  return h;
}

Var tanh_log_det(Var u) { return 2.0 * ((std::numbers::ln2 - u) - softplus(-2.0 * u)); }

GaussianSample gaussian_head(Var mean, Var raw_log_std, const Matrix& noise) {
  if (noise.rows() != mean.rows() || noise.cols() != mean.cols())
    throw ShapeError("gaussian_head: noise shape does not match the action shape");
  Tape& tape = *mean.tape;
  GaussianSample s;
  s.mean = mean;
  s.log_std = clamp(raw_log_std, kLogStdMin, kLogStdMax);
  s.noise = noise;
  const Var eps = tape.constant(noise);
  const Var u = mean + exp(s.log_std) * eps;
  s.value = clamp(tanh(u), -1.0 + kSquashMargin, 1.0 - kSquashMargin);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Var gauss = (-0.5 * square(eps) - s.log_std) - half_log_2pi;
  s.log_prob = row_sum(gauss - tanh_log_det(u));
  return s;
}

}  // namespace planval::ad
