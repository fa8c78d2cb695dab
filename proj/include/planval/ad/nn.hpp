#pragma once

#include "planval/ad/tape.hpp"

#include <string>
#include <vector>

namespace planval::ad {

enum class Activation { Identity, Tanh, Relu, Silu };

struct MlpSpec {
  std::vector<Index> sizes;  // input, hidden..., output
  Activation hidden = Activation::Silu;
  Activation output = Activation::Identity;

  Index input_width() const { return sizes.front(); }
  Index output_width() const { return sizes.back(); }
  Index n_layers() const { return static_cast<Index>(sizes.size()) - 1; }
};

/// Location of an MLP's weights inside a ParamStore: entries `<prefix>.w<i>` (in x out) and `<prefix>.b<i>` (1 x out).
struct Mlp {
  MlpSpec spec;
  std::string prefix;
  Index first = 0;

  Index weight_index(Index layer) const { return first + 2 * layer; }
  Index bias_index(Index layer) const { return first + 2 * layer + 1; }
};

/// Adds an MLP to `store`, weights and biases uniform on +-1/sqrt(fan_in).
Mlp add_mlp(ParamStore& store, const std::string& prefix, MlpSpec spec, Rng& rng);

Var activate(Var x, Activation act);

/// Batched forward pass; rows of `input` are samples.
Var mlp_forward(Tape& tape, const ParamStore& store, const Mlp& mlp, Var input, bool trainable = true);

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
/// Squashed values are kept this far inside (-1, 1).
inline constexpr double kSquashMargin = 1e-12;

struct GaussianSample {
  Var mean;
  Var log_std;   // clamped to [kLogStdMin, kLogStdMax]
  Matrix noise;
  Var value;     // tanh(mean + exp(log_std) * noise), n x d
  Var log_prob;  // n x 1, includes the tanh correction
};

/// Reparameterized tanh-Gaussian sample. `noise` must match the shape of `mean`.
GaussianSample gaussian_head(Var mean, Var raw_log_std, const Matrix& noise);

/// log(1 - tanh(u)^2) computed stably as 2 (log 2 - u - softplus(-2u)).
Var tanh_log_det(Var u);

}  // namespace planval::ad
