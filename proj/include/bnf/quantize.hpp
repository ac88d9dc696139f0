#pragma once

#include "bnf/bitplane.hpp"
#include "bnf/tensor.hpp"

namespace bnf {

enum class WeightMode { Binary, FullPrecision };

// Per-layer quantization policy. The final classifier layer must stay at
// full precision; network builders enforce that.
struct QuantizerConfig {
  int activation_bits = 1;  // k >= 1
  WeightMode weight_mode = WeightMode::Binary;
  bool ste_clip = true;

  void validate() const;
};

// w_b = sign(w) * mean(|w|), with sign(0) := +1. An all-zero tensor yields
// scale 0 (dead filter) and a warning on stderr.
BinaryWeightTensor binarize_weights(const Tensor& latent);

// Elementwise clamp to [0, 1].
Tensor bounded_activation(const Tensor& x);
double bounded_activation_scalar(double x);

// Maps a in [0,1] onto the 2^k uniform levels: round(a*(2^k-1))/(2^k-1),
// rounding half away from zero. Inputs outside [0,1] are rejected; apply
// bounded_activation first.
Tensor quantize_k(const Tensor& a, int k);
double quantize_k_scalar(double a, int k);

enum class SteKind { WeightSign, ActivationQuant };

// Straight-through gradient rules. WeightSign passes the gradient through
// unchanged; ActivationQuant passes it where the forward input was inside
// [0,1] and zeroes it elsewhere.
Tensor ste_backward(const Tensor& upstream_grad, const Tensor& forward_input, SteKind kind);

}  // namespace bnf
