#include "bnf/quantize.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace bnf {

void QuantizerConfig::validate() const {
  if (activation_bits < 1) {
    throw std::invalid_argument("QuantizerConfig: activation_bits must be >= 1");
  }
}

BinaryWeightTensor binarize_weights(const Tensor& latent) {
  if (latent.size() == 0) throw std::invalid_argument("binarize_weights: empty tensor");
  double abs_sum = 0.0;
  for (size_t i = 0; i < latent.size(); ++i) {
    const double v = latent[i];
    if (!std::isfinite(v)) {
      throw std::invalid_argument("binarize_weights: non-finite latent weight");
    }
    abs_sum += std::fabs(v);
  }
  const double scale = abs_sum / static_cast<double>(latent.size());
  if (scale == 0.0) {
    std::cerr << "bnf: warning: all-zero latent weights, binarized scale is 0\n";
  }
  std::vector<uint64_t> signs((latent.size() + 63) / 64, 0);
  BinaryWeightTensor out(latent.shape(), std::move(signs), scale);
  for (size_t i = 0; i < latent.size(); ++i) {
    out.set_sign_bit(i, latent[i] >= 0.0);  // sign(0) := +1
  }
  return out;
}

double bounded_activation_scalar(double x) {
  if (x < 0.0) return 0.0;
  if (x > 1.0) return 1.0;
  return x;
}

Tensor bounded_activation(const Tensor& x) {
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out[i] = bounded_activation_scalar(out[i]);
  return out;
}

double quantize_k_scalar(double a, int k) {
  if (k < 1 || k > 16) throw std::invalid_argument("quantize_k: k must be 1..16");
  if (!(a >= 0.0 && a <= 1.0)) {
    throw std::invalid_argument("quantize_k: input outside [0,1]; apply bounded_activation first");
  }
  const double levels = static_cast<double>((1u << k) - 1);
  return std::round(a * levels) / levels;
}

Tensor quantize_k(const Tensor& a, int k) {
  Tensor out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] = quantize_k_scalar(out[i], k);
  return out;
}

Tensor ste_backward(const Tensor& upstream_grad, const Tensor& forward_input, SteKind kind) {
  if (!(upstream_grad.shape() == forward_input.shape())) {
    throw std::invalid_argument("ste_backward: shape mismatch");
  }
  if (kind == SteKind::WeightSign) return upstream_grad;
  Tensor out = upstream_grad;
  for (size_t i = 0; i < out.size(); ++i) {
    const double x = forward_input[i];
    if (!(x >= 0.0 && x <= 1.0)) out[i] = 0.0;
  }
  return out;
}

}  // namespace bnf
