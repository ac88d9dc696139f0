#pragma once

#include <cstdint>
#include <vector>

#include "bnf/bitplane.hpp"
#include "bnf/quantize.hpp"
#include "bnf/tensor.hpp"

namespace bnf {

// Convolution geometry: stride 1, same padding (zeros), output spatial dims
// equal input dims. Weight tensors are (kh, kw, in_channels, filters).
struct ConvSpec {
  int kh = 1;
  int kw = 1;
  int in_channels = 0;
  int filters = 0;

  Shape weight_shape() const;
  void validate() const;
};

// Naive direct convolution, the float oracle for every binary path.
// Every tap is executed (padding taps multiply by zero), so when
// mult_counter is given it advances by exactly H*W*C*kh*kw*I.
Tensor conv2d_reference(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                        uint64_t* mult_counter = nullptr);

// Packed {0,1} x {-a,+a} convolution. Integer popcount core per tap, one
// scale multiply per output value.
Tensor conv2d_binary(const PackedBitTensor& input, const BinaryWeightTensor& weights,
                     const ConvSpec& spec);

// Convenience wrapper: validates that the real tensor holds only exact
// 0.0 / 1.0 values, packs it, and runs the packed kernel.
Tensor conv2d_binary(const Tensor& input01, const BinaryWeightTensor& weights,
                     const ConvSpec& spec);

PackedBitTensor pack_binary_tensor(const Tensor& input01);

// First layer on M-bit fixed-point inputs with one shared binary weight per
// tap: per-plane popcount convolutions recombined with 2^m shifts. The
// integer core makes the output bit-identical to a plain +/-scale
// convolution of the raw integer values.
Tensor fpid_first_layer(const FixedTensor& input, const BinaryWeightTensor& weights,
                        const ConvSpec& spec);

// First layer on bit planes with an independent binary weight per input bit:
// a binary convolution over the C*M plane channels.
Tensor dbi_first_layer(const BitPlaneTensor& input, const BinaryWeightTensor& weights,
                       const ConvSpec& spec);

// Batch norm inference state (one entry per channel).
struct BatchNormState {
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;

  static BatchNormState identity(int channels);
  void validate(int channels) const;
};

// Per-channel normalize-scale-shift with fixed statistics.
Tensor batch_norm_forward(const Tensor& x, const BatchNormState& state);

// 1x1 binary input layer: conv -> batch norm -> bounded activation ->
// quantize_k, emitting a packed {0,1} tensor of shape H x W x K.
struct BilSpec {
  int filters = 0;  // K

  void validate() const;
};

PackedBitTensor bil_first_layer(const BitPlaneTensor& input, const BilSpec& bil,
                                const BinaryWeightTensor& weights, const BatchNormState& bn,
                                const QuantizerConfig& qcfg);

// Max pooling with stride equal to the window; trailing remainder rows and
// columns are dropped. A window larger than the input is rejected.
Tensor max_pool(const Tensor& x, int pool_h, int pool_w);

// y = W^T x + b over the flattened input; weights are (in, out).
Tensor fully_connected(const Tensor& x, const Tensor& weights, const std::vector<double>& bias);

std::vector<double> softmax(const std::vector<double>& logits);

// Mean negative log-likelihood for one sample; optionally writes dL/dlogits.
double softmax_cross_entropy(const std::vector<double>& logits, int label,
                             std::vector<double>* dlogits = nullptr);

// Inverted dropout: keeps each value with probability 1-rate and rescales
// by 1/(1-rate). Deterministic given the seed.
Tensor dropout(const Tensor& x, double rate, uint64_t seed);

}  // namespace bnf
