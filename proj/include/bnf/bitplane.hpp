#pragma once

#include <cstdint>
#include <vector>

#include "bnf/tensor.hpp"

namespace bnf {

// Non-owning view of a packed {0,1} bit row. Bit i lives at
// words[i / 64] >> (i % 64). Bits past nbits in the last word are padding.
struct PackedSpan {
  const uint64_t* words = nullptr;
  size_t nbits = 0;

  size_t word_count() const { return (nbits + 63) / 64; }
};

// {0,1} tensor of shape H x W x C with the channel vector of each pixel
// packed into 64-bit words. Per-pixel rows are word aligned so a pixel's
// channels can be handed straight to the popcount kernels.
class PackedBitTensor {
 public:
  PackedBitTensor() = default;
  PackedBitTensor(uint32_t h, uint32_t w, uint32_t c);

  uint32_t height() const { return h_; }
  uint32_t width() const { return w_; }
  uint32_t channels() const { return c_; }
  uint32_t words_per_pixel() const { return wpp_; }

  bool get(uint32_t h, uint32_t w, uint32_t c) const;
  void set(uint32_t h, uint32_t w, uint32_t c, bool bit);

  PackedSpan pixel(uint32_t h, uint32_t w) const;
  const uint64_t* pixel_words(uint32_t h, uint32_t w) const;
  uint64_t* pixel_words(uint32_t h, uint32_t w);

  const std::vector<uint64_t>& words() const { return words_; }
  std::vector<uint64_t>& words() { return words_; }

  // Expands to a real tensor with values in {0.0, 1.0}.
  Tensor to_real() const;

 private:
  uint32_t h_ = 0, w_ = 0, c_ = 0;
  uint32_t wpp_ = 0;
  std::vector<uint64_t> words_;
};

// Bit-plane decomposition of a FixedTensor. The packed channel axis holds
// C*M bits per pixel, laid out channel-major: bit c*M + m is bit m (LSB
// first) of channel c.
class BitPlaneTensor {
 public:
  BitPlaneTensor() = default;
  BitPlaneTensor(const Shape& base_shape, int bit_width);

  const Shape& base_shape() const { return base_shape_; }
  int bit_width() const { return bit_width_; }
  uint32_t plane_count() const { return bits_.channels(); }

  const PackedBitTensor& bits() const { return bits_; }
  PackedBitTensor& bits() { return bits_; }

  bool plane_bit(uint32_t h, uint32_t w, uint32_t c, uint32_t m) const;
  void set_plane_bit(uint32_t h, uint32_t w, uint32_t c, uint32_t m, bool bit);

  // Extracts bit plane m across all channels as an H x W x C bit tensor.
  PackedBitTensor plane(uint32_t m) const;

 private:
  Shape base_shape_;  // H x W x C
  int bit_width_ = 0;
  PackedBitTensor bits_;  // channels = C * M
};

BitPlaneTensor decompose(const FixedTensor& t);
FixedTensor recompose(const BitPlaneTensor& b);

// Binary weights: packed sign bits (1 means +1) plus one per-tensor scale.
// The effective weight at flat index i is scale * (sign(i) ? +1 : -1).
class BinaryWeightTensor {
 public:
  BinaryWeightTensor() = default;
  BinaryWeightTensor(const Shape& shape, std::vector<uint64_t> sign_words, double scale);

  const Shape& shape() const { return shape_; }
  double scale() const { return scale_; }
  size_t size() const { return shape_.count(); }

  bool sign_bit(size_t i) const;
  void set_sign_bit(size_t i, bool positive);
  double effective(size_t i) const { return sign_bit(i) ? scale_ : -scale_; }

  PackedSpan bits() const;

 private:
  Shape shape_;
  std::vector<uint64_t> signs_;
  double scale_ = 0.0;
};

// Signed popcount core: 2*popcount(x & w_plus) - popcount(x) over nbits.
// Equals sum_i x_i * s_i with s_i in {-1,+1} for x_i in {0,1}. Padding
// bits are masked off, so garbage past nbits cannot leak into the result.
int64_t binary_dot_core(const uint64_t* x, const uint64_t* w_plus, size_t nbits);

// Full dot product against +/-scale weights; integer core, one multiply.
double binary_dot_01(PackedSpan x, PackedSpan w_plus, double scale);

}  // namespace bnf
