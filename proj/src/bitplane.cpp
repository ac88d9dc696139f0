#include "bnf/bitplane.hpp"

#include <bit>
#include <stdexcept>

namespace bnf {

namespace {
inline uint64_t tail_mask(size_t nbits) {
  const size_t rem = nbits % 64;
  return rem == 0 ? ~uint64_t{0} : ((uint64_t{1} << rem) - 1);
}
}  // namespace

PackedBitTensor::PackedBitTensor(uint32_t h, uint32_t w, uint32_t c)
    : h_(h), w_(w), c_(c), wpp_((c + 63) / 64) {
  if (h == 0 || w == 0 || c == 0) {
    throw std::invalid_argument("PackedBitTensor: dims must be >= 1");
  }
  words_.assign(static_cast<size_t>(h) * w * wpp_, 0);
}

bool PackedBitTensor::get(uint32_t h, uint32_t w, uint32_t c) const {
  const uint64_t* row = pixel_words(h, w);
  return (row[c / 64] >> (c % 64)) & 1u;
}

void PackedBitTensor::set(uint32_t h, uint32_t w, uint32_t c, bool bit) {
  uint64_t* row = pixel_words(h, w);
  const uint64_t mask = uint64_t{1} << (c % 64);
  if (bit) {
    row[c / 64] |= mask;
  } else {
    row[c / 64] &= ~mask;
  }
}

PackedSpan PackedBitTensor::pixel(uint32_t h, uint32_t w) const {
  return PackedSpan{pixel_words(h, w), c_};
}

const uint64_t* PackedBitTensor::pixel_words(uint32_t h, uint32_t w) const {
  return words_.data() + (static_cast<size_t>(h) * w_ + w) * wpp_;
}

uint64_t* PackedBitTensor::pixel_words(uint32_t h, uint32_t w) {
  return words_.data() + (static_cast<size_t>(h) * w_ + w) * wpp_;
}

Tensor PackedBitTensor::to_real() const {
  Tensor out(Shape{h_, w_, c_});
  for (uint32_t h = 0; h < h_; ++h) {
    for (uint32_t w = 0; w < w_; ++w) {
      for (uint32_t c = 0; c < c_; ++c) {
        out.at3(h, w, c) = get(h, w, c) ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

BitPlaneTensor::BitPlaneTensor(const Shape& base_shape, int bit_width)
    : base_shape_(base_shape), bit_width_(bit_width) {
  if (base_shape.rank() != 3) {
    throw std::invalid_argument("BitPlaneTensor: base shape must be H x W x C");
  }
  if (bit_width < 1 || bit_width > 16) {
    throw std::invalid_argument("BitPlaneTensor: bit width must be 1..16");
  }
  bits_ = PackedBitTensor(base_shape[0], base_shape[1],
                          base_shape[2] * static_cast<uint32_t>(bit_width));
}

bool BitPlaneTensor::plane_bit(uint32_t h, uint32_t w, uint32_t c, uint32_t m) const {
  return bits_.get(h, w, c * bit_width_ + m);
}

void BitPlaneTensor::set_plane_bit(uint32_t h, uint32_t w, uint32_t c, uint32_t m, bool bit) {
  bits_.set(h, w, c * bit_width_ + m, bit);
}

PackedBitTensor BitPlaneTensor::plane(uint32_t m) const {
  if (m >= static_cast<uint32_t>(bit_width_)) {
    throw std::out_of_range("BitPlaneTensor: plane index out of range");
  }
  const uint32_t c = base_shape_[2];
  PackedBitTensor out(base_shape_[0], base_shape_[1], c);
  for (uint32_t h = 0; h < base_shape_[0]; ++h) {
    for (uint32_t w = 0; w < base_shape_[1]; ++w) {
      for (uint32_t ch = 0; ch < c; ++ch) {
        out.set(h, w, ch, plane_bit(h, w, ch, m));
      }
    }
  }
  return out;
}

BitPlaneTensor decompose(const FixedTensor& t) {
  BitPlaneTensor out(t.shape(), t.bit_width());
  const uint32_t hh = t.shape()[0], ww = t.shape()[1], cc = t.shape()[2];
  const int m_bits = t.bit_width();
  for (uint32_t h = 0; h < hh; ++h) {
    for (uint32_t w = 0; w < ww; ++w) {
      for (uint32_t c = 0; c < cc; ++c) {
        const uint16_t v = t.at3(h, w, c);
        for (int m = 0; m < m_bits; ++m) {
          if ((v >> m) & 1u) out.set_plane_bit(h, w, c, m, true);
        }
      }
    }
  }
  return out;
}

FixedTensor recompose(const BitPlaneTensor& b) {
  FixedTensor out(b.base_shape(), b.bit_width());
  const uint32_t hh = b.base_shape()[0], ww = b.base_shape()[1], cc = b.base_shape()[2];
  const int m_bits = b.bit_width();
  for (uint32_t h = 0; h < hh; ++h) {
    for (uint32_t w = 0; w < ww; ++w) {
      for (uint32_t c = 0; c < cc; ++c) {
        uint16_t v = 0;
        for (int m = 0; m < m_bits; ++m) {
          if (b.plane_bit(h, w, c, m)) v = static_cast<uint16_t>(v | (1u << m));
        }
        out.set3(h, w, c, v);
      }
    }
  }
  return out;
}

BinaryWeightTensor::BinaryWeightTensor(const Shape& shape, std::vector<uint64_t> sign_words,
                                       double scale)
    : shape_(shape), signs_(std::move(sign_words)), scale_(scale) {
  if (scale < 0.0) throw std::invalid_argument("BinaryWeightTensor: scale must be >= 0");
  const size_t need = (shape.count() + 63) / 64;
  if (signs_.size() != need) {
    throw std::invalid_argument("BinaryWeightTensor: sign word count mismatch");
  }
}

bool BinaryWeightTensor::sign_bit(size_t i) const {
  return (signs_[i / 64] >> (i % 64)) & 1u;
}

void BinaryWeightTensor::set_sign_bit(size_t i, bool positive) {
  const uint64_t mask = uint64_t{1} << (i % 64);
  if (positive) {
    signs_[i / 64] |= mask;
  } else {
    signs_[i / 64] &= ~mask;
  }
}

PackedSpan BinaryWeightTensor::bits() const {
  return PackedSpan{signs_.data(), shape_.count()};
}

int64_t binary_dot_core(const uint64_t* x, const uint64_t* w_plus, size_t nbits) {
  const size_t nwords = (nbits + 63) / 64;
  int64_t on = 0, total = 0;
  for (size_t k = 0; k < nwords; ++k) {
    uint64_t xw = x[k];
    if (k + 1 == nwords) xw &= tail_mask(nbits);
    on += std::popcount(xw & w_plus[k]);
    total += std::popcount(xw);
  }
  return 2 * on - total;
}

double binary_dot_01(PackedSpan x, PackedSpan w_plus, double scale) {
  if (x.nbits != w_plus.nbits) {
    throw std::invalid_argument("binary_dot_01: length mismatch (" +
                                std::to_string(x.nbits) + " vs " +
                                std::to_string(w_plus.nbits) + ")");
  }
  return scale * static_cast<double>(binary_dot_core(x.words, w_plus.words, x.nbits));
}

}  // namespace bnf
