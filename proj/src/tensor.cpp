#include "bnf/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bnf {

Shape::Shape(std::initializer_list<uint32_t> dims) {
  if (dims.size() < 1 || dims.size() > 4) {
    throw std::invalid_argument("Shape: rank must be 1..4, got " + std::to_string(dims.size()));
  }
  rank_ = dims.size();
  size_t i = 0;
  for (uint32_t d : dims) d_[i++] = d;
  validate();
}

Shape::Shape(const std::vector<uint32_t>& dims) {
  if (dims.size() < 1 || dims.size() > 4) {
    throw std::invalid_argument("Shape: rank must be 1..4, got " + std::to_string(dims.size()));
  }
  rank_ = dims.size();
  for (size_t i = 0; i < dims.size(); ++i) d_[i] = dims[i];
  validate();
}

void Shape::validate() const {
  unsigned __int128 n = 1;
  for (size_t i = 0; i < rank_; ++i) {
    if (d_[i] < 1) throw std::invalid_argument("Shape: dims must be >= 1");
    n *= d_[i];
  }
  if (n > static_cast<unsigned __int128>(UINT64_MAX)) {
    throw std::invalid_argument("Shape: element count overflows 64 bits");
  }
}

uint32_t Shape::operator[](size_t i) const {
  if (i >= rank_) throw std::out_of_range("Shape: dim index " + std::to_string(i));
  return d_[i];
}

uint64_t Shape::count() const {
  uint64_t n = 1;
  for (size_t i = 0; i < rank_; ++i) n *= d_[i];
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  for (size_t i = 0; i < rank_; ++i) {
    if (i) os << "x";
    os << d_[i];
  }
  return os.str();
}

bool Shape::operator==(const Shape& o) const {
  if (rank_ != o.rank_) return false;
  for (size_t i = 0; i < rank_; ++i) {
    if (d_[i] != o.d_[i]) return false;
  }
  return true;
}

Tensor::Tensor(const Shape& shape, double fill)
    : shape_(shape), v_(shape.count(), fill) {}

double Tensor::at3(uint32_t h, uint32_t w, uint32_t c) const {
  return v_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
}

double& Tensor::at3(uint32_t h, uint32_t w, uint32_t c) {
  return v_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
}

double Tensor::at4(uint32_t a, uint32_t b, uint32_t c, uint32_t d) const {
  return v_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
}

double& Tensor::at4(uint32_t a, uint32_t b, uint32_t c, uint32_t d) {
  return v_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
}

FixedTensor::FixedTensor(const Shape& shape, int bit_width)
    : shape_(shape), bit_width_(bit_width), v_(shape.count(), 0) {
  if (bit_width < 1 || bit_width > 16) {
    throw std::invalid_argument("FixedTensor: bit width must be 1..16, got " +
                                std::to_string(bit_width));
  }
}

void FixedTensor::set(size_t i, uint16_t value) {
  if (value > max_value()) {
    throw std::invalid_argument("FixedTensor: value " + std::to_string(value) +
                                " exceeds " + std::to_string(bit_width_) + " bits");
  }
  v_[i] = value;
}

uint16_t FixedTensor::at3(uint32_t h, uint32_t w, uint32_t c) const {
  return v_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
}

void FixedTensor::set3(uint32_t h, uint32_t w, uint32_t c, uint16_t value) {
  set((static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c, value);
}

bool FixedTensor::operator==(const FixedTensor& o) const {
  return shape_ == o.shape_ && bit_width_ == o.bit_width_ && v_ == o.v_;
}

FixedTensor to_fixed_point(const Tensor& raw, double lo, double hi, int bit_width) {
  if (!(hi > lo)) throw std::invalid_argument("to_fixed_point: requires hi > lo");
  if (bit_width < 1 || bit_width > 16) {
    throw std::invalid_argument("to_fixed_point: bit width must be 1..16");
  }
  FixedTensor out(raw.shape(), bit_width);
  const double top = static_cast<double>((1u << bit_width) - 1);
  const double scale = top / (hi - lo);
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (!std::isfinite(v)) {
      throw std::invalid_argument("to_fixed_point: non-finite value at index " +
                                  std::to_string(i));
    }
    // std::round is round-half-away-from-zero.
    double q = std::round((v - lo) * scale);
    if (q < 0.0) q = 0.0;
    if (q > top) q = top;
    out.set(i, static_cast<uint16_t>(q));
  }
  return out;
}

}  // namespace bnf
