#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace bnf {

// Dense shapes are rank 1..4. Activations use the semantic order H x W x C
// (the batch axis lives in the training engine, not here); filter tensors
// use (kh, kw, in_c, out_c).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<uint32_t> dims);
  explicit Shape(const std::vector<uint32_t>& dims);

  size_t rank() const { return rank_; }
  uint32_t operator[](size_t i) const;
  uint64_t count() const;
  std::string str() const;

  bool operator==(const Shape& o) const;
  bool operator!=(const Shape& o) const { return !(*this == o); }

 private:
  void validate() const;

  std::array<uint32_t, 4> d_{1, 1, 1, 1};
  size_t rank_ = 0;
};

// Real-valued dense tensor, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape, double fill = 0.0);

  const Shape& shape() const { return shape_; }
  size_t size() const { return v_.size(); }

  double operator[](size_t i) const { return v_[i]; }
  double& operator[](size_t i) { return v_[i]; }

  // Rank-3 (H, W, C) accessors.
  double at3(uint32_t h, uint32_t w, uint32_t c) const;
  double& at3(uint32_t h, uint32_t w, uint32_t c);
  // Rank-4 (a, b, c, d) accessors.
  double at4(uint32_t a, uint32_t b, uint32_t c, uint32_t d) const;
  double& at4(uint32_t a, uint32_t b, uint32_t c, uint32_t d);

  const std::vector<double>& data() const { return v_; }
  std::vector<double>& data() { return v_; }

 private:
  Shape shape_;
  std::vector<double> v_;
};

// Tensor of unsigned fixed-point integers with bit_width M in 1..16.
// Every value is < 2^M.
class FixedTensor {
 public:
  FixedTensor() = default;
  FixedTensor(const Shape& shape, int bit_width);

  const Shape& shape() const { return shape_; }
  int bit_width() const { return bit_width_; }
  size_t size() const { return v_.size(); }

  uint16_t operator[](size_t i) const { return v_[i]; }
  void set(size_t i, uint16_t value);

  uint16_t at3(uint32_t h, uint32_t w, uint32_t c) const;
  void set3(uint32_t h, uint32_t w, uint32_t c, uint16_t value);

  uint16_t max_value() const { return static_cast<uint16_t>((1u << bit_width_) - 1); }

  bool operator==(const FixedTensor& o) const;

 private:
  Shape shape_;
  int bit_width_ = 0;
  std::vector<uint16_t> v_;
};

// Affine map of a real tensor from [lo, hi] onto {0, ..., 2^M - 1}.
// Rounds half away from zero and saturates at the range ends.
// Non-finite inputs are rejected.
FixedTensor to_fixed_point(const Tensor& raw, double lo, double hi, int bit_width);

}  // namespace bnf
