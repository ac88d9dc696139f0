#include "bnf/layers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "bnf/rng.hpp"

namespace bnf {

Shape ConvSpec::weight_shape() const {
  return Shape{static_cast<uint32_t>(kh), static_cast<uint32_t>(kw),
               static_cast<uint32_t>(in_channels), static_cast<uint32_t>(filters)};
}

void ConvSpec::validate() const {
  if (kh < 1 || kw < 1) throw std::invalid_argument("ConvSpec: kernel dims must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("ConvSpec: in_channels must be >= 1");
  if (filters < 1) throw std::invalid_argument("ConvSpec: filters must be >= 1");
}

namespace {

void check_conv_args(const Shape& in_shape, const Shape& w_shape, const ConvSpec& spec) {
  spec.validate();
  if (in_shape.rank() != 3) throw std::invalid_argument("conv2d: input must be H x W x C");
  if (static_cast<int>(in_shape[2]) != spec.in_channels) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(in_shape[2]) +
                                " do not match spec " + std::to_string(spec.in_channels));
  }
  if (!(w_shape == spec.weight_shape())) {
    throw std::invalid_argument("conv2d: weight shape " + w_shape.str() +
                                " does not match spec " + spec.weight_shape().str());
  }
}

// Per-filter, per-tap channel rows of +1 sign bits, word aligned so they can
// be fed to the popcount core together with a pixel's packed channels.
struct PackedWeightRows {
  int kh = 0, kw = 0, channels = 0, filters = 0;
  uint32_t wpp = 0;
  std::vector<uint64_t> rows;
  double scale = 0.0;

  const uint64_t* row(int filter, int tap) const {
    return rows.data() + (static_cast<size_t>(filter) * kh * kw + tap) * wpp;
  }
};

PackedWeightRows pack_weight_rows(const BinaryWeightTensor& w, const ConvSpec& spec,
                                  uint32_t words_per_pixel) {
  PackedWeightRows out;
  out.kh = spec.kh;
  out.kw = spec.kw;
  out.channels = spec.in_channels;
  out.filters = spec.filters;
  out.wpp = words_per_pixel;
  out.scale = w.scale();
  out.rows.assign(static_cast<size_t>(spec.filters) * spec.kh * spec.kw * words_per_pixel, 0);
  for (int ky = 0; ky < spec.kh; ++ky) {
    for (int kx = 0; kx < spec.kw; ++kx) {
      for (int c = 0; c < spec.in_channels; ++c) {
        for (int i = 0; i < spec.filters; ++i) {
          const size_t flat =
              ((static_cast<size_t>(ky) * spec.kw + kx) * spec.in_channels + c) * spec.filters + i;
          if (w.sign_bit(flat)) {
            uint64_t* row = out.rows.data() +
                            (static_cast<size_t>(i) * spec.kh * spec.kw + ky * spec.kw + kx) *
                                words_per_pixel;
            row[c / 64] |= uint64_t{1} << (c % 64);
          }
        }
      }
    }
  }
  return out;
}

// Integer-core binary convolution shared by conv2d_binary and the per-plane
// FPID path. Accumulates the signed popcount per output into acc (+= term
// shifted by 2^plane_shift).
void conv_binary_accumulate(const PackedBitTensor& x, const PackedWeightRows& w,
                            int64_t plane_weight, std::vector<int64_t>& acc) {
  const int hh = static_cast<int>(x.height());
  const int ww = static_cast<int>(x.width());
  const int filters = w.filters;
  const int pad_top = (w.kh - 1) / 2;
  const int pad_left = (w.kw - 1) / 2;
  const uint32_t wpp = x.words_per_pixel();
  const size_t nbits = x.channels();

  // Pixel popcounts hoisted; the core needs popcount(x) once per tap.
  std::vector<int64_t> px_pop(static_cast<size_t>(hh) * ww, 0);
  {
    const uint64_t tail =
        (nbits % 64) ? ((uint64_t{1} << (nbits % 64)) - 1) : ~uint64_t{0};
    for (int h = 0; h < hh; ++h) {
      for (int v = 0; v < ww; ++v) {
        const uint64_t* row = x.pixel_words(h, v);
        int64_t total = 0;
        for (uint32_t k = 0; k < wpp; ++k) {
          uint64_t word = row[k];
          if (k + 1 == wpp) word &= tail;
          total += std::popcount(word);
        }
        px_pop[static_cast<size_t>(h) * ww + v] = total;
      }
    }
  }

  for (int oy = 0; oy < hh; ++oy) {
    for (int ox = 0; ox < ww; ++ox) {
      for (int i = 0; i < filters; ++i) {
        int64_t s = 0;
        for (int ky = 0; ky < w.kh; ++ky) {
          const int iy = oy + ky - pad_top;
          if (iy < 0 || iy >= hh) continue;  // zero padding: all-zero bits contribute 0
          for (int kx = 0; kx < w.kw; ++kx) {
            const int ix = ox + kx - pad_left;
            if (ix < 0 || ix >= ww) continue;
            const uint64_t* xrow = x.pixel_words(iy, ix);
            const uint64_t* wrow = w.row(i, ky * w.kw + kx);
            int64_t on = 0;
            for (uint32_t k = 0; k < wpp; ++k) on += std::popcount(xrow[k] & wrow[k]);
            // x is masked at build time and wrow has no bits past nbits,
            // so only the x popcount needs the precomputed masked total.
            s += 2 * on - px_pop[static_cast<size_t>(iy) * ww + ix];
          }
        }
        acc[(static_cast<size_t>(oy) * ww + ox) * filters + i] += plane_weight * s;
      }
    }
  }
}

}  // namespace

Tensor conv2d_reference(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                        uint64_t* mult_counter) {
  check_conv_args(input.shape(), weights.shape(), spec);
  const int hh = static_cast<int>(input.shape()[0]);
  const int ww = static_cast<int>(input.shape()[1]);
  const int cc = spec.in_channels;
  const int filters = spec.filters;
  const int pad_top = (spec.kh - 1) / 2;
  const int pad_left = (spec.kw - 1) / 2;
  Tensor out(Shape{static_cast<uint32_t>(hh), static_cast<uint32_t>(ww),
                   static_cast<uint32_t>(filters)});
  const double* w = weights.data().data();
  const double* in = input.data().data();
  uint64_t mults = 0;
  std::vector<double> acc(static_cast<size_t>(filters));
  for (int oy = 0; oy < hh; ++oy) {
    for (int ox = 0; ox < ww; ++ox) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx) {
          const int iy = oy + ky - pad_top;
          const int ix = ox + kx - pad_left;
          const bool inside = iy >= 0 && iy < hh && ix >= 0 && ix < ww;
          const double* xrow = inside ? in + (static_cast<size_t>(iy) * ww + ix) * cc : nullptr;
          for (int c = 0; c < cc; ++c) {
            // padding taps multiply by zero: the hardware multiplier runs
            // either way, so the counter advances for them too
            const double xv = inside ? xrow[c] : 0.0;
            const double* wrow =
                w + ((static_cast<size_t>(ky) * spec.kw + kx) * cc + c) * filters;
            for (int i = 0; i < filters; ++i) acc[i] += xv * wrow[i];
            mults += static_cast<uint64_t>(filters);
          }
        }
      }
      double* orow = out.data().data() + (static_cast<size_t>(oy) * ww + ox) * filters;
      std::copy(acc.begin(), acc.end(), orow);
    }
  }
  if (mult_counter) *mult_counter += mults;
  return out;
}

PackedBitTensor pack_binary_tensor(const Tensor& input01) {
  if (input01.shape().rank() != 3) {
    throw std::invalid_argument("pack_binary_tensor: input must be H x W x C");
  }
  PackedBitTensor out(input01.shape()[0], input01.shape()[1], input01.shape()[2]);
  for (uint32_t h = 0; h < input01.shape()[0]; ++h) {
    for (uint32_t w = 0; w < input01.shape()[1]; ++w) {
      for (uint32_t c = 0; c < input01.shape()[2]; ++c) {
        const double v = input01.at3(h, w, c);
        if (v != 0.0 && v != 1.0) {
          throw std::invalid_argument("pack_binary_tensor: non-binary value " +
                                      std::to_string(v));
        }
        if (v == 1.0) out.set(h, w, c, true);
      }
    }
  }
  return out;
}

Tensor conv2d_binary(const PackedBitTensor& input, const BinaryWeightTensor& weights,
                     const ConvSpec& spec) {
  check_conv_args(Shape{input.height(), input.width(), input.channels()}, weights.shape(), spec);
  const PackedWeightRows rows = pack_weight_rows(weights, spec, input.words_per_pixel());
  std::vector<int64_t> acc(
      static_cast<size_t>(input.height()) * input.width() * spec.filters, 0);
  conv_binary_accumulate(input, rows, 1, acc);
  Tensor out(Shape{input.height(), input.width(), static_cast<uint32_t>(spec.filters)});
  const double scale = weights.scale();
  for (size_t i = 0; i < acc.size(); ++i) out[i] = scale * static_cast<double>(acc[i]);
  return out;
}

Tensor conv2d_binary(const Tensor& input01, const BinaryWeightTensor& weights,
                     const ConvSpec& spec) {
  return conv2d_binary(pack_binary_tensor(input01), weights, spec);
}

Tensor fpid_first_layer(const FixedTensor& input, const BinaryWeightTensor& weights,
                        const ConvSpec& spec) {
  check_conv_args(input.shape(), weights.shape(), spec);
  const BitPlaneTensor planes = decompose(input);
  std::vector<int64_t> acc(
      static_cast<size_t>(input.shape()[0]) * input.shape()[1] * spec.filters, 0);
  for (int m = 0; m < input.bit_width(); ++m) {
    const PackedBitTensor plane = planes.plane(static_cast<uint32_t>(m));
    const PackedWeightRows rows = pack_weight_rows(weights, spec, plane.words_per_pixel());
    conv_binary_accumulate(plane, rows, int64_t{1} << m, acc);
  }
  Tensor out(Shape{input.shape()[0], input.shape()[1], static_cast<uint32_t>(spec.filters)});
  const double scale = weights.scale();
  for (size_t i = 0; i < acc.size(); ++i) out[i] = scale * static_cast<double>(acc[i]);
  return out;
}

Tensor dbi_first_layer(const BitPlaneTensor& input, const BinaryWeightTensor& weights,
                       const ConvSpec& spec) {
  const uint32_t plane_channels = input.plane_count();
  if (static_cast<int>(plane_channels) != spec.in_channels) {
    throw std::invalid_argument("dbi_first_layer: weights expect " +
                                std::to_string(spec.in_channels) + " channels, input has C*M = " +
                                std::to_string(plane_channels));
  }
  return conv2d_binary(input.bits(), weights, spec);
}

BatchNormState BatchNormState::identity(int channels) {
  BatchNormState s;
  s.gamma.assign(channels, 1.0);
  s.beta.assign(channels, 0.0);
  s.mean.assign(channels, 0.0);
  s.var.assign(channels, 1.0);
  return s;
}

void BatchNormState::validate(int channels) const {
  const size_t n = static_cast<size_t>(channels);
  if (gamma.size() != n || beta.size() != n || mean.size() != n || var.size() != n) {
    throw std::invalid_argument("BatchNormState: per-channel vectors must have length " +
                                std::to_string(channels));
  }
}

Tensor batch_norm_forward(const Tensor& x, const BatchNormState& state) {
  if (x.shape().rank() != 3) throw std::invalid_argument("batch_norm_forward: input must be H x W x C");
  const int channels = static_cast<int>(x.shape()[2]);
  state.validate(channels);
  Tensor out = x;
  for (uint32_t h = 0; h < x.shape()[0]; ++h) {
    for (uint32_t w = 0; w < x.shape()[1]; ++w) {
      for (int c = 0; c < channels; ++c) {
        const double xhat = (x.at3(h, w, c) - state.mean[c]) / std::sqrt(state.var[c] + state.eps);
        out.at3(h, w, c) = state.gamma[c] * xhat + state.beta[c];
      }
    }
  }
  return out;
}

void BilSpec::validate() const {
  if (filters < 1) throw std::invalid_argument("BilSpec: K must be >= 1");
}

PackedBitTensor bil_first_layer(const BitPlaneTensor& input, const BilSpec& bil,
                                const BinaryWeightTensor& weights, const BatchNormState& bn,
                                const QuantizerConfig& qcfg) {
  bil.validate();
  qcfg.validate();
  if (qcfg.activation_bits != 1) {
    throw std::invalid_argument("bil_first_layer: output is packed binary, needs k = 1");
  }
  ConvSpec spec;
  spec.kh = 1;
  spec.kw = 1;
  spec.in_channels = static_cast<int>(input.plane_count());
  spec.filters = bil.filters;
  Tensor s = conv2d_binary(input.bits(), weights, spec);
  s = batch_norm_forward(s, bn);
  s = bounded_activation(s);
  s = quantize_k(s, qcfg.activation_bits);
  return pack_binary_tensor(s);
}

Tensor max_pool(const Tensor& x, int pool_h, int pool_w) {
  if (x.shape().rank() != 3) throw std::invalid_argument("max_pool: input must be H x W x C");
  if (pool_h < 1 || pool_w < 1) throw std::invalid_argument("max_pool: window must be >= 1");
  const int hh = static_cast<int>(x.shape()[0]);
  const int ww = static_cast<int>(x.shape()[1]);
  if (pool_h > hh || pool_w > ww) {
    throw std::invalid_argument("max_pool: window " + std::to_string(pool_h) + "x" +
                                std::to_string(pool_w) + " larger than input " + x.shape().str());
  }
  const int oh = hh / pool_h;
  const int ow = ww / pool_w;
  const int cc = static_cast<int>(x.shape()[2]);
  Tensor out(Shape{static_cast<uint32_t>(oh), static_cast<uint32_t>(ow),
                   static_cast<uint32_t>(cc)});
  for (int y = 0; y < oh; ++y) {
    for (int v = 0; v < ow; ++v) {
      for (int c = 0; c < cc; ++c) {
        double best = x.at3(y * pool_h, v * pool_w, c);
        for (int py = 0; py < pool_h; ++py) {
          for (int px = 0; px < pool_w; ++px) {
            best = std::max(best, x.at3(y * pool_h + py, v * pool_w + px, c));
          }
        }
        out.at3(y, v, c) = best;
      }
    }
  }
  return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& weights, const std::vector<double>& bias) {
  if (weights.shape().rank() != 2) throw std::invalid_argument("fully_connected: weights must be (in, out)");
  const size_t in = weights.shape()[0];
  const size_t outn = weights.shape()[1];
  if (x.size() != in) {
    throw std::invalid_argument("fully_connected: input size " + std::to_string(x.size()) +
                                " does not match weights (" + std::to_string(in) + ", ...)");
  }
  if (!bias.empty() && bias.size() != outn) {
    throw std::invalid_argument("fully_connected: bias length mismatch");
  }
  Tensor out(Shape{static_cast<uint32_t>(outn)});
  for (size_t j = 0; j < outn; ++j) {
    double acc = bias.empty() ? 0.0 : bias[j];
    for (size_t i = 0; i < in; ++i) acc += x[i] * weights[i * outn + j];
    out[j] = acc;
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double softmax_cross_entropy(const std::vector<double>& logits, int label,
                             std::vector<double>* dlogits) {
  if (label < 0 || static_cast<size_t>(label) >= logits.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label out of range");
  }
  const std::vector<double> p = softmax(logits);
  const double loss = -std::log(std::max(p[static_cast<size_t>(label)], 1e-300));
  if (dlogits) {
    *dlogits = p;
    (*dlogits)[static_cast<size_t>(label)] -= 1.0;
  }
  return loss;
}

Tensor dropout(const Tensor& x, double rate, uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  std::mt19937_64 g(seed);
  const double keep = 1.0 - rate;
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = (uniform01(g) < keep) ? out[i] / keep : 0.0;
  }
  return out;
}

}  // namespace bnf
