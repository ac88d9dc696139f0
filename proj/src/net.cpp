#include "bnf/net.hpp"

#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

#include "bnf/bitplane.hpp"
#include "bnf/rng.hpp"

namespace bnf {

Tensor BatchT::sample(int i) const {
  Tensor t(Shape{static_cast<uint32_t>(h), static_cast<uint32_t>(w), static_cast<uint32_t>(c)});
  const size_t stride = per_sample();
  std::copy(v.begin() + i * stride, v.begin() + (i + 1) * stride, t.data().begin());
  return t;
}

void BatchT::set_sample(int i, const Tensor& t) {
  const size_t stride = per_sample();
  if (t.size() != stride) throw std::invalid_argument("BatchT: sample size mismatch");
  std::copy(t.data().begin(), t.data().end(), v.begin() + i * stride);
}

Shape Param::shape() const {
  std::vector<uint32_t> d;
  for (int x : dims) d.push_back(static_cast<uint32_t>(x));
  return Shape(d);
}

Tensor Param::as_tensor() const {
  Tensor t(shape());
  t.data() = value;
  return t;
}

namespace {

void init_uniform_fan_in(Param& p, size_t fan_in, uint64_t seed) {
  std::mt19937_64 g(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : p.value) v = uniform(g, -bound, bound);
}

// dw and dx for a same-padding stride-1 convolution. Both accumulate.
// Inner loops run contiguously over the filter axis.
void conv2d_backward(const Tensor& x, const Tensor& dy, const Tensor& w, const ConvSpec& spec,
                     Tensor* dx, std::vector<double>* dw) {
  const int hh = static_cast<int>(x.shape()[0]);
  const int ww = static_cast<int>(x.shape()[1]);
  const int cc = spec.in_channels;
  const int filters = spec.filters;
  const int pad_top = (spec.kh - 1) / 2;
  const int pad_left = (spec.kw - 1) / 2;
  const double* xp = x.data().data();
  const double* dyp = dy.data().data();
  const double* wp = w.data().data();
  for (int ky = 0; ky < spec.kh; ++ky) {
    for (int kx = 0; kx < spec.kw; ++kx) {
      const size_t tap = static_cast<size_t>(ky) * spec.kw + kx;
      for (int oy = 0; oy < hh; ++oy) {
        const int iy = oy + ky - pad_top;
        if (iy < 0 || iy >= hh) continue;
        for (int ox = 0; ox < ww; ++ox) {
          const int ix = ox + kx - pad_left;
          if (ix < 0 || ix >= ww) continue;
          const double* grow = dyp + (static_cast<size_t>(oy) * ww + ox) * filters;
          const double* xrow = xp + (static_cast<size_t>(iy) * ww + ix) * cc;
          double* dxrow =
              dx ? dx->data().data() + (static_cast<size_t>(iy) * ww + ix) * cc : nullptr;
          for (int c = 0; c < cc; ++c) {
            const double xv = xrow[c];
            const double* wrow = wp + (tap * cc + c) * filters;
            double acc = 0.0;
            if (dw) {
              double* dwrow = dw->data() + (tap * cc + c) * filters;
              for (int i = 0; i < filters; ++i) {
                dwrow[i] += xv * grow[i];
                acc += wrow[i] * grow[i];
              }
            } else {
              for (int i = 0; i < filters; ++i) acc += wrow[i] * grow[i];
            }
            if (dxrow) dxrow[c] += acc;
          }
        }
      }
    }
  }
}

FixedTensor to_fixed_from_reals(const Tensor& x, int bits) {
  FixedTensor out(x.shape(), bits);
  const double top = static_cast<double>((1u << bits) - 1);
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (!(v >= 0.0 && v <= top) || v != std::floor(v)) {
      throw std::invalid_argument("fpid input must hold integers in [0, 2^M-1], got " +
                                  std::to_string(v));
    }
    out.set(i, static_cast<uint16_t>(v));
  }
  return out;
}

}  // namespace

ConvLayer::ConvLayer(std::string name, const ConvSpec& spec, WeightMode weight_mode,
                     ConvInputKind kind, int fixed_bits, bool want_input_grad, uint64_t init_seed)
    : name_(std::move(name)),
      spec_(spec),
      weight_mode_(weight_mode),
      kind_(kind),
      fixed_bits_(fixed_bits),
      want_input_grad_(want_input_grad) {
  spec_.validate();
  if (kind_ == ConvInputKind::FixedInt && (fixed_bits_ < 1 || fixed_bits_ > 16)) {
    throw std::invalid_argument("ConvLayer: fixed-point input needs bit width 1..16");
  }
  w_.name = name_ + ".w";
  w_.dims = {spec_.kh, spec_.kw, spec_.in_channels, spec_.filters};
  const size_t n = static_cast<size_t>(spec_.kh) * spec_.kw * spec_.in_channels * spec_.filters;
  w_.value.assign(n, 0.0);
  w_.grad.assign(n, 0.0);
  init_uniform_fan_in(w_, static_cast<size_t>(spec_.kh) * spec_.kw * spec_.in_channels, init_seed);
}

BatchT ConvLayer::forward(const BatchT& x, bool training) {
  if (x.c != spec_.in_channels) {
    throw std::invalid_argument(name_ + ": expected " + std::to_string(spec_.in_channels) +
                                " channels, got " + std::to_string(x.c));
  }
  if (training) cached_x_ = x;

  const Tensor latent = w_.as_tensor();
  BinaryWeightTensor bin;
  if (weight_mode_ == WeightMode::Binary) {
    bin = binarize_weights(latent);
    used_weights_ = Tensor(latent.shape());
    for (size_t i = 0; i < used_weights_.size(); ++i) used_weights_[i] = bin.effective(i);
  } else {
    used_weights_ = latent;
  }

  BatchT out(x.n, x.h, x.w, spec_.filters);
  for (int i = 0; i < x.n; ++i) {
    const Tensor xs = x.sample(i);
    Tensor ys;
    if (weight_mode_ == WeightMode::Binary && kind_ == ConvInputKind::Binary01) {
      ys = conv2d_binary(xs, bin, spec_);
    } else if (weight_mode_ == WeightMode::Binary && kind_ == ConvInputKind::FixedInt) {
      ys = fpid_first_layer(to_fixed_from_reals(xs, fixed_bits_), bin, spec_);
    } else {
      ys = conv2d_reference(xs, used_weights_, spec_);
    }
    out.set_sample(i, ys);
  }
  return out;
}

BatchT ConvLayer::backward(const BatchT& dy) {
  if (cached_x_.n != dy.n) throw std::logic_error(name_ + ": backward before forward");
  BatchT dx(cached_x_.n, cached_x_.h, cached_x_.w, cached_x_.c);
  for (int i = 0; i < dy.n; ++i) {
    const Tensor xs = cached_x_.sample(i);
    const Tensor dys = dy.sample(i);
    Tensor dxs(xs.shape());
    // Straight-through: the latent gradient is the effective-weight gradient.
    conv2d_backward(xs, dys, used_weights_, spec_, want_input_grad_ ? &dxs : nullptr, &w_.grad);
    if (want_input_grad_) dx.set_sample(i, dxs);
  }
  w_.grad_written = true;
  return dx;
}

void ConvLayer::collect_params(std::vector<Param*>& out) { out.push_back(&w_); }

LinearLayer::LinearLayer(std::string name, int in_features, int out_features,
                         WeightMode weight_mode, bool bias, uint64_t init_seed)
    : name_(std::move(name)),
      in_features_(in_features),
      out_features_(out_features),
      weight_mode_(weight_mode),
      bias_(bias) {
  if (in_features < 1 || out_features < 1) {
    throw std::invalid_argument("LinearLayer: feature counts must be >= 1");
  }
  w_.name = name_ + ".w";
  w_.dims = {in_features, out_features};
  w_.value.assign(static_cast<size_t>(in_features) * out_features, 0.0);
  w_.grad.assign(w_.value.size(), 0.0);
  init_uniform_fan_in(w_, static_cast<size_t>(in_features), init_seed);
  if (bias_) {
    b_.name = name_ + ".b";
    b_.dims = {out_features};
    b_.value.assign(static_cast<size_t>(out_features), 0.0);
    b_.grad.assign(b_.value.size(), 0.0);
  }
}

BatchT LinearLayer::forward(const BatchT& x, bool training) {
  if (static_cast<int>(x.per_sample()) != in_features_) {
    throw std::invalid_argument(name_ + ": expected " + std::to_string(in_features_) +
                                " inputs, got " + std::to_string(x.per_sample()));
  }
  in_h_ = x.h;
  in_w_ = x.w;
  in_c_ = x.c;
  if (training) cached_x_ = x;

  const Tensor latent = w_.as_tensor();
  if (weight_mode_ == WeightMode::Binary) {
    const BinaryWeightTensor bin = binarize_weights(latent);
    used_weights_ = Tensor(latent.shape());
    for (size_t i = 0; i < used_weights_.size(); ++i) used_weights_[i] = bin.effective(i);
  } else {
    used_weights_ = latent;
  }

  BatchT out(x.n, 1, 1, out_features_);
  for (int i = 0; i < x.n; ++i) {
    const double* xi = x.v.data() + i * x.per_sample();
    double* yi = out.v.data() + i * out.per_sample();
    for (int j = 0; j < out_features_; ++j) yi[j] = bias_ ? b_.value[j] : 0.0;
    for (int k = 0; k < in_features_; ++k) {
      const double xv = xi[k];
      if (xv == 0.0) continue;
      const double* wrow = used_weights_.data().data() + static_cast<size_t>(k) * out_features_;
      for (int j = 0; j < out_features_; ++j) yi[j] += xv * wrow[j];
    }
  }
  return out;
}

BatchT LinearLayer::backward(const BatchT& dy) {
  if (cached_x_.n != dy.n) throw std::logic_error(name_ + ": backward before forward");
  BatchT dx(cached_x_.n, in_h_, in_w_, in_c_);
  for (int i = 0; i < dy.n; ++i) {
    const double* xi = cached_x_.v.data() + i * cached_x_.per_sample();
    const double* gi = dy.v.data() + i * dy.per_sample();
    double* dxi = dx.v.data() + i * dx.per_sample();
    for (int k = 0; k < in_features_; ++k) {
      const double xv = xi[k];
      const double* wrow = used_weights_.data().data() + static_cast<size_t>(k) * out_features_;
      double* gw = w_.grad.data() + static_cast<size_t>(k) * out_features_;
      double acc = 0.0;
      for (int j = 0; j < out_features_; ++j) {
        gw[j] += xv * gi[j];
        acc += wrow[j] * gi[j];
      }
      dxi[k] = acc;
    }
    if (bias_) {
      for (int j = 0; j < out_features_; ++j) b_.grad[j] += gi[j];
    }
  }
  w_.grad_written = true;
  if (bias_) b_.grad_written = true;
  return dx;
}

void LinearLayer::collect_params(std::vector<Param*>& out) {
  out.push_back(&w_);
  if (bias_) out.push_back(&b_);
}

BatchNormLayer::BatchNormLayer(std::string name, int channels, double eps, double momentum,
                               double gamma_init, double beta_init)
    : name_(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum) {
  if (channels < 1) throw std::invalid_argument("BatchNormLayer: channels must be >= 1");
  gamma_.name = name_ + ".gamma";
  gamma_.dims = {channels};
  gamma_.value.assign(static_cast<size_t>(channels), gamma_init);
  gamma_.grad.assign(static_cast<size_t>(channels), 0.0);
  beta_.name = name_ + ".beta";
  beta_.dims = {channels};
  beta_.value.assign(static_cast<size_t>(channels), beta_init);
  beta_.grad.assign(static_cast<size_t>(channels), 0.0);
  run_mean_.assign(static_cast<size_t>(channels), 0.0);
  run_var_.assign(static_cast<size_t>(channels), 1.0);
}

BatchT BatchNormLayer::forward(const BatchT& x, bool training) {
  if (x.c != channels_) throw std::invalid_argument(name_ + ": channel mismatch");
  const size_t spatial = static_cast<size_t>(x.n) * x.h * x.w;
  BatchT out(x.n, x.h, x.w, x.c);

  if (!training) {
    for (size_t i = 0; i < x.v.size(); ++i) {
      const int c = static_cast<int>(i % channels_);
      const double xhat = (x.v[i] - run_mean_[c]) / std::sqrt(run_var_[c] + eps_);
      out.v[i] = gamma_.value[c] * xhat + beta_.value[c];
    }
    return out;
  }

  std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
  for (size_t i = 0; i < x.v.size(); ++i) mean[i % channels_] += x.v[i];
  for (double& m : mean) m /= static_cast<double>(spatial);
  for (size_t i = 0; i < x.v.size(); ++i) {
    const int c = static_cast<int>(i % channels_);
    const double d = x.v[i] - mean[c];
    var[c] += d * d;
  }
  for (double& s : var) s /= static_cast<double>(spatial);

  inv_std_.assign(channels_, 0.0);
  for (int c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);

  xhat_ = BatchT(x.n, x.h, x.w, x.c);
  for (size_t i = 0; i < x.v.size(); ++i) {
    const int c = static_cast<int>(i % channels_);
    xhat_.v[i] = (x.v[i] - mean[c]) * inv_std_[c];
    out.v[i] = gamma_.value[c] * xhat_.v[i] + beta_.value[c];
  }
  reduce_n_ = spatial;

  if (update_running_) {
    for (int c = 0; c < channels_; ++c) {
      run_mean_[c] = momentum_ * run_mean_[c] + (1.0 - momentum_) * mean[c];
      run_var_[c] = momentum_ * run_var_[c] + (1.0 - momentum_) * var[c];
    }
  }
  return out;
}

BatchT BatchNormLayer::backward(const BatchT& dy) {
  if (xhat_.v.size() != dy.v.size()) throw std::logic_error(name_ + ": backward before forward");
  const double n = static_cast<double>(reduce_n_);
  std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
  for (size_t i = 0; i < dy.v.size(); ++i) {
    const int c = static_cast<int>(i % channels_);
    sum_dy[c] += dy.v[i];
    sum_dy_xhat[c] += dy.v[i] * xhat_.v[i];
  }
  for (int c = 0; c < channels_; ++c) {
    gamma_.grad[c] += sum_dy_xhat[c];
    beta_.grad[c] += sum_dy[c];
  }
  BatchT dx(dy.n, dy.h, dy.w, dy.c);
  for (size_t i = 0; i < dy.v.size(); ++i) {
    const int c = static_cast<int>(i % channels_);
    dx.v[i] = gamma_.value[c] * inv_std_[c] / n *
              (n * dy.v[i] - sum_dy[c] - xhat_.v[i] * sum_dy_xhat[c]);
  }
  gamma_.grad_written = true;
  beta_.grad_written = true;
  return dx;
}

void BatchNormLayer::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNormLayer::collect_state(
    std::vector<std::pair<std::string, std::vector<double>*>>& out) {
  out.emplace_back(name_ + ".run_mean", &run_mean_);
  out.emplace_back(name_ + ".run_var", &run_var_);
}

BatchNormState BatchNormLayer::inference_state() const {
  BatchNormState s;
  s.gamma = gamma_.value;
  s.beta = beta_.value;
  s.mean = run_mean_;
  s.var = run_var_;
  s.eps = eps_;
  return s;
}

ActQuantLayer::ActQuantLayer(std::string name, bool quantize, int k)
    : name_(std::move(name)), quantize_(quantize), k_(k) {
  if (quantize_ && (k < 1 || k > 16)) throw std::invalid_argument("ActQuantLayer: k must be 1..16");
}

BatchT ActQuantLayer::forward(const BatchT& x, bool training) {
  (void)training;
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  c_ = x.c;
  pass_mask_.assign(x.v.size(), 0);
  BatchT out(x.n, x.h, x.w, x.c);
  const double levels = quantize_ ? static_cast<double>((1u << k_) - 1) : 0.0;
  for (size_t i = 0; i < x.v.size(); ++i) {
    const double xv = x.v[i];
    pass_mask_[i] = (xv >= 0.0 && xv <= 1.0) ? 1 : 0;
    double a = bounded_activation_scalar(xv);
    if (quantize_) a = std::round(a * levels) / levels;
    out.v[i] = a;
  }
  return out;
}

BatchT ActQuantLayer::backward(const BatchT& dy) {
  if (dy.v.size() != pass_mask_.size()) throw std::logic_error(name_ + ": backward before forward");
  BatchT dx(n_, h_, w_, c_);
  for (size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = pass_mask_[i] ? dy.v[i] : 0.0;
  return dx;
}

MaxPoolLayer::MaxPoolLayer(std::string name, int pool_h, int pool_w)
    : name_(std::move(name)), ph_(pool_h), pw_(pool_w) {
  if (pool_h < 1 || pool_w < 1) throw std::invalid_argument("MaxPoolLayer: window must be >= 1");
}

BatchT MaxPoolLayer::forward(const BatchT& x, bool training) {
  (void)training;
  if (ph_ > x.h || pw_ > x.w) {
    throw std::invalid_argument(name_ + ": pool window larger than input " + std::to_string(x.h) +
                                "x" + std::to_string(x.w));
  }
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  in_c_ = x.c;
  const int oh = x.h / ph_;
  const int ow = x.w / pw_;
  BatchT out(x.n, oh, ow, x.c);
  argmax_.assign(out.v.size(), 0);
  for (int i = 0; i < x.n; ++i) {
    for (int y = 0; y < oh; ++y) {
      for (int v = 0; v < ow; ++v) {
        for (int c = 0; c < x.c; ++c) {
          double best = -1e300;
          size_t best_idx = 0;
          for (int py = 0; py < ph_; ++py) {
            for (int px = 0; px < pw_; ++px) {
              const size_t idx =
                  ((static_cast<size_t>(i) * x.h + (y * ph_ + py)) * x.w + (v * pw_ + px)) * x.c +
                  c;
              if (x.v[idx] > best) {  // first max wins ties: fixed scan order
                best = x.v[idx];
                best_idx = idx;
              }
            }
          }
          const size_t out_idx = ((static_cast<size_t>(i) * oh + y) * ow + v) * x.c + c;
          out.v[out_idx] = best;
          argmax_[out_idx] = best_idx;
        }
      }
    }
  }
  return out;
}

BatchT MaxPoolLayer::backward(const BatchT& dy) {
  if (dy.v.size() != argmax_.size()) throw std::logic_error(name_ + ": backward before forward");
  BatchT dx(in_n_, in_h_, in_w_, in_c_);
  for (size_t i = 0; i < dy.v.size(); ++i) dx.v[argmax_[i]] += dy.v[i];
  return dx;
}

DropoutLayer::DropoutLayer(std::string name, double rate) : name_(std::move(name)), rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("DropoutLayer: rate must be in [0,1)");
}

BatchT DropoutLayer::forward(const BatchT& x, bool training) {
  if (!training || rate_ == 0.0) {
    keep_.assign(x.v.size(), 1);
    return x;
  }
  std::mt19937_64 g(step_seed_);
  const double keep_p = 1.0 - rate_;
  keep_.assign(x.v.size(), 0);
  BatchT out(x.n, x.h, x.w, x.c);
  for (size_t i = 0; i < x.v.size(); ++i) {
    if (uniform01(g) < keep_p) {
      keep_[i] = 1;
      out.v[i] = x.v[i] / keep_p;
    }
  }
  return out;
}

BatchT DropoutLayer::backward(const BatchT& dy) {
  if (dy.v.size() != keep_.size()) throw std::logic_error(name_ + ": backward before forward");
  BatchT dx = dy;
  const double keep_p = 1.0 - rate_;
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] = keep_[i] ? dx.v[i] / keep_p : 0.0;
  return dx;
}

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

BatchT Network::forward(const BatchT& x, bool training) {
  BatchT cur = x;
  for (auto& l : layers_) cur = l->forward(cur, training);
  return cur;
}

double Network::loss_and_backward(const BatchT& x, const std::vector<int>& labels, int* correct) {
  if (static_cast<int>(labels.size()) != x.n) {
    throw std::invalid_argument("loss_and_backward: label count mismatch");
  }
  const BatchT logits = forward(x, true);
  if (logits.h != 1 || logits.w != 1) throw std::logic_error("network must end in a classifier");
  const int classes = logits.c;
  BatchT dlogits(logits.n, 1, 1, classes);
  double total_loss = 0.0;
  int ok = 0;
  for (int i = 0; i < logits.n; ++i) {
    std::vector<double> row(logits.v.begin() + i * classes, logits.v.begin() + (i + 1) * classes);
    std::vector<double> drow;
    total_loss += softmax_cross_entropy(row, labels[static_cast<size_t>(i)], &drow);
    int arg = 0;
    for (int j = 1; j < classes; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (arg == labels[static_cast<size_t>(i)]) ++ok;
    for (int j = 0; j < classes; ++j) {
      dlogits.v[static_cast<size_t>(i) * classes + j] = drow[static_cast<size_t>(j)] / logits.n;
    }
  }
  BatchT grad = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad = (*it)->backward(grad);

  for (Param* p : params()) {
    if (!p->grad_written) {
      std::cerr << "bnf: warning: parameter " << p->name
                << " received no gradient (disconnected); leaving it at zero\n";
    }
  }
  if (correct) *correct = ok;
  return total_loss / logits.n;
}

double Network::loss_only(const BatchT& x, const std::vector<int>& labels, bool training) {
  const BatchT logits = forward(x, training);
  const int classes = logits.c;
  double total_loss = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    std::vector<double> row(logits.v.begin() + i * classes, logits.v.begin() + (i + 1) * classes);
    total_loss += softmax_cross_entropy(row, labels[static_cast<size_t>(i)], nullptr);
  }
  return total_loss / logits.n;
}

double Network::eval_loss(const BatchT& x, const std::vector<int>& labels, int* correct) {
  const BatchT logits = forward(x, false);
  const int classes = logits.c;
  double total_loss = 0.0;
  int ok = 0;
  for (int i = 0; i < logits.n; ++i) {
    std::vector<double> row(logits.v.begin() + i * classes, logits.v.begin() + (i + 1) * classes);
    total_loss += softmax_cross_entropy(row, labels[static_cast<size_t>(i)], nullptr);
    int arg = 0;
    for (int j = 1; j < classes; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (arg == labels[static_cast<size_t>(i)]) ++ok;
  }
  if (correct) *correct = ok;
  return total_loss / logits.n;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> Network::state_tensors() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (auto& l : layers_) l->collect_state(out);
  return out;
}

void Network::zero_grads() {
  for (Param* p : params()) {
    std::fill(p->grad.begin(), p->grad.end(), 0.0);
    p->grad_written = false;
  }
}

void Network::begin_step(uint64_t step_seed) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->begin_step(mix_seed(step_seed, i));
  }
}

void Network::set_update_running_stats(bool u) {
  for (auto& l : layers_) {
    if (auto* bn = dynamic_cast<BatchNormLayer*>(l.get())) bn->set_update_running_stats(u);
  }
}

Network build_network(const ModelConfig& cfg, const BuildOptions& opt) {
  cfg.validate();
  Network net;
  int h = static_cast<int>(cfg.input_shape[0]);
  int w = static_cast<int>(cfg.input_shape[1]);
  int c = static_cast<int>(cfg.input_shape[2]);
  const int m_bits = cfg.bit_width;
  if (cfg.mode == FirstLayerMode::Dbi || cfg.mode == FirstLayerMode::Bil) c *= m_bits;

  int layer_idx = 0;
  auto fnv1a = [](const char* s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (; *s; ++s) h = (h ^ static_cast<uint64_t>(*s)) * 0x100000001b3ull;
    return h;
  };
  auto next_seed = [&](const char* tag) {
    return mix_seed(opt.seed, mix_seed(static_cast<uint64_t>(layer_idx), fnv1a(tag)));
  };
  auto tag_name = [&](const std::string& base) {
    return "l" + std::to_string(layer_idx) + "_" + base;
  };

  // Activations after a hidden layer are exact {0,1} only when both the
  // clamp and 1-bit quantization are in play.
  const bool binary_activations =
      opt.use_bounded_activation && opt.quantize_activations && opt.activation_bits == 1;

  auto add_post = [&](int channels) {
    net.add(std::make_unique<BatchNormLayer>(tag_name("bn"), channels, 1e-5, 0.9,
                                             opt.bn_gamma_init, opt.bn_beta_init));
    ++layer_idx;
    if (opt.use_bounded_activation) {
      net.add(std::make_unique<ActQuantLayer>(tag_name("act"), opt.quantize_activations,
                                              opt.activation_bits));
      ++layer_idx;
    }
  };

  if (cfg.mode == FirstLayerMode::Bil) {
    ConvSpec bil_spec;
    bil_spec.kh = 1;
    bil_spec.kw = 1;
    bil_spec.in_channels = c;
    bil_spec.filters = cfg.bil_filters;
    net.add(std::make_unique<ConvLayer>(tag_name("bil"), bil_spec, WeightMode::Binary,
                                        ConvInputKind::Binary01, 0, false, next_seed("bil")));
    ++layer_idx;
    net.add(std::make_unique<BatchNormLayer>(tag_name("bn"), cfg.bil_filters, 1e-5, 0.9,
                                             opt.bn_gamma_init, opt.bn_beta_init));
    ++layer_idx;
    // The BIL pipeline ends in a 1-bit quantizer by definition.
    net.add(std::make_unique<ActQuantLayer>(tag_name("act"), true, 1));
    ++layer_idx;
    c = cfg.bil_filters;
  }

  bool first_conv = true;
  bool saw_fc = false;
  for (const LayerSpec& l : cfg.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        const auto [kh, kw] = cfg.conv_kernel(l.kernel);
        ConvSpec spec;
        spec.kh = kh;
        spec.kw = kw;
        spec.in_channels = c;
        spec.filters = l.filters;
        WeightMode wm;
        ConvInputKind kind;
        int fixed_bits = 0;
        bool want_dx = true;
        if (first_conv) {
          switch (cfg.mode) {
            case FirstLayerMode::Baseline:
              wm = WeightMode::FullPrecision;
              kind = ConvInputKind::Real;
              want_dx = false;
              break;
            case FirstLayerMode::Fpid:
              wm = WeightMode::Binary;
              kind = ConvInputKind::FixedInt;
              fixed_bits = m_bits;
              want_dx = false;
              break;
            case FirstLayerMode::Dbi:
              wm = WeightMode::Binary;
              kind = ConvInputKind::Binary01;
              want_dx = false;
              break;
            case FirstLayerMode::Bil:
              // After the BIL block this is a regular hidden binary conv.
              wm = opt.binarize_hidden ? WeightMode::Binary : WeightMode::FullPrecision;
              kind = (opt.binarize_hidden && binary_activations) ? ConvInputKind::Binary01
                                                                 : ConvInputKind::Real;
              want_dx = true;
              break;
          }
        } else {
          wm = opt.binarize_hidden ? WeightMode::Binary : WeightMode::FullPrecision;
          kind = (wm == WeightMode::Binary && binary_activations) ? ConvInputKind::Binary01
                                                                  : ConvInputKind::Real;
        }
        net.add(std::make_unique<ConvLayer>(tag_name("conv"), spec, wm, kind, fixed_bits, want_dx,
                                            next_seed("conv")));
        ++layer_idx;
        c = l.filters;
        add_post(c);
        first_conv = false;
        break;
      }
      case LayerSpec::Kind::MaxPool: {
        const auto [ph, pw] = cfg.pool_window(l.pool);
        net.add(std::make_unique<MaxPoolLayer>(tag_name("pool"), ph, pw));
        ++layer_idx;
        h /= ph;
        w /= pw;
        break;
      }
      case LayerSpec::Kind::FullyConnected: {
        if (!saw_fc && opt.dropout_rate > 0.0) {
          net.add(std::make_unique<DropoutLayer>(tag_name("drop"), opt.dropout_rate));
          ++layer_idx;
        }
        saw_fc = true;
        const int in_features = h * w * c;
        const WeightMode wm = opt.binarize_hidden ? WeightMode::Binary : WeightMode::FullPrecision;
        net.add(std::make_unique<LinearLayer>(tag_name("fc"), in_features, l.units, wm, false,
                                              next_seed("fc")));
        ++layer_idx;
        h = 1;
        w = 1;
        c = l.units;
        add_post(c);
        break;
      }
      case LayerSpec::Kind::SoftmaxHead: {
        const int in_features = h * w * c;
        // The classifier always stays at full precision.
        net.add(std::make_unique<LinearLayer>(tag_name("classifier"), in_features, cfg.num_classes,
                                              WeightMode::FullPrecision, true,
                                              next_seed("classifier")));
        ++layer_idx;
        h = 1;
        w = 1;
        c = cfg.num_classes;
        break;
      }
    }
  }
  return net;
}

BatchT encode_batch(const std::vector<const FixedTensor*>& windows, FirstLayerMode mode) {
  if (windows.empty()) throw std::invalid_argument("encode_batch: empty batch");
  const Shape& s = windows.front()->shape();
  const int m_bits = windows.front()->bit_width();
  const int n = static_cast<int>(windows.size());
  const int hh = static_cast<int>(s[0]);
  const int ww = static_cast<int>(s[1]);
  const int cc = static_cast<int>(s[2]);
  const double top = static_cast<double>((1u << m_bits) - 1);

  if (mode == FirstLayerMode::Baseline || mode == FirstLayerMode::Fpid) {
    BatchT out(n, hh, ww, cc);
    for (int i = 0; i < n; ++i) {
      const FixedTensor& t = *windows[static_cast<size_t>(i)];
      if (!(t.shape() == s) || t.bit_width() != m_bits) {
        throw std::invalid_argument("encode_batch: mixed window shapes");
      }
      for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < ww; ++x) {
          for (int ch = 0; ch < cc; ++ch) {
            const double raw = static_cast<double>(t.at3(y, x, ch));
            out.at(i, y, x, ch) = (mode == FirstLayerMode::Baseline) ? raw / top : raw;
          }
        }
      }
    }
    return out;
  }

  // dbi / bil: expand bit planes, channel-major (c*M + m).
  BatchT out(n, hh, ww, cc * m_bits);
  for (int i = 0; i < n; ++i) {
    const FixedTensor& t = *windows[static_cast<size_t>(i)];
    if (!(t.shape() == s) || t.bit_width() != m_bits) {
      throw std::invalid_argument("encode_batch: mixed window shapes");
    }
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < ww; ++x) {
        for (int ch = 0; ch < cc; ++ch) {
          const uint16_t v = t.at3(y, x, ch);
          for (int m = 0; m < m_bits; ++m) {
            out.at(i, y, x, ch * m_bits + m) = ((v >> m) & 1u) ? 1.0 : 0.0;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace bnf
