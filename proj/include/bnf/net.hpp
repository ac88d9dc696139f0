#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bnf/layers.hpp"
#include "bnf/model.hpp"
#include "bnf/quantize.hpp"
#include "bnf/tensor.hpp"

namespace bnf {

// Batched activations, N x H x W x C. Fully-connected stages use h = w = 1.
struct BatchT {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<double> v;

  BatchT() = default;
  BatchT(int n_, int h_, int w_, int c_)
      : n(n_), h(h_), w(w_), c(c_),
        v(static_cast<size_t>(n_) * h_ * w_ * c_, 0.0) {}

  size_t per_sample() const { return static_cast<size_t>(h) * w * c; }
  double at(int i, int y, int x, int ch) const {
    return v[((static_cast<size_t>(i) * h + y) * w + x) * c + ch];
  }
  double& at(int i, int y, int x, int ch) {
    return v[((static_cast<size_t>(i) * h + y) * w + x) * c + ch];
  }
  Tensor sample(int i) const;
  void set_sample(int i, const Tensor& t);
};

// Trainable tensor: latent value plus gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> dims;
  std::vector<double> value;
  std::vector<double> grad;
  bool grad_written = false;  // cleared by zero_grads, set by backward

  size_t count() const { return value.size(); }
  Shape shape() const;
  Tensor as_tensor() const;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual const std::string& name() const = 0;
  virtual BatchT forward(const BatchT& x, bool training) = 0;
  virtual BatchT backward(const BatchT& dy) = 0;
  virtual void collect_params(std::vector<Param*>& out) { (void)out; }
  // Non-trainable state that checkpoints must carry (batch-norm statistics).
  virtual void collect_state(std::vector<std::pair<std::string, std::vector<double>*>>& out) {
    (void)out;
  }
  virtual void begin_step(uint64_t step_seed) { (void)step_seed; }
};

enum class ConvInputKind { Real, Binary01, FixedInt };

// Convolution layer covering every first-layer strategy and the hidden
// binary convolutions. Binary weights go through the packed popcount
// kernels on {0,1} inputs and the per-plane kernel on fixed-point inputs;
// gradients reach the latent weights through the straight-through rule.
class ConvLayer : public Layer {
 public:
  ConvLayer(std::string name, const ConvSpec& spec, WeightMode weight_mode, ConvInputKind kind,
            int fixed_bits, bool want_input_grad, uint64_t init_seed);

  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool training) override;
  BatchT backward(const BatchT& dy) override;
  void collect_params(std::vector<Param*>& out) override;

  const ConvSpec& spec() const { return spec_; }
  Param& weights() { return w_; }

 private:
  std::string name_;
  ConvSpec spec_;
  WeightMode weight_mode_;
  ConvInputKind kind_;
  int fixed_bits_;
  bool want_input_grad_;
  Param w_;                // (kh, kw, in_c, filters), latent full precision
  Tensor used_weights_;    // weights the forward pass actually applied
  BatchT cached_x_;
};

class LinearLayer : public Layer {
 public:
  LinearLayer(std::string name, int in_features, int out_features, WeightMode weight_mode,
              bool bias, uint64_t init_seed);

  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool training) override;
  BatchT backward(const BatchT& dy) override;
  void collect_params(std::vector<Param*>& out) override;

  Param& weights() { return w_; }

 private:
  std::string name_;
  int in_features_, out_features_;
  WeightMode weight_mode_;
  bool bias_;
  Param w_;  // (in, out)
  Param b_;  // (out)
  Tensor used_weights_;
  BatchT cached_x_;
  int in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(std::string name, int channels, double eps = 1e-5, double momentum = 0.9,
                 double gamma_init = 1.0, double beta_init = 0.0);

  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool training) override;
  BatchT backward(const BatchT& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_state(std::vector<std::pair<std::string, std::vector<double>*>>& out) override;

  void set_update_running_stats(bool u) { update_running_ = u; }
  BatchNormState inference_state() const;

 private:
  std::string name_;
  int channels_;
  double eps_, momentum_;
  Param gamma_, beta_;
  std::vector<double> run_mean_, run_var_;
  bool update_running_ = true;
  // backward caches
  BatchT xhat_;
  std::vector<double> inv_std_;
  size_t reduce_n_ = 0;
};

// Bounded activation h (clamp to [0,1]) optionally followed by quantize_k.
// Backward is the clip-gated straight-through rule: gradients pass where
// the pre-activation was inside [0,1].
class ActQuantLayer : public Layer {
 public:
  ActQuantLayer(std::string name, bool quantize, int k);

  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool training) override;
  BatchT backward(const BatchT& dy) override;

 private:
  std::string name_;
  bool quantize_;
  int k_;
  std::vector<uint8_t> pass_mask_;
  int n_ = 0, h_ = 0, w_ = 0, c_ = 0;
};

class MaxPoolLayer : public Layer {
 public:
  MaxPoolLayer(std::string name, int pool_h, int pool_w);

  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool training) override;
  BatchT backward(const BatchT& dy) override;

 private:
  std::string name_;
  int ph_, pw_;
  std::vector<size_t> argmax_;
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

class DropoutLayer : public Layer {
 public:
  DropoutLayer(std::string name, double rate);

  const std::string& name() const override { return name_; }
  BatchT forward(const BatchT& x, bool training) override;
  BatchT backward(const BatchT& dy) override;
  void begin_step(uint64_t step_seed) override { step_seed_ = step_seed; }

 private:
  std::string name_;
  double rate_;
  uint64_t step_seed_ = 0;
  std::vector<uint8_t> keep_;
};

class Network {
 public:
  void add(std::unique_ptr<Layer> layer);
  size_t layer_count() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }

  BatchT forward(const BatchT& x, bool training);
  // Forward in training mode, softmax cross-entropy loss, full backward.
  // Parameter gradients are accumulated; returns the mean loss.
  double loss_and_backward(const BatchT& x, const std::vector<int>& labels, int* correct = nullptr);
  // Forward in eval mode; loss and correct count without gradients.
  double eval_loss(const BatchT& x, const std::vector<int>& labels, int* correct = nullptr);
  // Loss without backward, in either mode; used by finite-difference checks.
  double loss_only(const BatchT& x, const std::vector<int>& labels, bool training);

  std::vector<Param*> params();
  std::vector<std::pair<std::string, std::vector<double>*>> state_tensors();
  void zero_grads();
  void begin_step(uint64_t step_seed);
  void set_update_running_stats(bool u);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct BuildOptions {
  bool binarize_hidden = true;      // binary weights for hidden conv/FC layers
  bool quantize_activations = true; // 1-bit activations after each hidden layer
  int activation_bits = 1;
  bool use_bounded_activation = true;
  double dropout_rate = 0.5;        // before the first FC token; 0 disables
  double bn_gamma_init = 1.0;
  double bn_beta_init = 0.5;        // centers pre-quantization values in [0,1]
  uint64_t seed = 0;
};

// Assembles the layer stack for a model config under a first-layer mode.
// The classifier (softmax head) always keeps full-precision weights.
Network build_network(const ModelConfig& cfg, const BuildOptions& opt);

// Encodes dataset windows for the network input: normalized reals for
// baseline, raw integer values for fpid, {0,1} bit planes for dbi/bil.
BatchT encode_batch(const std::vector<const FixedTensor*>& windows, FirstLayerMode mode);

}  // namespace bnf
