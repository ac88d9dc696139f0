#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "bnf/tensor.hpp"

namespace bnf {

enum class FirstLayerMode { Baseline, Fpid, Dbi, Bil };
enum class ConvAxisPolicy { Full2d, TimeOnly };

FirstLayerMode first_layer_mode_from_string(const std::string& s);
std::string to_string(FirstLayerMode m);

// One token of the architecture notation.
struct LayerSpec {
  enum class Kind { Conv, MaxPool, FullyConnected, SoftmaxHead };
  Kind kind = Kind::SoftmaxHead;
  int filters = 0;  // Conv
  int kernel = 0;   // Conv
  int units = 0;    // FullyConnected
  int pool = 0;     // MaxPool

  bool operator==(const LayerSpec& o) const;
};

struct ParseError : std::runtime_error {
  size_t offset;
  ParseError(size_t off, const std::string& msg)
      : std::runtime_error(msg + " at offset " + std::to_string(off)), offset(off) {}
};

// Grammar:
//   layers    := layer (("+" | "-") layer)*
//   layer     := INT "-C" INT | "MP" INT | "FC" INT | "Softmax"
//              | INT "x(" layers ")"
// Repetition groups expand in place. A "-" directly before "C" binds to the
// conv token; elsewhere it separates. Malformed tokens, zero repetitions and
// zero-sized windows are rejected with the character offset.
std::vector<LayerSpec> parse_architecture(const std::string& text);

// Canonical form: "+"-separated, expanded (no repetition groups).
std::string render_architecture(const std::vector<LayerSpec>& layers);

struct ModelConfig {
  std::vector<LayerSpec> layers;
  FirstLayerMode mode = FirstLayerMode::Baseline;
  int bil_filters = 0;  // K, present iff mode == Bil
  int bit_width = 8;    // M
  Shape input_shape;    // H x W x C
  ConvAxisPolicy axis = ConvAxisPolicy::Full2d;
  int num_classes = 0;

  int conv_layer_count() const;      // n
  int weighted_layer_count() const;  // conv + FC tokens (softmax head excluded)
  // Kernel dims for a conv token under the axis policy.
  std::pair<int, int> conv_kernel(int kernel) const;
  std::pair<int, int> pool_window(int pool) const;

  // Checks the softmax head, BIL fields, and that spatial dims and channel
  // counts chain consistently from input_shape to the classifier.
  void validate() const;
};

// Built-in presets: "pamap2", "svhn", "cifar10".
ModelConfig preset(const std::string& name, FirstLayerMode mode, int bil_filters = 0,
                   int bit_width = 8);

// The architecture string a preset is built from (after normalization).
std::string preset_architecture(const std::string& name);

}  // namespace bnf
