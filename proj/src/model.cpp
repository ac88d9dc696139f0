#include "bnf/model.hpp"

#include <iostream>
#include <sstream>

namespace bnf {

FirstLayerMode first_layer_mode_from_string(const std::string& s) {
  if (s == "baseline") return FirstLayerMode::Baseline;
  if (s == "fpid") return FirstLayerMode::Fpid;
  if (s == "dbi") return FirstLayerMode::Dbi;
  if (s == "bil") return FirstLayerMode::Bil;
  throw std::invalid_argument("unknown first-layer mode: " + s);
}

std::string to_string(FirstLayerMode m) {
  switch (m) {
    case FirstLayerMode::Baseline: return "baseline";
    case FirstLayerMode::Fpid: return "fpid";
    case FirstLayerMode::Dbi: return "dbi";
    case FirstLayerMode::Bil: return "bil";
  }
  return "?";
}

bool LayerSpec::operator==(const LayerSpec& o) const {
  return kind == o.kind && filters == o.filters && kernel == o.kernel && units == o.units &&
         pool == o.pool;
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  std::vector<LayerSpec> parse() {
    if (s_.empty()) throw ParseError(0, "empty architecture string");
    std::vector<LayerSpec> out = parse_layers();
    if (pos_ != s_.size()) throw ParseError(pos_, "unexpected character '" + charAt(pos_) + "'");
    return out;
  }

 private:
  std::vector<LayerSpec> parse_layers() {
    std::vector<LayerSpec> out;
    parse_layer(out);
    while (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
      ++pos_;
      parse_layer(out);
    }
    return out;
  }

  void parse_layer(std::vector<LayerSpec>& out) {
    if (pos_ >= s_.size()) throw ParseError(pos_, "expected layer token");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      const size_t int_off = pos_;
      const int n = parse_int("integer");
      if (pos_ + 1 < s_.size() && s_[pos_] == '-' && s_[pos_ + 1] == 'C') {
        pos_ += 2;
        const size_t k_off = pos_;
        const int k = parse_int("kernel size");
        if (k < 1) throw ParseError(k_off, "kernel size must be >= 1");
        if (n < 1) throw ParseError(int_off, "filter count must be >= 1");
        LayerSpec l;
        l.kind = LayerSpec::Kind::Conv;
        l.filters = n;
        l.kernel = k;
        out.push_back(l);
        return;
      }
      if (pos_ + 1 < s_.size() && s_[pos_] == 'x' && s_[pos_ + 1] == '(') {
        if (n < 1) throw ParseError(int_off, "repetition count must be >= 1");
        pos_ += 2;
        const std::vector<LayerSpec> body = parse_layers();
        if (pos_ >= s_.size() || s_[pos_] != ')') throw ParseError(pos_, "expected ')'");
        ++pos_;
        for (int r = 0; r < n; ++r) out.insert(out.end(), body.begin(), body.end());
        return;
      }
      throw ParseError(pos_, "expected '-C' or 'x(' after integer");
    }
    if (s_.compare(pos_, 7, "Softmax") == 0) {
      pos_ += 7;
      LayerSpec l;
      l.kind = LayerSpec::Kind::SoftmaxHead;
      out.push_back(l);
      return;
    }
    if (s_.compare(pos_, 2, "MP") == 0) {
      pos_ += 2;
      const size_t off = pos_;
      const int p = parse_int("pool window");
      if (p < 1) throw ParseError(off, "pool window must be >= 1");
      LayerSpec l;
      l.kind = LayerSpec::Kind::MaxPool;
      l.pool = p;
      out.push_back(l);
      return;
    }
    if (s_.compare(pos_, 2, "FC") == 0) {
      pos_ += 2;
      const size_t off = pos_;
      const int u = parse_int("unit count");
      if (u < 1) throw ParseError(off, "unit count must be >= 1");
      LayerSpec l;
      l.kind = LayerSpec::Kind::FullyConnected;
      l.units = u;
      out.push_back(l);
      return;
    }
    throw ParseError(pos_, "unknown token '" + charAt(pos_) + "'");
  }

  int parse_int(const std::string& what) {
    const size_t start = pos_;
    long v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 1000000) throw ParseError(start, what + " too large");
      ++pos_;
    }
    if (pos_ == start) throw ParseError(pos_, "expected " + what);
    return static_cast<int>(v);
  }

  std::string charAt(size_t i) const {
    return i < s_.size() ? std::string(1, s_[i]) : std::string("<end>");
  }

  const std::string& s_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<LayerSpec> parse_architecture(const std::string& text) {
  return Parser(text).parse();
}

std::string render_architecture(const std::vector<LayerSpec>& layers) {
  std::ostringstream os;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (i) os << "+";
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::Conv: os << l.filters << "-C" << l.kernel; break;
      case LayerSpec::Kind::MaxPool: os << "MP" << l.pool; break;
      case LayerSpec::Kind::FullyConnected: os << "FC" << l.units; break;
      case LayerSpec::Kind::SoftmaxHead: os << "Softmax"; break;
    }
  }
  return os.str();
}

int ModelConfig::conv_layer_count() const {
  int n = 0;
  for (const auto& l : layers) n += (l.kind == LayerSpec::Kind::Conv);
  return n;
}

int ModelConfig::weighted_layer_count() const {
  int n = 0;
  for (const auto& l : layers) {
    n += (l.kind == LayerSpec::Kind::Conv || l.kind == LayerSpec::Kind::FullyConnected);
  }
  return n;
}

std::pair<int, int> ModelConfig::conv_kernel(int kernel) const {
  return axis == ConvAxisPolicy::TimeOnly ? std::make_pair(1, kernel)
                                          : std::make_pair(kernel, kernel);
}

std::pair<int, int> ModelConfig::pool_window(int pool) const {
  return axis == ConvAxisPolicy::TimeOnly ? std::make_pair(1, pool)
                                          : std::make_pair(pool, pool);
}

void ModelConfig::validate() const {
  if (layers.empty()) throw std::invalid_argument("ModelConfig: no layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    const bool last = (i + 1 == layers.size());
    if ((layers[i].kind == LayerSpec::Kind::SoftmaxHead) != last) {
      throw std::invalid_argument("ModelConfig: exactly one Softmax head, at the end");
    }
  }
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
  if (bit_width < 1 || bit_width > 16) throw std::invalid_argument("ModelConfig: M must be 1..16");
  if (mode == FirstLayerMode::Bil) {
    if (bil_filters < 1) throw std::invalid_argument("ModelConfig: bil mode requires K >= 1");
  } else if (bil_filters != 0) {
    throw std::invalid_argument("ModelConfig: K set but mode is not bil");
  }
  if (input_shape.rank() != 3) {
    throw std::invalid_argument("ModelConfig: input shape must be H x W x C");
  }

  // Walk the chain: spatial dims must stay >= pool windows, and once the
  // net flattens for an FC layer no conv/pool may follow.
  int h = static_cast<int>(input_shape[0]);
  int w = static_cast<int>(input_shape[1]);
  bool flattened = false;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        if (flattened) throw std::invalid_argument("ModelConfig: conv after FC");
        break;
      }
      case LayerSpec::Kind::MaxPool: {
        if (flattened) throw std::invalid_argument("ModelConfig: pool after FC");
        const auto [ph, pw] = pool_window(l.pool);
        if (ph > h || pw > w) {
          throw std::invalid_argument("ModelConfig: pool window exceeds feature map " +
                                      std::to_string(h) + "x" + std::to_string(w));
        }
        h /= ph;
        w /= pw;
        break;
      }
      case LayerSpec::Kind::FullyConnected: flattened = true; break;
      case LayerSpec::Kind::SoftmaxHead: break;
    }
  }
}

std::string preset_architecture(const std::string& name) {
  if (name == "pamap2") {
    // The published string contains "64-C64"; a 64-wide kernel over kernel-3
    // siblings is read as a typo for 64-C3 and normalized here.
    return "24-C3+MP2+32-C3+MP2+64-C3+MP2+FC256+Softmax";
  }
  if (name == "svhn") {
    return "48-C5+MP2+2x(64-C3)+MP2+3x(128-C3)+FC512+Softmax";
  }
  if (name == "cifar10") {
    return "2x(128-C3)+MP2+2x(256-C3)+MP2+2x(512-C3)+MP2+FC1024+Softmax";
  }
  throw std::invalid_argument("unknown preset: " + name);
}

ModelConfig preset(const std::string& name, FirstLayerMode mode, int bil_filters, int bit_width) {
  ModelConfig cfg;
  if (name == "pamap2") {
    static bool warned = false;
    if (!warned) {
      std::cerr << "bnf: note: pamap2 preset normalizes the layer token 64-C64 to 64-C3\n";
      warned = true;
    }
    cfg.input_shape = Shape{7, 100, 1};
    cfg.axis = ConvAxisPolicy::TimeOnly;
    cfg.num_classes = 7;
  } else if (name == "svhn") {
    cfg.input_shape = Shape{40, 40, 3};
    cfg.axis = ConvAxisPolicy::Full2d;
    cfg.num_classes = 10;
  } else if (name == "cifar10") {
    cfg.input_shape = Shape{32, 32, 3};
    cfg.axis = ConvAxisPolicy::Full2d;
    cfg.num_classes = 10;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  cfg.layers = parse_architecture(preset_architecture(name));
  cfg.mode = mode;
  cfg.bil_filters = (mode == FirstLayerMode::Bil) ? bil_filters : 0;
  cfg.bit_width = bit_width;
  cfg.validate();
  return cfg;
}

}  // namespace bnf
