// Architecture description for the VGG-style classifiers and the concrete
// layer graph they instantiate into.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "neuroedge/layers.hpp"
#include "neuroedge/rng.hpp"
#include "neuroedge/tensor.hpp"

namespace neuroedge {

class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Downsample { max_pool, strided_conv };

inline const char* to_string(Downsample d) {
  return d == Downsample::max_pool ? "max_pool" : "strided_conv";
}

struct ModelSpec {
  int blocks = 2;
  std::vector<int> kernels{16, 24};  // one entry per block
  std::array<int, 2> fc{100, 80};
  Downsample downsample = Downsample::max_pool;
  int classes = 7;
  std::array<int, 3> input{48, 48, 1};  // rows, cols, channels
  bool strict_space = false;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline std::string describe(const ModelSpec& spec) {
  std::string out = "blocks=" + std::to_string(spec.blocks) + " K=[";
  for (std::size_t i = 0; i < spec.kernels.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(spec.kernels[i]);
  }
  out += "] FC=[" + std::to_string(spec.fc[0]) + "," + std::to_string(spec.fc[1]) + "]";
  return out;
}

struct ParamRange {
  int min = 0;
  int max = 0;
  int step = 1;

  std::size_t count() const { return static_cast<std::size_t>((max - min) / step + 1); }
  int value(std::size_t index) const { return min + static_cast<int>(index) * step; }
  bool contains(int v) const { return v >= min && v <= max && (v - min) % step == 0; }
  std::size_t index_of(int v) const { return static_cast<std::size_t>((v - min) / step); }
  std::vector<int> values() const {
    std::vector<int> out;
    for (int v = min; v <= max; v += step) out.push_back(v);
    return out;
  }

  void validate(const std::string& name) const {
    if (step <= 0) throw InvalidSpec(name + ": step must be positive");
    if (min > max) throw InvalidSpec(name + ": min > max");
    if ((max - min) % step != 0) throw InvalidSpec(name + ": step does not divide (max - min)");
  }

  friend bool operator==(const ParamRange&, const ParamRange&) = default;
};

// Per-parameter grids of the architecture search.
struct SearchSpace {
  ParamRange blocks{2, 4, 1};
  std::array<ParamRange, 4> kernels{ParamRange{6, 16, 2}, ParamRange{24, 32, 4},
                                    ParamRange{36, 48, 4}, ParamRange{52, 64, 4}};
  ParamRange fc1{100, 120, 5};
  ParamRange fc2{80, 100, 5};

  static SearchSpace standard() { return SearchSpace{}; }

  void validate() const {
    blocks.validate("Block");
    for (std::size_t i = 0; i < kernels.size(); ++i) kernels[i].validate("K" + std::to_string(i + 1));
    fc1.validate("FC1");
    fc2.validate("FC2");
    if (blocks.min < 1 || blocks.max > 4) throw InvalidSpec("Block range must lie within [1, 4]");
  }

  bool contains(const ModelSpec& spec) const {
    if (!blocks.contains(spec.blocks)) return false;
    if (spec.kernels.size() != static_cast<std::size_t>(spec.blocks)) return false;
    for (int b = 0; b < spec.blocks; ++b) {
      if (!kernels[static_cast<std::size_t>(b)].contains(spec.kernels[static_cast<std::size_t>(b)]))
        return false;
    }
    return fc1.contains(spec.fc[0]) && fc2.contains(spec.fc[1]);
  }

  friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

// Returns Table-1 range violations as human-readable messages.
inline std::vector<std::string> space_violations(const ModelSpec& spec) {
  const SearchSpace space = SearchSpace::standard();
  std::vector<std::string> issues;
  if (!space.blocks.contains(spec.blocks)) {
    issues.push_back("Block=" + std::to_string(spec.blocks) + " outside 2-4");
  }
  for (std::size_t b = 0; b < spec.kernels.size() && b < 4; ++b) {
    const ParamRange& r = space.kernels[b];
    if (!r.contains(spec.kernels[b])) {
      issues.push_back("K" + std::to_string(b + 1) + "=" + std::to_string(spec.kernels[b]) +
                       " outside " + std::to_string(r.min) + "-" + std::to_string(r.max) +
                       " step " + std::to_string(r.step));
    }
  }
  if (!space.fc1.contains(spec.fc[0])) {
    issues.push_back("FC1=" + std::to_string(spec.fc[0]) + " outside 100-120 step 5");
  }
  if (!space.fc2.contains(spec.fc[1])) {
    issues.push_back("FC2=" + std::to_string(spec.fc[1]) + " outside 80-100 step 5");
  }
  return issues;
}

// Throws InvalidSpec on structural problems, or on Table-1 violations when
// strict_space is set; otherwise returns the violations as warnings.
inline std::vector<std::string> validate(const ModelSpec& spec) {
  if (spec.blocks < 1) throw InvalidSpec("blocks must be >= 1");
  if (spec.kernels.size() != static_cast<std::size_t>(spec.blocks)) {
    throw InvalidSpec("kernels list length (" + std::to_string(spec.kernels.size()) +
                      ") != blocks (" + std::to_string(spec.blocks) + ")");
  }
  for (int k : spec.kernels) {
    if (k < 1) throw InvalidSpec("kernel counts must be positive");
  }
  if (spec.fc[0] < 1 || spec.fc[1] < 1) throw InvalidSpec("FC widths must be positive");
  if (spec.classes < 2) throw InvalidSpec("classes must be >= 2");
  if (spec.input[0] < 1 || spec.input[1] < 1 || spec.input[2] < 1) {
    throw InvalidSpec("input extents must be positive");
  }
  int h = spec.input[0], w = spec.input[1];
  for (int b = 0; b < spec.blocks; ++b) {
    if (h < 2 || w < 2) {
      throw InvalidSpec("block " + std::to_string(b + 1) + " downsamples a " + std::to_string(h) +
                        "x" + std::to_string(w) + " map");
    }
    h /= 2;
    w /= 2;
  }
  auto issues = space_violations(spec);
  if (spec.strict_space && !issues.empty()) {
    std::string msg = "spec violates Table-1 ranges:";
    for (const auto& s : issues) msg += " " + s + ";";
    throw InvalidSpec(msg);
  }
  return issues;
}

// Published best architectures per device (input 48x48x1, 7 classes).
struct NamedSpec {
  std::string name;
  ModelSpec spec;
};

inline std::vector<NamedSpec> device_architectures() {
  auto make = [](std::vector<int> k, int fc1, int fc2) {
    ModelSpec s;
    s.blocks = static_cast<int>(k.size());
    s.kernels = std::move(k);
    s.fc = {fc1, fc2};
    return s;
  };
  return {
      {"Pi", make({16, 24}, 100, 80)},
      {"Jetson-L", make({10, 28}, 120, 85)},
      {"Jetson-H", make({16, 24}, 100, 80)},
      {"Pi + NCS2", make({16, 24}, 100, 80)},
      {"Pi + TPU", make({16, 32}, 115, 85)},
      {"Coral Dev", make({18, 24}, 110, 95)},
      {"Intel Loihi", make({12, 22, 48}, 100, 85)},
  };
}

inline ModelSpec device_spec(const std::string& name) {
  for (const auto& n : device_architectures()) {
    if (n.name == name) return n.spec;
  }
  throw InvalidSpec("no published architecture named '" + name + "'");
}

// ---------------------------------------------------------------------------
// Layer operations

enum class ResetMode { subtract, zero };

// Integrate-and-fire unit with a smooth rate abstraction used for training:
// rate(x) = gain * max(0, x) spikes/s, optionally capped at max_rate. The
// value passed downstream in rate mode is amplitude * rate(x).
struct SpikingActivation {
  double gain = 1.0;
  double amplitude = 1.0;
  double v_threshold = 1.0;
  ResetMode reset = ResetMode::subtract;
  double dt = 0.001;
  double max_rate = 0.0;  // 0 disables the cap
  double tau_rc = 0.0;    // membrane leak time constant; 0 is non-leaky

  double rate(double x) const {
    double r = gain * (x > 0.0 ? x : 0.0);
    if (max_rate > 0.0 && r > max_rate) r = max_rate;
    return r;
  }
  double forward(double x) const { return amplitude * rate(x); }
  double derivative(double x) const {
    if (!(x > 0.0)) return 0.0;
    if (max_rate > 0.0 && gain * x >= max_rate) return 0.0;
    return amplitude * gain;
  }

  void validate() const {
    if (!(gain > 0.0)) throw GraphError("spiking activation: gain must be > 0");
    if (!(dt > 0.0)) throw GraphError("spiking activation: dt must be > 0");
    if (v_threshold != 1.0) throw GraphError("spiking activation: threshold is fixed at 1.0");
    if (max_rate < 0.0 || tau_rc < 0.0) {
      throw GraphError("spiking activation: max_rate and tau_rc must be non-negative");
    }
  }

  friend bool operator==(const SpikingActivation&, const SpikingActivation&) = default;
};

struct Conv2D {
  ConvLayer<double> conv;
  bool off_chip = false;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

// Present so foreign graphs with non-ReLU activations can be represented and
// rejected by conversion.
struct Tanh {
  friend bool operator==(const Tanh&, const Tanh&) = default;
};

struct Pool {
  PoolKind kind = PoolKind::max;
  std::size_t size = 2;
  std::size_t stride = 2;
  friend bool operator==(const Pool&, const Pool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

struct Dense {
  DenseLayer<double> dense;
  friend bool operator==(const Dense&, const Dense&) = default;
};

struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

using LayerOp = std::variant<Conv2D, ReLU, Tanh, SpikingActivation, Pool, Flatten, Dense, Softmax>;

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

inline const char* op_name(const LayerOp& op) {
  return std::visit(overloaded{[](const Conv2D&) { return "conv2d"; },
                               [](const ReLU&) { return "relu"; },
                               [](const Tanh&) { return "tanh"; },
                               [](const SpikingActivation&) { return "spiking"; },
                               [](const Pool&) { return "pool"; },
                               [](const Flatten&) { return "flatten"; },
                               [](const Dense&) { return "dense"; },
                               [](const Softmax&) { return "softmax"; }},
                    op);
}

inline bool has_params(const LayerOp& op) {
  return std::holds_alternative<Conv2D>(op) || std::holds_alternative<Dense>(op);
}

inline bool is_activation(const LayerOp& op) {
  return std::holds_alternative<ReLU>(op) || std::holds_alternative<Tanh>(op) ||
         std::holds_alternative<SpikingActivation>(op);
}

inline Shape output_shape(const LayerOp& op, const Shape& in) {
  return std::visit(
      overloaded{
          [&](const Conv2D& c) -> Shape {
            if (in.size() != 3) throw ShapeError("conv2d expects a rank-3 input, got " + shape_to_string(in));
            if (in[2] != c.conv.cin()) {
              throw ShapeError("conv2d: input channels (" + std::to_string(in[2]) +
                               ") != kernel cin (" + std::to_string(c.conv.cin()) + ")");
            }
            const auto g = conv_geometry(in[0], in[1], c.conv.kh(), c.conv.kw(), c.conv.stride,
                                         c.conv.padding);
            return {g.out_h, g.out_w, c.conv.cout()};
          },
          [&](const Pool& p) -> Shape {
            if (in.size() != 3) throw ShapeError("pool expects a rank-3 input, got " + shape_to_string(in));
            return {pool_extent(in[0], p.size, p.stride), pool_extent(in[1], p.size, p.stride), in[2]};
          },
          [&](const Flatten&) -> Shape { return {shape_product(in)}; },
          [&](const Dense& d) -> Shape {
            if (shape_product(in) != d.dense.cin()) {
              throw ShapeError("dense: input length (" + std::to_string(shape_product(in)) +
                               ") != weights cin (" + std::to_string(d.dense.cin()) + ")");
            }
            return {d.dense.cout()};
          },
          [&](const auto&) -> Shape { return in; }},
      op);
}

struct Layer {
  LayerOp op;
  Shape in_shape;
  Shape out_shape;
  std::string name;

  friend bool operator==(const Layer&, const Layer&) = default;
};

enum class Flavor { ann, snn };

inline const char* to_string(Flavor f) { return f == Flavor::ann ? "ann" : "snn"; }

class LayerGraph {
 public:
  Flavor flavor = Flavor::ann;
  Shape input_shape;
  std::vector<Layer> layers;

  LayerGraph() = default;
  LayerGraph(Shape input, Flavor f) : flavor(f), input_shape(std::move(input)) {}

  // Appends a layer, inferring its shapes from the current tail.
  Layer& add(LayerOp op, std::string name = {}) {
    Shape in = layers.empty() ? input_shape : layers.back().out_shape;
    Shape out = output_shape(op, in);
    if (name.empty()) name = std::string(op_name(op)) + std::to_string(layers.size());
    layers.push_back(Layer{std::move(op), std::move(in), std::move(out), std::move(name)});
    return layers.back();
  }

  Layer& insert(std::size_t index, LayerOp op, std::string name = {}) {
    layers.insert(layers.begin() + static_cast<std::ptrdiff_t>(index),
                  Layer{std::move(op), {}, {}, std::move(name)});
    recompute_shapes();
    return layers[index];
  }

  void recompute_shapes() {
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Layer& l = layers[i];
      l.in_shape = cur;
      l.out_shape = output_shape(l.op, cur);
      if (l.name.empty()) l.name = std::string(op_name(l.op)) + std::to_string(i);
      cur = l.out_shape;
    }
  }

  const Shape& output_shape_of_graph() const {
    return layers.empty() ? input_shape : layers.back().out_shape;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
      if (const auto* c = std::get_if<Conv2D>(&l.op)) n += c->conv.param_count();
      if (const auto* d = std::get_if<Dense>(&l.op)) n += d->dense.param_count();
    }
    return n;
  }

  // Checks that shapes chain and the flavor invariants hold.
  void validate() const {
    check_shape(input_shape);
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = layers[i];
      if (l.in_shape != cur) {
        throw GraphError("layer " + std::to_string(i) + " (" + l.name + ") input " +
                         shape_to_string(l.in_shape) + " does not chain from " +
                         shape_to_string(cur));
      }
      if (output_shape(l.op, cur) != l.out_shape) {
        throw GraphError("layer " + std::to_string(i) + " (" + l.name + ") output shape mismatch");
      }
      if (const auto* c = std::get_if<Conv2D>(&l.op)) {
        if (c->conv.bias.size() != c->conv.cout()) throw GraphError("conv bias length mismatch");
      }
      if (const auto* d = std::get_if<Dense>(&l.op)) {
        if (d->dense.bias.size() != d->dense.cout()) throw GraphError("dense bias length mismatch");
      }
      if (const auto* s = std::get_if<SpikingActivation>(&l.op)) s->validate();
      cur = l.out_shape;
    }
    if (flavor == Flavor::snn) {
      std::size_t encoders = 0;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (std::holds_alternative<Pool>(l.op)) {
          throw GraphError("snn graph contains a pooling layer (" + l.name + ")");
        }
        if (std::holds_alternative<ReLU>(l.op) || std::holds_alternative<Tanh>(l.op)) {
          throw GraphError("snn graph contains a non-spiking activation (" + l.name + ")");
        }
        if (const auto* c = std::get_if<Conv2D>(&l.op); c && c->off_chip) {
          ++encoders;
          if (i != 0 || c->conv.kh() != 1 || c->conv.kw() != 1 || c->conv.stride != 1) {
            throw GraphError("off-chip encoder must be the first layer, 1x1, stride 1");
          }
        }
      }
      if (encoders > 1) throw GraphError("snn graph has more than one encoder");
    }
  }

  friend bool operator==(const LayerGraph&, const LayerGraph&) = default;
};

// ---------------------------------------------------------------------------
// Instantiation

namespace detail {

inline ConvLayer<double> he_conv(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
                                 std::size_t stride, Padding padding, Xoshiro256& rng) {
  ConvLayer<double> c{Tensor<double>({kh, kw, cin, cout}), std::vector<double>(cout, 0.0), stride,
                      padding};
  const double limit = std::sqrt(6.0 / static_cast<double>(kh * kw * cin));
  for (double& v : c.kernel.data()) v = rng.uniform(-limit, limit);
  return c;
}

inline DenseLayer<double> he_dense(std::size_t cin, std::size_t cout, Xoshiro256& rng) {
  DenseLayer<double> d{Tensor<double>({cin, cout}), std::vector<double>(cout, 0.0)};
  const double limit = std::sqrt(6.0 / static_cast<double>(cin));
  for (double& v : d.weights.data()) v = rng.uniform(-limit, limit);
  return d;
}

}  // namespace detail

// A 2x2 stride-2 convolution whose weights reproduce average pooling.
inline ConvLayer<double> average_pool_conv(std::size_t channels) {
  ConvLayer<double> c{Tensor<double>({2, 2, channels, channels}),
                      std::vector<double>(channels, 0.0), 2, Padding::valid};
  for (std::size_t ky = 0; ky < 2; ++ky) {
    for (std::size_t kx = 0; kx < 2; ++kx) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        c.kernel[((ky * 2 + kx) * channels + ch) * channels + ch] = 0.25;
      }
    }
  }
  return c;
}

// blocks x (conv3x3, relu, conv3x3, relu, downsample) + flatten + FC1 + relu +
// FC2 + relu + dense(classes) + softmax. Convolutions use "same" padding;
// downsampling halves rows and columns at the end of each block.
inline LayerGraph instantiate(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Xoshiro256 rng(seed);
  LayerGraph g({static_cast<std::size_t>(spec.input[0]), static_cast<std::size_t>(spec.input[1]),
                static_cast<std::size_t>(spec.input[2])},
               Flavor::ann);
  std::size_t cin = static_cast<std::size_t>(spec.input[2]);
  for (int b = 0; b < spec.blocks; ++b) {
    const auto k = static_cast<std::size_t>(spec.kernels[static_cast<std::size_t>(b)]);
    const std::string prefix = "block" + std::to_string(b + 1);
    g.add(Conv2D{detail::he_conv(3, 3, cin, k, 1, Padding::same, rng)}, prefix + "_conv1");
    g.add(ReLU{}, prefix + "_relu1");
    g.add(Conv2D{detail::he_conv(3, 3, k, k, 1, Padding::same, rng)}, prefix + "_conv2");
    g.add(ReLU{}, prefix + "_relu2");
    if (spec.downsample == Downsample::max_pool) {
      g.add(Pool{PoolKind::max, 2, 2}, prefix + "_pool");
    } else {
      g.add(Conv2D{average_pool_conv(k)}, prefix + "_down");
      g.add(ReLU{}, prefix + "_relu_down");
    }
    cin = k;
  }
  g.add(Flatten{}, "flatten");
  const std::size_t flat = g.output_shape_of_graph()[0];
  const auto fc1 = static_cast<std::size_t>(spec.fc[0]);
  const auto fc2 = static_cast<std::size_t>(spec.fc[1]);
  const auto classes = static_cast<std::size_t>(spec.classes);
  g.add(Dense{detail::he_dense(flat, fc1, rng)}, "fc1");
  g.add(ReLU{}, "fc1_relu");
  g.add(Dense{detail::he_dense(fc1, fc2, rng)}, "fc2");
  g.add(ReLU{}, "fc2_relu");
  g.add(Dense{detail::he_dense(fc2, classes, rng)}, "output");
  g.add(Softmax{}, "softmax");
  return g;
}

// Trainable parameter count, computed from the spec alone.
inline std::size_t param_count(const ModelSpec& spec) {
  validate(spec);
  std::size_t h = static_cast<std::size_t>(spec.input[0]);
  std::size_t w = static_cast<std::size_t>(spec.input[1]);
  std::size_t cin = static_cast<std::size_t>(spec.input[2]);
  std::size_t n = 0;
  for (int k_signed : spec.kernels) {
    const auto k = static_cast<std::size_t>(k_signed);
    n += 9 * cin * k + k;
    n += 9 * k * k + k;
    if (spec.downsample == Downsample::strided_conv) n += 4 * k * k + k;
    h /= 2;
    w /= 2;
    cin = k;
  }
  const std::size_t flat = h * w * cin;
  const auto fc1 = static_cast<std::size_t>(spec.fc[0]);
  const auto fc2 = static_cast<std::size_t>(spec.fc[1]);
  const auto classes = static_cast<std::size_t>(spec.classes);
  n += flat * fc1 + fc1;
  n += fc1 * fc2 + fc2;
  n += fc2 * classes + classes;
  return n;
}

}  // namespace neuroedge
