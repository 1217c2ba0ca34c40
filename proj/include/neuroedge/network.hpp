// Forward and backward passes over a LayerGraph. Spiking activations are
// evaluated with their smooth rate abstraction, so the same code trains
// ANN graphs and fine-tunes converted SNN graphs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "neuroedge/layers.hpp"
#include "neuroedge/model_ir.hpp"
#include "neuroedge/tensor.hpp"

namespace neuroedge {

inline Tensor<double> apply_layer(const Layer& layer, const Tensor<double>& x) {
  return std::visit(
      overloaded{
          [&](const Conv2D& c) { return conv2d_forward(x, c.conv); },
          [&](const ReLU&) { return relu_forward(x); },
          [&](const Tanh&) {
            Tensor<double> y = x;
            for (double& v : y.data()) v = std::tanh(v);
            return y;
          },
          [&](const SpikingActivation& s) {
            Tensor<double> y = x;
            for (double& v : y.data()) v = s.forward(v);
            return y;
          },
          [&](const Pool& p) { return pool_forward(x, p.kind, p.size, p.stride); },
          [&](const Flatten&) { return x.reshaped({x.size()}); },
          [&](const Dense& d) { return dense_forward(x, d.dense); },
          [&](const Softmax&) {
            auto p = softmax<double>(x.data());
            return Tensor<double>(x.shape(), std::move(p));
          }},
      layer.op);
}

// Index one past the last layer that produces logits: the trailing softmax is
// folded into the loss.
inline std::size_t logits_end(const LayerGraph& graph) {
  if (!graph.layers.empty() && std::holds_alternative<Softmax>(graph.layers.back().op)) {
    return graph.layers.size() - 1;
  }
  return graph.layers.size();
}

// values[0] is the input; values[i + 1] is the output of layer i.
struct ForwardTrace {
  std::vector<Tensor<double>> values;
};

inline ForwardTrace forward_trace(const LayerGraph& graph, const Tensor<double>& input,
                                  std::size_t stop) {
  if (input.shape() != graph.input_shape) {
    throw ShapeError("network input shape " + shape_to_string(input.shape()) + " != graph input " +
                     shape_to_string(graph.input_shape));
  }
  ForwardTrace trace;
  trace.values.reserve(stop + 1);
  trace.values.push_back(input);
  for (std::size_t i = 0; i < stop; ++i) {
    trace.values.push_back(apply_layer(graph.layers[i], trace.values.back()));
  }
  return trace;
}

inline std::vector<double> logits(const LayerGraph& graph, const Tensor<double>& input) {
  Tensor<double> x = input;
  if (x.shape() != graph.input_shape) {
    throw ShapeError("network input shape " + shape_to_string(x.shape()) + " != graph input " +
                     shape_to_string(graph.input_shape));
  }
  const std::size_t stop = logits_end(graph);
  for (std::size_t i = 0; i < stop; ++i) x = apply_layer(graph.layers[i], x);
  return x.storage();
}

inline std::vector<double> predict_proba(const LayerGraph& graph, const Tensor<double>& input) {
  return softmax<double>(logits(graph, input));
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline std::size_t predict(const LayerGraph& graph, const Tensor<double>& input) {
  return argmax(logits(graph, input));
}

// Flat parameter views; order is weights (or kernel) followed by bias.
struct ParamSpans {
  std::span<double> weights;
  std::span<double> bias;
};

inline std::optional<ParamSpans> params_of(Layer& layer) {
  if (auto* c = std::get_if<Conv2D>(&layer.op)) return ParamSpans{c->conv.kernel.data(), c->conv.bias};
  if (auto* d = std::get_if<Dense>(&layer.op)) return ParamSpans{d->dense.weights.data(), d->dense.bias};
  return std::nullopt;
}

// One flat buffer per layer (empty for parameter-free layers).
struct Gradients {
  std::vector<std::vector<double>> layers;

  static Gradients zeros_like(const LayerGraph& graph) {
    Gradients g;
    g.layers.resize(graph.layers.size());
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
      const auto& op = graph.layers[i].op;
      if (const auto* c = std::get_if<Conv2D>(&op)) g.layers[i].assign(c->conv.param_count(), 0.0);
      if (const auto* d = std::get_if<Dense>(&op)) g.layers[i].assign(d->dense.param_count(), 0.0);
    }
    return g;
  }

  void add(const Gradients& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (std::size_t j = 0; j < layers[i].size(); ++j) layers[i][j] += other.layers[i][j];
    }
  }

  void clear() {
    for (auto& l : layers) std::fill(l.begin(), l.end(), 0.0);
  }
};

// Backpropagates d(loss)/d(output of layer stop-1) and accumulates parameter
// gradients into `grads`. Returns the gradient with respect to the input.
inline Tensor<double> backward(const LayerGraph& graph, const ForwardTrace& trace,
                               Tensor<double> upstream, Gradients& grads) {
  const std::size_t stop = trace.values.size() - 1;
  for (std::size_t i = stop; i-- > 0;) {
    const Layer& layer = graph.layers[i];
    const Tensor<double>& in = trace.values[i];
    const Tensor<double>& out = trace.values[i + 1];
    std::vector<double>& g = grads.layers[i];
    upstream = std::visit(
        overloaded{
            [&](const Conv2D& c) {
              auto cg = conv2d_backward(in, c.conv, upstream);
              const std::size_t nk = cg.kernel.size();
              for (std::size_t j = 0; j < nk; ++j) g[j] += cg.kernel[j];
              for (std::size_t j = 0; j < cg.bias.size(); ++j) g[nk + j] += cg.bias[j];
              return std::move(cg.input);
            },
            [&](const Dense& d) {
              auto dg = dense_backward(in, d.dense, upstream);
              const std::size_t nw = dg.weights.size();
              for (std::size_t j = 0; j < nw; ++j) g[j] += dg.weights[j];
              for (std::size_t j = 0; j < dg.bias.size(); ++j) g[nw + j] += dg.bias[j];
              return std::move(dg.input);
            },
            [&](const ReLU&) { return relu_backward(in, upstream); },
            [&](const Tanh&) {
              Tensor<double> r = upstream;
              for (std::size_t j = 0; j < r.size(); ++j) r[j] *= 1.0 - out[j] * out[j];
              return r;
            },
            [&](const SpikingActivation& s) {
              Tensor<double> r = upstream;
              for (std::size_t j = 0; j < r.size(); ++j) r[j] *= s.derivative(in[j]);
              return r;
            },
            [&](const Pool& p) { return pool_backward(in, p.kind, p.size, p.stride, upstream); },
            [&](const Flatten&) { return upstream.reshaped(in.shape()); },
            [&](const Softmax&) {
              // Jacobian-vector product of softmax.
              double dot = 0.0;
              for (std::size_t j = 0; j < out.size(); ++j) dot += out[j] * upstream[j];
              Tensor<double> r(in.shape());
              for (std::size_t j = 0; j < out.size(); ++j) r[j] = out[j] * (upstream[j] - dot);
              return r;
            }},
        layer.op);
  }
  return upstream;
}

}  // namespace neuroedge
