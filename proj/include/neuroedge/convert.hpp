// ANN -> SNN conversion: pooling rewrite, ReLU -> integrate-and-fire
// substitution, off-chip rate encoder, and rate-mode fine-tuning.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "neuroedge/imaging.hpp"
#include "neuroedge/model_ir.hpp"
#include "neuroedge/network.hpp"
#include "neuroedge/train.hpp"

namespace neuroedge {

class ConversionError : public GraphError {
 public:
  using GraphError::GraphError;
};

// Replaces each 2x2 stride-2 pooling layer with a 2x2 stride-2 convolution
// initialised to average pooling, followed by a ReLU so the new layer has
// its own (spiking-to-be) neurons. On non-negative input the pair computes
// average pooling exactly.
inline LayerGraph rewrite_pooling(const LayerGraph& graph) {
  if (graph.flavor != Flavor::ann) throw ConversionError("rewrite_pooling expects an ann graph");
  LayerGraph out(graph.input_shape, graph.flavor);
  for (const auto& l : graph.layers) {
    const auto* p = std::get_if<Pool>(&l.op);
    if (!p) {
      out.add(l.op, l.name);
      continue;
    }
    if (p->size != 2 || p->stride != 2) {
      throw ConversionError("cannot rewrite " + std::to_string(p->size) + "x" +
                            std::to_string(p->size) + " stride " + std::to_string(p->stride) +
                            " pooling (" + l.name + "); only 2x2 stride 2 is supported");
    }
    out.add(Conv2D{average_pool_conv(l.in_shape.at(2))}, l.name + "_strided");
    out.add(ReLU{}, l.name + "_strided_relu");
  }
  return out;
}

struct NeuronConfig {
  double gain = 1.0;       // Hz per unit of input current
  double amplitude = 1.0;  // value carried by one spike in rate mode
  double dt = 0.001;
  ResetMode reset = ResetMode::subtract;
  double tau_rc = 0.0;
};

inline SpikingActivation make_neuron(const NeuronConfig& c) {
  SpikingActivation s;
  s.gain = c.gain;
  s.amplitude = c.amplitude;
  s.dt = c.dt;
  s.reset = c.reset;
  s.tau_rc = c.tau_rc;
  s.validate();
  return s;
}

// Every ReLU becomes a spiking activation with the given parameters; the
// result is snn-flavored. Rate-mode output of each unit is
// amplitude * gain * relu(x).
inline LayerGraph substitute_activations(const LayerGraph& graph, const NeuronConfig& neuron = {}) {
  if (graph.flavor != Flavor::ann) throw ConversionError("substitute_activations expects an ann graph");
  LayerGraph out = graph;
  out.flavor = Flavor::snn;
  for (auto& l : out.layers) {
    if (std::holds_alternative<ReLU>(l.op)) {
      l.op = make_neuron(neuron);
    } else if (std::holds_alternative<Tanh>(l.op)) {
      throw ConversionError("activation " + l.name + " (tanh) has no spiking equivalent");
    }
  }
  return out;
}

struct EncoderConfig {
  double gain = 100.0;       // Hz per unit pixel intensity
  double max_rate = 1000.0;  // Hz
  double dt = 0.001;
};

inline bool has_encoder(const LayerGraph& g) {
  for (const auto& l : g.layers) {
    if (const auto* c = std::get_if<Conv2D>(&l.op); c && c->off_chip) return true;
  }
  return false;
}

// Prepends the off-chip 1x1 encoder (w = 1, b = 0 per channel) and its
// spiking activation. Amplitude 1/gain keeps the rate-mode value equal to
// the pixel intensity, so downstream weights see the same input as the ANN.
inline LayerGraph attach_encoder(const LayerGraph& graph, const EncoderConfig& enc = {}) {
  if (graph.flavor != Flavor::snn) throw ConversionError("attach_encoder expects an snn graph");
  if (has_encoder(graph)) throw ConversionError("graph already has an encoder");
  if (graph.input_shape.size() != 3) throw ConversionError("encoder needs a rows x cols x channels input");
  const std::size_t c = graph.input_shape[2];
  Conv2D conv{ConvLayer<double>{Tensor<double>({1, 1, c, c}), std::vector<double>(c, 0.0), 1,
                                Padding::valid},
              true};
  for (std::size_t i = 0; i < c; ++i) conv.conv.kernel[i * c + i] = 1.0;
  SpikingActivation s = make_neuron({enc.gain, 1.0 / enc.gain, enc.dt, ResetMode::subtract, 0.0});
  s.max_rate = enc.max_rate;

  LayerGraph out(graph.input_shape, Flavor::snn);
  out.add(conv, "encoder");
  out.add(s, "encoder_spikes");
  for (const auto& l : graph.layers) out.add(l.op, l.name);
  return out;
}

inline std::vector<Example> to_examples(const Dataset& d) {
  std::vector<Example> out;
  out.reserve(d.size());
  for (const auto& s : d.samples) out.push_back({s.pixels, s.label});
  return out;
}

// Second training step in rate mode. Zero epochs returns the graph unchanged.
inline LayerGraph finetune_spiking(const LayerGraph& graph, std::span<const Example> data,
                                   const TrainConfig& cfg) {
  if (graph.flavor != Flavor::snn) throw ConversionError("finetune_spiking expects an snn graph");
  if (cfg.epochs == 0) return graph;
  return train(graph, data, cfg).graph;
}

struct ConvertConfig {
  // Hidden neurons: gain chosen per layer so that the given percentile of
  // calibration activations fires at target_rate; amplitude = 1/gain keeps
  // the rate-mode function identical to the rewritten ANN.
  bool normalize = true;
  double target_rate = 400.0;  // Hz
  double percentile = 0.999;
  double hidden_gain = 100.0;  // used when normalize is false
  std::size_t calibration_samples = 64;
  double dt = 0.001;
  EncoderConfig encoder{};
  TrainConfig finetune{0, 16, 0.005, 0.9, 0, 4, 0};
};

namespace detail {

inline double percentile_of(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

// Chooses per-activation gains from the positive activations observed on
// calibration inputs.
inline void set_gains(LayerGraph& g, std::span<const Example> data, const ConvertConfig& cfg) {
  std::vector<std::vector<double>> seen(g.layers.size());
  if (cfg.normalize) {
    const std::size_t n = std::min(cfg.calibration_samples, data.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto trace = forward_trace(g, data[i].input, g.layers.size());
      for (std::size_t li = 0; li < g.layers.size(); ++li) {
        if (!std::holds_alternative<SpikingActivation>(g.layers[li].op)) continue;
        // trace.values[li] is the activation's input.
        for (double v : trace.values[li].data()) {
          if (v > 0.0) seen[li].push_back(v);
        }
      }
    }
  }
  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    auto* s = std::get_if<SpikingActivation>(&g.layers[li].op);
    if (!s) continue;
    if (li > 0) {
      // The encoder keeps its configured gain.
      const auto* c = std::get_if<Conv2D>(&g.layers[li - 1].op);
      if (c && c->off_chip) continue;
    }
    double gain = cfg.hidden_gain;
    if (cfg.normalize) {
      const double p = percentile_of(std::move(seen[li]), cfg.percentile);
      if (p > 0.0) gain = cfg.target_rate / p;
    }
    s->gain = gain;
    s->amplitude = 1.0 / gain;
  }
}

}  // namespace detail

// rewrite_pooling -> substitute_activations -> attach_encoder ->
// finetune_spiking -> per-layer gain selection. Rate-mode outputs do not
// depend on the gains (amplitude * gain == 1), so gains are chosen last, from
// the fine-tuned activation statistics. The result passes the snn invariants.
inline LayerGraph convert(const LayerGraph& ann, std::span<const Example> data, const ConvertConfig& cfg) {
  if (ann.flavor != Flavor::ann) throw ConversionError("input graph is already spiking");
  if (cfg.normalize && data.empty()) throw ConversionError("gain normalization needs calibration data");
  LayerGraph g = substitute_activations(
      rewrite_pooling(ann), NeuronConfig{cfg.hidden_gain, 1.0 / cfg.hidden_gain, cfg.dt});
  EncoderConfig enc = cfg.encoder;
  enc.dt = cfg.dt;
  g = attach_encoder(g, enc);
  g.validate();
  g = finetune_spiking(g, data, cfg.finetune);
  detail::set_gains(g, data, cfg);
  g.validate();
  return g;
}

}  // namespace neuroedge
