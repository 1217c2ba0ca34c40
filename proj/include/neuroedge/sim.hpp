// Clock-driven integrate-and-fire simulation of a converted network.
//
// The graph is compiled into populations: each spiking activation together
// with the convolution or dense layer that feeds it. Every timestep each
// population integrates the input delivered during the previous step,
// v += dt * gain * drive, emits at most one spike where v reaches the
// threshold, and delivers those spikes to the next population for the
// following step (one step of delay per layer). A spike from a unit with
// amplitude a contributes w * a / dt of drive, so time-averaged drive equals
// the rate-mode activation.
//
// A trailing dense layer is a non-spiking readout: its per-step input is
// recorded and decoded to class probabilities through softmax.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "neuroedge/imaging.hpp"
#include "neuroedge/model_ir.hpp"
#include "neuroedge/network.hpp"
#include "neuroedge/rng.hpp"

namespace neuroedge {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double v_min = -5.0;            // membrane floor
  // Membrane voltage after reset(). Half the threshold turns the spike count
  // into a rounded rather than floored rate, which halves quantization error
  // through deep pipelines. Use 0 for the textbook from-rest dynamics.
  double v_init = 0.5;
  double decode_window_ms = 20.0; // trailing window of the per-step trace
  double stable_ms = 5.0;         // decision must hold this long to count
  std::size_t probe_sample = 50;  // neurons sampled per population
  bool record_raster = true;
  bool record_voltage = false;
  std::uint64_t seed = 0;         // picks the probed neurons
};

// Spike (and optionally voltage) history of the sampled neurons of one
// population: spikes[i][t] for sampled neuron i at step t.
struct LayerRaster {
  std::string layer;
  std::vector<std::size_t> neurons;
  std::vector<std::vector<std::uint8_t>> spikes;
  std::vector<std::vector<float>> voltage;

  std::size_t steps() const { return spikes.empty() ? 0 : spikes.front().size(); }
  std::size_t spike_total() const {
    std::size_t n = 0;
    for (const auto& row : spikes) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), 1));
    return n;
  }
  double density() const {
    const double cells = static_cast<double>(neurons.size() * steps());
    return cells > 0 ? static_cast<double>(spike_total()) / cells : 0.0;
  }
};

struct PopulationStats {
  std::string name;
  std::size_t neurons = 0;
  bool off_chip = false;      // the encoder
  std::uint64_t spikes = 0;
  std::uint64_t synaptic_events = 0;  // deliveries caused by this population's spikes
  std::uint64_t updates = 0;
};

struct InferenceResult {
  double dt = 0.001;
  std::size_t steps = 0;
  std::size_t pipeline_depth = 0;  // steps before the readout can see input
  std::vector<std::vector<double>> probabilities;  // [step][class], trailing window
  std::vector<std::uint8_t> trace_decided;         // [step]
  std::vector<double> final_probabilities;         // whole window after the pipeline delay
  std::size_t label = 0;
  bool decided = false;
  std::optional<std::size_t> delay_steps;
  std::vector<PopulationStats> populations;
  std::vector<LayerRaster> raster;

  std::optional<double> delay_ms() const {
    if (!delay_steps) return std::nullopt;
    return static_cast<double>(*delay_steps) * dt * 1000.0;
  }
  std::uint64_t total_spikes(bool hidden_only = false) const {
    std::uint64_t n = 0;
    for (const auto& p : populations) {
      if (!(hidden_only && p.off_chip)) n += p.spikes;
    }
    return n;
  }
  std::uint64_t synaptic_events() const {
    std::uint64_t n = 0;
    for (const auto& p : populations) n += p.synaptic_events;
    return n;
  }
  // On-chip neuron updates (the off-chip encoder is excluded).
  std::uint64_t neuron_updates() const {
    std::uint64_t n = 0;
    for (const auto& p : populations) {
      if (!p.off_chip) n += p.updates;
    }
    return n;
  }
};

namespace detail {

struct Population {
  std::string name;
  Shape shape;
  std::size_t size = 0;
  const ConvLayer<double>* conv = nullptr;  // feeding op; exactly one of conv/dense
  const DenseLayer<double>* dense = nullptr;
  Shape in_shape;                            // shape of the feeding op's input
  SpikingActivation neuron;
  bool readout = false;
  bool off_chip = false;
};

inline std::vector<Population> compile(const LayerGraph& g) {
  if (g.flavor != Flavor::snn) throw SimulationError("simulation needs an snn graph");
  g.validate();
  std::vector<Population> pops;
  const ConvLayer<double>* conv = nullptr;
  const DenseLayer<double>* dense = nullptr;
  Shape op_in;
  bool off_chip = false;
  std::string op_name_hint;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    if (const auto* c = std::get_if<Conv2D>(&l.op)) {
      if (conv || dense) throw SimulationError("layer " + l.name + ": two synaptic layers in a row");
      conv = &c->conv;
      off_chip = c->off_chip;
      op_in = l.in_shape;
      op_name_hint = l.name;
    } else if (const auto* d = std::get_if<Dense>(&l.op)) {
      if (conv || dense) throw SimulationError("layer " + l.name + ": two synaptic layers in a row");
      dense = &d->dense;
      op_in = l.in_shape;
      op_name_hint = l.name;
    } else if (const auto* s = std::get_if<SpikingActivation>(&l.op)) {
      if (!conv && !dense) throw SimulationError("activation " + l.name + " has no synaptic input layer");
      Population p;
      p.name = l.name;
      p.shape = l.out_shape;
      p.size = shape_product(l.out_shape);
      p.conv = conv;
      p.dense = dense;
      p.in_shape = op_in;
      p.neuron = *s;
      p.off_chip = off_chip;
      pops.push_back(std::move(p));
      conv = nullptr;
      dense = nullptr;
      off_chip = false;
    } else if (std::holds_alternative<Flatten>(l.op) || std::holds_alternative<Softmax>(l.op)) {
      continue;
    } else {
      throw SimulationError("layer " + l.name + " (" + op_name(l.op) + ") cannot be simulated");
    }
  }
  if (conv) throw SimulationError("trailing convolution without activation");
  if (dense) {
    Population p;
    p.name = op_name_hint;
    p.shape = {dense->cout()};
    p.size = dense->cout();
    p.dense = dense;
    p.in_shape = op_in;
    p.readout = true;
    if (!pops.empty()) p.neuron.dt = pops.back().neuron.dt;
    pops.push_back(std::move(p));
  }
  if (pops.empty() || pops.front().readout) throw SimulationError("graph has no spiking populations");
  for (std::size_t i = 1; i < pops.size(); ++i) {
    if (pops[i].neuron.dt != pops[0].neuron.dt) throw SimulationError("populations disagree on dt");
  }
  return pops;
}

}  // namespace detail

class Simulator {
 public:
  Simulator(const LayerGraph& graph, SimConfig cfg = {})
      : graph_(graph), cfg_(cfg), pops_(detail::compile(graph_)) {
    dt_ = pops_.front().neuron.dt;
    const std::size_t n = pops_.size();
    v_.resize(n);
    in_cur_.resize(n);
    in_next_.resize(n);
    v0_.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      v0_[p].assign(pops_[p].size, cfg_.v_init);
      v_[p] = v0_[p];
      in_cur_[p].assign(pops_[p].size, 0.0);
      in_next_[p].assign(pops_[p].size, 0.0);
    }
    static_drive_.assign(pops_.front().size, 0.0);
    spiked_.reserve(4096);
    // Probe selection: a fixed random subset per spiking population.
    for (std::size_t p = 0; p < n; ++p) {
      if (pops_[p].readout) continue;
      Xoshiro256 rng(derive_seed(cfg_.seed, p));
      std::vector<std::size_t> idx(pops_[p].size);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      const std::size_t k = std::min(cfg_.probe_sample, idx.size());
      for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      idx.resize(k);
      std::sort(idx.begin(), idx.end());
      probes_.push_back({p, std::move(idx)});
    }
  }

  double dt() const { return dt_; }
  std::size_t population_count() const { return pops_.size(); }
  const std::vector<double>& voltages(std::size_t pop) const { return v_.at(pop); }
  bool has_readout() const { return pops_.back().readout; }

  // Steps before the output layer can respond: one per upstream population.
  std::size_t pipeline_depth() const { return pops_.size() - 1; }

  void reset() {
    for (std::size_t p = 0; p < pops_.size(); ++p) {
      v_[p] = v0_[p];
      std::fill(in_cur_[p].begin(), in_cur_[p].end(), 0.0);
      std::fill(in_next_[p].begin(), in_next_[p].end(), 0.0);
    }
    step_ = 0;
  }

  // Presents a static image for `steps` timesteps, continuing from the
  // current state (call reset() first for an isolated inference).
  InferenceResult present(const Tensor<double>& image, std::size_t steps) {
    if (image.shape() != graph_.input_shape) {
      throw ShapeError("simulation input " + shape_to_string(image.shape()) + " != graph input " +
                       shape_to_string(graph_.input_shape));
    }
    set_input(image);
    InferenceResult r;
    r.dt = dt_;
    r.steps = steps;
    r.pipeline_depth = pipeline_depth();
    for (const auto& p : pops_) r.populations.push_back({p.name, p.size, p.off_chip, 0, 0, 0});
    if (cfg_.record_raster) {
      for (const auto& pr : probes_) {
        LayerRaster lr;
        lr.layer = pops_[pr.pop].name;
        lr.neurons = pr.neurons;
        lr.spikes.assign(pr.neurons.size(), std::vector<std::uint8_t>(steps, 0));
        if (cfg_.record_voltage) lr.voltage.assign(pr.neurons.size(), std::vector<float>(steps, 0.0f));
        r.raster.push_back(std::move(lr));
      }
    }
    const std::size_t classes = pops_.back().size;
    // Per-step input to the output layer (readout drive, or the decoded
    // spikes of a spiking output layer).
    std::vector<std::vector<double>> contrib(steps, std::vector<double>(classes, 0.0));
    std::vector<std::uint8_t> had_input(steps, 0);
    for (std::size_t t = 0; t < steps; ++t) {
      advance(t, r, contrib[t], had_input[t]);
    }
    decode(r, contrib, had_input);
    return r;
  }

 private:
  struct Probe {
    std::size_t pop;
    std::vector<std::size_t> neurons;
  };

  void set_input(const Tensor<double>& image) {
    const auto& first = pops_.front();
    Tensor<double> z = first.conv ? conv2d_forward(image, *first.conv)
                                  : dense_forward(image, *first.dense);
    std::copy(z.data().begin(), z.data().end(), static_drive_.begin());
  }

  void deliver(std::size_t target, std::size_t src_index, double scale, PopulationStats& stats) {
    const auto& post = pops_[target];
    auto& buf = in_next_[target];
    if (post.dense) {
      const std::size_t cout = post.dense->cout();
      const double* row = post.dense->weights.data().data() + src_index * cout;
      for (std::size_t j = 0; j < cout; ++j) buf[j] += row[j] * scale;
      stats.synaptic_events += cout;
      return;
    }
    const auto& c = *post.conv;
    const std::size_t h = post.in_shape[0], w = post.in_shape[1], cin = post.in_shape[2];
    const std::size_t ci = src_index % cin, pix = src_index / cin;
    const long y = static_cast<long>(pix / w), x = static_cast<long>(pix % w);
    const auto g = conv_geometry(h, w, c.kh(), c.kw(), c.stride, c.padding);
    const std::size_t cout = c.cout();
    const long s = static_cast<long>(c.stride);
    for (std::size_t ky = 0; ky < c.kh(); ++ky) {
      const long ny = y + static_cast<long>(g.pad_top) - static_cast<long>(ky);
      if (ny < 0 || ny % s != 0) continue;
      const long oy = ny / s;
      if (oy >= static_cast<long>(g.out_h)) continue;
      for (std::size_t kx = 0; kx < c.kw(); ++kx) {
        const long nx = x + static_cast<long>(g.pad_left) - static_cast<long>(kx);
        if (nx < 0 || nx % s != 0) continue;
        const long ox = nx / s;
        if (ox >= static_cast<long>(g.out_w)) continue;
        const double* wr = c.kernel.data().data() + ((ky * c.kw() + kx) * cin + ci) * cout;
        double* out = buf.data() + (static_cast<std::size_t>(oy) * g.out_w + static_cast<std::size_t>(ox)) * cout;
        for (std::size_t co = 0; co < cout; ++co) out[co] += wr[co] * scale;
        stats.synaptic_events += cout;
      }
    }
  }

  void advance(std::size_t t, InferenceResult& r, std::vector<double>& contrib, std::uint8_t& had_input) {
    const std::size_t n = pops_.size();
    for (std::size_t p = 0; p < n; ++p) {
      const auto& pop = pops_[p];
      auto& stats = r.populations[p];
      const auto& in = in_cur_[p];
      if (pop.readout) {
        for (std::size_t j = 0; j < pop.size; ++j) {
          contrib[j] = in[j];
          if (in[j] != 0.0) had_input = 1;
        }
        stats.updates += pop.size;
        continue;
      }
      const SpikingActivation& nrn = pop.neuron;
      const std::vector<double>& bias = pop.conv ? pop.conv->bias : pop.dense->bias;
      const std::size_t channels = bias.size();
      const double k = dt_ * nrn.gain;
      const double cap = nrn.max_rate > 0.0 ? nrn.max_rate * dt_ : std::numeric_limits<double>::infinity();
      const double decay = nrn.tau_rc > 0.0 ? std::exp(-dt_ / nrn.tau_rc) : 1.0;
      auto& v = v_[p];
      spiked_.clear();
      for (std::size_t i = 0; i < pop.size; ++i) {
        const double drive = p == 0 ? static_drive_[i] : bias[i % channels] + in[i];
        double dv = k * drive;
        if (dv > cap) dv = cap;
        double vi = v[i] * decay + dv;
        if (vi >= nrn.v_threshold - 1e-9) {
          vi = nrn.reset == ResetMode::subtract ? vi - nrn.v_threshold : 0.0;
          spiked_.push_back(i);
        }
        if (vi < cfg_.v_min) vi = cfg_.v_min;
        v[i] = vi;
      }
      if (!std::isfinite(v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()))) {
        throw SimulationError("non-finite membrane voltage in " + pop.name + " at step " + std::to_string(t + 1));
      }
      stats.updates += pop.size;
      stats.spikes += spiked_.size();
      if (p + 1 < n) {
        const double scale = nrn.amplitude / dt_;
        for (std::size_t i : spiked_) deliver(p + 1, i, scale, stats);
      }
      if (p + 1 == n) {
        for (std::size_t i : spiked_) contrib[i] += nrn.amplitude / dt_;
        if (!spiked_.empty()) had_input = 1;
      }
      record_probes(p, t, r);
    }
    for (std::size_t p = 0; p < n; ++p) {
      std::swap(in_cur_[p], in_next_[p]);
      std::fill(in_next_[p].begin(), in_next_[p].end(), 0.0);
    }
    ++step_;
  }

  void record_probes(std::size_t p, std::size_t t, InferenceResult& r) {
    if (!cfg_.record_raster) return;
    for (std::size_t k = 0; k < probes_.size(); ++k) {
      if (probes_[k].pop != p) continue;
      auto& lr = r.raster[k];
      const auto& nrns = probes_[k].neurons;
      for (std::size_t i : spiked_) {
        const auto it = std::lower_bound(nrns.begin(), nrns.end(), i);
        if (it != nrns.end() && *it == i) lr.spikes[static_cast<std::size_t>(it - nrns.begin())][t] = 1;
      }
      if (cfg_.record_voltage) {
        for (std::size_t j = 0; j < nrns.size(); ++j) lr.voltage[j][t] = static_cast<float>(v_[p][nrns[j]]);
      }
    }
  }

  std::vector<double> logits_from(const std::vector<double>& sum, std::size_t count) const {
    const auto& out = pops_.back();
    std::vector<double> z(out.size);
    for (std::size_t j = 0; j < out.size; ++j) {
      const double mean = sum[j] / static_cast<double>(count);
      if (out.readout) {
        z[j] = out.dense->bias[j] + mean;
      } else {
        z[j] = mean;
      }
    }
    return z;
  }

  // Final probabilities use every step after the pipeline delay; the
  // per-step trace uses a trailing window.
  void decode(InferenceResult& r, const std::vector<std::vector<double>>& contrib,
              const std::vector<std::uint8_t>& had_input) const {
    const std::size_t classes = pops_.back().size;
    const std::vector<double> uniform(classes, 1.0 / static_cast<double>(classes));
    const std::size_t depth = r.pipeline_depth;
    const std::size_t steps = r.steps;
    const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg_.decode_window_ms / 1000.0 / dt_)));

    // Prefix sums over steps for O(1) windows.
    std::vector<std::vector<double>> prefix(steps + 1, std::vector<double>(classes, 0.0));
    std::vector<std::size_t> active(steps + 1, 0);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < classes; ++j) prefix[t + 1][j] = prefix[t][j] + contrib[t][j];
      active[t + 1] = active[t] + had_input[t];
    }
    auto window_probs = [&](std::size_t lo, std::size_t hi, bool& decided) {
      // Steps [lo, hi) (0-based).
      decided = hi > lo && active[hi] > active[lo];
      if (!decided) return uniform;
      std::vector<double> sum(classes);
      for (std::size_t j = 0; j < classes; ++j) sum[j] = prefix[hi][j] - prefix[lo][j];
      return softmax<double>(logits_from(sum, hi - lo));
    };

    r.probabilities.resize(steps);
    r.trace_decided.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t hi = t + 1;
      const std::size_t lo = std::max(depth, hi > window ? hi - window : 0);
      bool d = false;
      r.probabilities[t] = window_probs(std::min(lo, hi), hi, d);
      r.trace_decided[t] = d;
    }
    bool d = false;
    r.final_probabilities = window_probs(std::min(depth, steps), steps, d);
    r.decided = d;
    r.label = d ? argmax(r.final_probabilities) : 0;
    r.delay_steps.reset();
    if (!d) return;
    const auto stable = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg_.stable_ms / 1000.0 / dt_)));
    std::optional<std::size_t> first;
    for (std::size_t t = steps; t-- > 0;) {
      if (r.trace_decided[t] && argmax(r.probabilities[t]) == r.label) {
        first = t;
      } else {
        break;
      }
    }
    if (first && steps - *first >= stable) r.delay_steps = *first + 1;
  }

  LayerGraph graph_;
  SimConfig cfg_;
  std::vector<detail::Population> pops_;
  double dt_ = 0.001;
  std::vector<std::vector<double>> v0_, v_, in_cur_, in_next_;
  std::vector<double> static_drive_;
  std::vector<std::size_t> spiked_;
  std::vector<Probe> probes_;
  std::size_t step_ = 0;
};

inline std::size_t steps_for(double window_ms, double dt) {
  if (!(window_ms > 0.0)) throw SimulationError("window must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(window_ms / 1000.0 / dt));
  if (steps == 0) throw SimulationError("window shorter than one timestep");
  return steps;
}

inline InferenceResult run_inference(const LayerGraph& graph, const Tensor<double>& image,
                                     double window_ms, const SimConfig& cfg = {}) {
  Simulator sim(graph, cfg);
  return sim.present(image, steps_for(window_ms, sim.dt()));
}

// Presents images back to back without resetting state, as a camera stream
// would; delays are measured from each image's onset.
inline std::vector<InferenceResult> run_sequence(const LayerGraph& graph,
                                                 std::span<const Tensor<double>> images,
                                                 double window_ms, const SimConfig& cfg = {}) {
  Simulator sim(graph, cfg);
  const std::size_t steps = steps_for(window_ms, sim.dt());
  std::vector<InferenceResult> out;
  for (const auto& img : images) out.push_back(sim.present(img, steps));
  return out;
}

struct Evaluation {
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::size_t undecided = 0;
  double accuracy = 0.0;  // undecided samples count as wrong
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]; undecided not included
  std::vector<std::string> population_names;
  std::vector<double> mean_spikes;        // per population
  double mean_hidden_spikes = 0.0;        // all on-chip populations
  double mean_synaptic_events = 0.0;
  double mean_neuron_updates = 0.0;
  double mean_delay_ms = 0.0;             // over samples with a measured delay
  std::size_t delays_measured = 0;
  double mean_raster_density = 0.0;
};

struct EvalConfig {
  SimConfig sim{};
  std::size_t threads = 0;  // 0 = hardware concurrency; aggregation order is fixed
};

inline Evaluation evaluate(const LayerGraph& graph, const Dataset& data, double window_ms,
                           const EvalConfig& cfg = {}) {
  if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
  std::vector<InferenceResult> results(data.size());
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, data.size());
  auto work = [&](std::size_t tid) {
    Simulator sim(graph, cfg.sim);
    const std::size_t steps = steps_for(window_ms, sim.dt());
    for (std::size_t i = tid; i < data.size(); i += threads) {
      sim.reset();
      results[i] = sim.present(data.samples[i].pixels, steps);
      results[i].probabilities.clear();  // keep memory bounded
      results[i].probabilities.shrink_to_fit();
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  Evaluation ev;
  ev.samples = data.size();
  const std::size_t classes = results.front().final_probabilities.size();
  ev.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (const auto& p : results.front().populations) ev.population_names.push_back(p.name);
  ev.mean_spikes.assign(ev.population_names.size(), 0.0);
  double delay_sum = 0.0, density_sum = 0.0;
  std::size_t density_n = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::size_t truth = data.samples[i].label;
    if (!r.decided) {
      ++ev.undecided;
    } else {
      if (truth < classes) ++ev.confusion[truth][r.label];
      if (r.label == truth) ++ev.correct;
    }
    for (std::size_t p = 0; p < r.populations.size(); ++p) ev.mean_spikes[p] += static_cast<double>(r.populations[p].spikes);
    ev.mean_hidden_spikes += static_cast<double>(r.total_spikes(true));
    ev.mean_synaptic_events += static_cast<double>(r.synaptic_events());
    ev.mean_neuron_updates += static_cast<double>(r.neuron_updates());
    if (r.delay_ms()) {
      delay_sum += *r.delay_ms();
      ++ev.delays_measured;
    }
    for (const auto& lr : r.raster) {
      density_sum += lr.density();
      ++density_n;
    }
  }
  const auto n = static_cast<double>(ev.samples);
  ev.accuracy = static_cast<double>(ev.correct) / n;
  for (double& m : ev.mean_spikes) m /= n;
  ev.mean_hidden_spikes /= n;
  ev.mean_synaptic_events /= n;
  ev.mean_neuron_updates /= n;
  ev.mean_delay_ms = ev.delays_measured ? delay_sum / static_cast<double>(ev.delays_measured) : 0.0;
  ev.mean_raster_density = density_n ? density_sum / static_cast<double>(density_n) : 0.0;
  return ev;
}

// CSV exports: spike events only (t_ms is the end of the step).
inline void write_raster_csv(std::ostream& out, const InferenceResult& r) {
  out << "t_ms,layer,neuron,spike\n";
  for (std::size_t t = 0; t < r.steps; ++t) {
    const double t_ms = static_cast<double>(t + 1) * r.dt * 1000.0;
    for (const auto& lr : r.raster) {
      for (std::size_t i = 0; i < lr.neurons.size(); ++i) {
        if (lr.spikes[i][t]) out << t_ms << ',' << lr.layer << ',' << lr.neurons[i] << ",1\n";
      }
    }
  }
}

inline void write_probability_csv(std::ostream& out, const InferenceResult& r, double t0_ms = 0.0) {
  out << "t_ms,class,probability\n";
  for (std::size_t t = 0; t < r.probabilities.size(); ++t) {
    const double t_ms = t0_ms + static_cast<double>(t + 1) * r.dt * 1000.0;
    for (std::size_t c = 0; c < r.probabilities[t].size(); ++c) {
      out << t_ms << ',' << c << ',' << r.probabilities[t][c] << '\n';
    }
  }
}

}  // namespace neuroedge
