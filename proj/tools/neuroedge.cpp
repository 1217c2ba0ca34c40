// neuroedge: one subcommand per pipeline stage. Every run writes its outputs
// and a run.json echo of the fully resolved config under <out>/<run-id>/;
// `neuroedge rerun <run.json>` repeats a run from that echo.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 invariant violation.

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroedge/convert.hpp"
#include "neuroedge/hwcost.hpp"
#include "neuroedge/imaging.hpp"
#include "neuroedge/model_ir.hpp"
#include "neuroedge/nas.hpp"
#include "neuroedge/neuromap.hpp"
#include "neuroedge/sim.hpp"
#include "neuroedge/smod.hpp"
#include "neuroedge/toml.hpp"
#include "neuroedge/train.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace neuroedge;

namespace {

enum ExitCode { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_invariant = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Returned by a command whose run completed but whose verdict failed.
class VerdictFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config fields: each one binds to a flag and round-trips through JSON with
// strict type checks, so config files and run.json share one schema.

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

template <class T>
bool json_is(const Json& j) {
  if constexpr (std::is_same_v<T, bool>) {
    return j.is_boolean();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return j.is_string();
  } else if constexpr (std::is_floating_point_v<T>) {
    return j.is_number();
  } else if constexpr (std::is_unsigned_v<T>) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.template get<std::int64_t>() >= 0);
  } else if constexpr (std::is_integral_v<T>) {
    return j.is_number_integer();
  } else {
    static_assert(is_vector<T>::value);
    if (!j.is_array()) return false;
    for (const auto& e : j) {
      if (!json_is<typename T::value_type>(e)) return false;
    }
    return true;
  }
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_unsigned_v<T>) return "a non-negative integer";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else return "an array";
}

std::string flag_of(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

struct Field {
  std::string key;
  std::function<void(CLI::App&)> bind;
  std::function<Json()> get;
  std::function<void(const Json&)> set;
};

class Fields {
 public:
  template <class T>
  void add(const std::string& key, T& ref, const std::string& help) {
    Field f;
    f.key = key;
    f.bind = [key, &ref, help](CLI::App& app) {
      if constexpr (std::is_same_v<T, bool>) {
        app.add_flag(flag_of(key), ref, help);
      } else if constexpr (is_vector<T>::value) {
        app.add_option(flag_of(key), ref, help)->delimiter(',');
      } else {
        app.add_option(flag_of(key), ref, help)->capture_default_str();
      }
    };
    f.get = [&ref] { return Json(ref); };
    f.set = [key, &ref](const Json& j) {
      if (!json_is<T>(j)) throw UsageError("config key '" + key + "' expects " + type_name<T>());
      ref = j.template get<T>();
    };
    fields_.push_back(std::move(f));
  }

  void bind(CLI::App& app) const {
    for (const auto& f : fields_) f.bind(app);
  }

  Json to_json() const {
    Json j = Json::object();
    for (const auto& f : fields_) j[f.key] = f.get();
    return j;
  }

  // Unknown keys are always an error; run.json must also name every key.
  void apply(const Json& doc, bool require_all, const std::string& source) const {
    if (!doc.is_object()) throw UsageError(source + ": config must be a table of keys");
    for (const auto& [key, value] : doc.items()) {
      const Field* f = find(key);
      if (!f) throw UsageError(source + ": unknown config key '" + key + "'");
      f->set(value);
    }
    if (require_all) {
      for (const auto& f : fields_) {
        if (!doc.contains(f.key)) throw UsageError(source + ": missing config key '" + f.key + "'");
      }
    }
  }

 private:
  const Field* find(const std::string& key) const {
    for (const auto& f : fields_) {
      if (f.key == key) return &f;
    }
    return nullptr;
  }

  std::vector<Field> fields_;
};

// ---------------------------------------------------------------------------
// Run directory and output helpers

class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)) {}
  const fs::path& path() const { return dir_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
  }
  void write_json(const std::string& name, const Json& j) const { write(name, j.dump(2) + "\n"); }

 private:
  fs::path dir_;
};

std::string utc_stamp(const char* format) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, format, &tm);
  return buf;
}

fs::path make_run_dir(const fs::path& out, const std::string& run_id) {
  fs::path dir;
  if (run_id.empty()) {
    const std::string stamp = utc_stamp("%Y%m%d-%H%M%S");
    dir = out / stamp;
    for (int n = 2; fs::exists(dir); ++n) dir = out / (stamp + "-" + std::to_string(n));
  } else {
    if (run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
      throw UsageError("run id must be a plain directory name");
    }
    dir = out / run_id;
    if (fs::exists(dir)) throw UsageError("run directory already exists: " + dir.string());
  }
  fs::create_directories(dir);
  return dir;
}

std::string absolute_path(const std::string& p) {
  return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

// Shortest round-trip text of a double, always with a decimal point or exponent.
std::string float_literal(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DataSource {
  std::string dataset;
  std::size_t synthetic = 0;
  std::uint64_t data_seed = 0;
  bool edges = false;
  double threshold = 0.1;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;

  void declare(Fields& f) {
    f.add("dataset", dataset, "image directory laid out as <root>/<class>/*.pgm");
    f.add("synthetic", synthetic, "generate a synthetic corpus with this many samples per class instead");
    f.add("data_seed", data_seed, "seed of the synthetic corpus");
    f.add("edges", edges, "apply Sobel edge detection to every image");
    f.add("threshold", threshold, "edge magnitude threshold");
    f.add("test_fraction", test_fraction, "held-out fraction per class");
    f.add("split_seed", split_seed, "seed of the stratified split");
  }
  bool given() const { return !dataset.empty() || synthetic > 0; }
  void resolve() { dataset = absolute_path(dataset); }
  void check(bool required) const {
    if (!dataset.empty() && synthetic > 0) throw UsageError("--dataset and --synthetic are mutually exclusive");
    if (required && !given()) throw UsageError("a dataset is required (--dataset DIR or --synthetic N)");
  }
  IngestResult load() const {
    if (!dataset.empty()) return ingest(dataset, {test_fraction, split_seed}, {image_size, edges, threshold});
    Dataset d = make_synthetic_dataset(synthetic, data_seed);
    if (edges) d = with_edges(std::move(d), threshold);
    auto [train, test] = stratified_split(std::move(d.samples), {test_fraction, split_seed});
    return {std::move(train), std::move(test), {}};
  }
};

void log_data(std::ostream& log, const IngestResult& d) {
  log << "data: " << d.train.size() << " train, " << d.test.size() << " test";
  if (!d.skipped.empty()) log << ", " << d.skipped.size() << " files skipped";
  log << '\n';
  for (const auto& s : d.skipped) log << "  skipped " << s.path << ": " << s.reason << '\n';
}

// Evenly spaced subset, so a limit keeps every class represented.
Dataset subsample(const Dataset& d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  Dataset out{{}, d.split};
  for (std::size_t i = 0; i < limit; ++i) out.samples.push_back(d.samples[i * d.size() / limit]);
  return out;
}

LayerGraph load_spiking(const std::string& path) {
  LayerGraph g = load_model(path);
  if (g.flavor != Flavor::snn) throw DataError(path + " holds an ANN; run `neuroedge convert` first");
  return g;
}

ModelSpec resolve_spec(const std::string& arch, const std::vector<int>& kernels, const std::vector<int>& fc,
                       std::ostream& log) {
  ModelSpec spec;
  try {
    spec = device_spec(arch);
  } catch (const InvalidSpec&) {
    std::string names;
    for (const auto& n : device_architectures()) names += (names.empty() ? "" : ", ") + n.name;
    throw UsageError("unknown architecture '" + arch + "' (known: " + names + ")");
  }
  if (!kernels.empty()) {
    spec.kernels = kernels;
    spec.blocks = static_cast<int>(kernels.size());
  }
  if (!fc.empty()) {
    if (fc.size() != 2) throw UsageError("--fc takes exactly two widths");
    spec.fc = {fc[0], fc[1]};
  }
  try {
    for (const auto& w : validate(spec)) log << "warning: " << w << '\n';
  } catch (const InvalidSpec& e) {
    throw UsageError(e.what());
  }
  return spec;
}

std::string architecture_text(const LayerGraph& g) {
  std::ostringstream out;
  out << "flavor " << to_string(g.flavor) << ", input " << shape_to_string(g.input_shape) << ", "
      << g.layers.size() << " layers, " << g.param_count() << " parameters\n";
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    out << "  " << i << "  " << l.name << "  " << op_name(l.op) << "  " << shape_to_string(l.in_shape) << " -> "
        << shape_to_string(l.out_shape);
    std::visit(overloaded{[&](const Conv2D& c) {
                            out << "  " << c.conv.kh() << 'x' << c.conv.kw() << " stride " << c.conv.stride << ", "
                                << c.conv.cin() << " -> " << c.conv.cout() << " channels";
                            if (c.off_chip) out << ", off-chip encoder";
                          },
                          [&](const SpikingActivation& s) {
                            out << "  gain " << s.gain << " Hz, amplitude " << s.amplitude;
                            if (s.max_rate > 0.0) out << ", max rate " << s.max_rate << " Hz";
                          },
                          [&](const Pool& p) { out << "  " << p.size << 'x' << p.size << " stride " << p.stride; },
                          [&](const Dense& d) { out << "  " << d.dense.cin() << " -> " << d.dense.cout(); },
                          [](const auto&) {}},
               l.op);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Commands

class Command {
 public:
  virtual ~Command() = default;
  virtual const char* name() const = 0;
  virtual const char* about() const = 0;
  virtual void declare(Fields& f) = 0;
  // Makes paths absolute so run.json is self-contained.
  virtual void resolve() {}
  // Usage checks on the resolved config.
  virtual void check() const {}
  virtual void run(const RunDir& dir, std::ostream& log) = 0;
};

class SynthCommand : public Command {
 public:
  const char* name() const override { return "synth"; }
  const char* about() const override { return "Write the synthetic pattern corpus as PGM files"; }
  void declare(Fields& f) override {
    f.add("n_per_class", n_per_class_, "samples per class");
    f.add("data_seed", data_seed_, "corpus seed");
    f.add("edges", edges_, "store edge-detected images");
    f.add("threshold", threshold_, "edge magnitude threshold");
  }
  void check() const override {
    if (n_per_class_ == 0) throw UsageError("--n-per-class must be at least 1");
  }
  void run(const RunDir& dir, std::ostream& log) override {
    Dataset d = make_synthetic_dataset(n_per_class_, data_seed_);
    if (edges_) d = with_edges(std::move(d), threshold_);
    write_dataset(d, dir / "dataset");
    std::ostringstream labels;
    labels << "source_id,label\n";
    for (const auto& s : d.samples) labels << s.source_id << ',' << s.label << '\n';
    dir.write("labels.csv", labels.str());
    log << "wrote " << d.size() << " images to " << (dir / "dataset").string() << '\n';
  }

 private:
  std::size_t n_per_class_ = 100;
  std::uint64_t data_seed_ = 0;
  bool edges_ = false;
  double threshold_ = 0.1;
};

class TrainCommand : public Command {
 public:
  const char* name() const override { return "train"; }
  const char* about() const override { return "Train an ANN and write model.smod with its training history"; }
  void declare(Fields& f) override {
    data_.declare(f);
    f.add("arch", arch_, "published architecture to start from");
    f.add("kernels", kernels_, "kernel counts per block, overriding the architecture");
    f.add("fc", fc_, "two fully connected widths, overriding the architecture");
    f.add("epochs", cfg_.epochs, "training epochs");
    f.add("batch", cfg_.batch, "minibatch size");
    f.add("lr", cfg_.lr, "learning rate");
    f.add("momentum", cfg_.momentum, "SGD momentum");
    f.add("chunks", cfg_.chunks, "gradient reduction partitions per batch");
    f.add("threads", cfg_.threads, "worker threads, 0 for all cores; results do not depend on it");
    f.add("seed", cfg_.seed, "weight initialization and shuffling seed");
  }
  void resolve() override { data_.resolve(); }
  void check() const override {
    data_.check(true);
    if (cfg_.batch == 0 || cfg_.chunks == 0) throw UsageError("--batch and --chunks must be positive");
  }
  void run(const RunDir& dir, std::ostream& log) override {
    const ModelSpec spec = resolve_spec(arch_, kernels_, fc_, log);
    const IngestResult data = data_.load();
    log_data(log, data);
    if (data.train.empty()) throw DataError("the training split is empty");
    const auto train_ex = to_examples(data.train);
    const auto test_ex = to_examples(data.test);
    log << "training " << describe(spec) << " for " << cfg_.epochs << " epochs\n";
    const TrainResult r = train(instantiate(spec, cfg_.seed), train_ex, cfg_);
    save_model(r.graph, dir / "model.smod");

    std::ostringstream hist;
    hist << "epoch,loss,accuracy\n";
    for (const auto& e : r.history) hist << e.epoch << ',' << e.loss << ',' << e.accuracy << '\n';
    dir.write("history.csv", hist.str());
    std::ostringstream split;
    write_split_manifest(split, data.train, data.test);
    dir.write("split.csv", split.str());

    Json m;
    m["spec"] = describe(spec);
    m["parameters"] = r.graph.param_count();
    m["train_samples"] = data.train.size();
    m["test_samples"] = data.test.size();
    m["epochs"] = r.history.size();
    m["final_loss"] = r.history.empty() ? Json() : Json(r.history.back().loss);
    m["train_accuracy"] = accuracy(r.graph, train_ex);
    m["test_accuracy"] = test_ex.empty() ? Json() : Json(accuracy(r.graph, test_ex));
    dir.write_json("metrics.json", m);
    log << "train accuracy " << m["train_accuracy"].get<double>();
    if (!test_ex.empty()) log << ", test accuracy " << m["test_accuracy"].get<double>();
    log << '\n';
  }

 private:
  DataSource data_;
  std::string arch_ = "Pi";
  std::vector<int> kernels_;
  std::vector<int> fc_;
  TrainConfig cfg_{30, 16, 0.01, 0.9, 0, 4, 0};
};

class ConvertCommand : public Command {
 public:
  const char* name() const override { return "convert"; }
  const char* about() const override { return "Convert a trained ANN into a spiking model"; }
  void declare(Fields& f) override {
    f.add("model", model_, "ANN .smod file");
    data_.declare(f);
    f.add("target_rate", cfg_.target_rate, "firing rate of the calibration percentile [Hz]");
    f.add("percentile", cfg_.percentile, "activation percentile used for gain normalization");
    f.add("hidden_gain", cfg_.hidden_gain, "fixed hidden gain [Hz] when no calibration data is given");
    f.add("calibration_samples", cfg_.calibration_samples, "training images used for calibration");
    f.add("dt", cfg_.dt, "simulation timestep [s]");
    f.add("gain", cfg_.encoder.gain, "encoder gain [Hz per unit intensity]");
    f.add("max_rate", cfg_.encoder.max_rate, "encoder rate cap [Hz]");
    f.add("finetune_epochs", cfg_.finetune.epochs, "spiking-aware fine-tuning epochs");
    f.add("finetune_lr", cfg_.finetune.lr, "fine-tuning learning rate");
    f.add("seed", cfg_.finetune.seed, "fine-tuning shuffle seed");
  }
  void resolve() override {
    model_ = absolute_path(model_);
    data_.resolve();
  }
  void check() const override {
    if (model_.empty()) throw UsageError("--model is required");
    data_.check(false);
    if (cfg_.finetune.epochs > 0 && !data_.given()) throw UsageError("fine-tuning needs a dataset");
  }
  void run(const RunDir& dir, std::ostream& log) override {
    const LayerGraph ann = load_model(model_);
    if (ann.flavor != Flavor::ann) throw DataError(model_ + " is already a spiking model");
    ConvertConfig cfg = cfg_;
    IngestResult data;
    std::vector<Example> train_ex, test_ex;
    if (data_.given()) {
      data = data_.load();
      log_data(log, data);
      train_ex = to_examples(data.train);
      test_ex = to_examples(data.test);
    } else {
      cfg.normalize = false;
      log << "no dataset: hidden gains fixed at " << cfg.hidden_gain << " Hz\n";
    }
    const LayerGraph snn = convert(ann, train_ex, cfg);
    snn.validate();
    save_model(snn, dir / "snn.smod");
    const std::string arch = architecture_text(snn);
    dir.write("architecture.txt", arch);

    Json m;
    m["flavor"] = to_string(snn.flavor);
    m["layers"] = snn.layers.size();
    m["parameters"] = snn.param_count();
    m["normalized"] = cfg.normalize;
    Json gains = Json::array();
    for (const auto& l : snn.layers) {
      if (const auto* s = std::get_if<SpikingActivation>(&l.op)) gains.push_back({{"layer", l.name}, {"gain_hz", s->gain}});
    }
    m["gains"] = gains;
    m["rate_accuracy"] = test_ex.empty() ? Json() : Json(accuracy(snn, test_ex));
    dir.write_json("metrics.json", m);
    log << arch;
  }

 private:
  std::string model_;
  DataSource data_;
  ConvertConfig cfg_{};
};

class MapCommand : public Command {
 public:
  const char* name() const override { return "map"; }
  const char* about() const override { return "Partition a spiking model onto neuromorphic cores"; }
  void declare(Fields& f) override {
    f.add("model", model_, ".smod file; an ANN is converted structurally first");
    f.add("arch", arch_, "map a published architecture instead of a model file");
    f.add("cores_per_chip", chip_.cores_per_chip, "cores per chip");
    f.add("neurons_per_core", chip_.neurons_per_core, "neurons per core");
    f.add("policy", policy_, "partition policy: min_blocks or channel_then_rows");
    f.add("pack_dense", chip_.pack_dense, "pack several blocks per core");
  }
  void resolve() override { model_ = absolute_path(model_); }
  void check() const override {
    if (model_.empty() == arch_.empty()) throw UsageError("give exactly one of --model and --arch");
    if (policy_ != "min_blocks" && policy_ != "channel_then_rows") throw UsageError("unknown policy '" + policy_ + "'");
  }
  void run(const RunDir& dir, std::ostream& log) override {
    LayerGraph g;
    if (!arch_.empty()) {
      g = instantiate(resolve_spec(arch_, {}, {}, log), 0);
    } else {
      g = load_model(model_);
    }
    if (g.flavor == Flavor::ann) {
      ConvertConfig structural;
      structural.normalize = false;
      g = convert(g, {}, structural);
    }
    ChipConfig chip = chip_;
    chip.policy = policy_ == "min_blocks" ? PartitionPolicy::min_blocks : PartitionPolicy::channel_then_rows;
    const CoreMap m = map_network(g, chip);
    std::ostringstream summary, cores, layers;
    write_map_summary(summary, m);
    write_core_csv(cores, m);
    write_layer_csv(layers, m);
    dir.write("summary.txt", summary.str());
    dir.write("cores.csv", cores.str());
    dir.write("layers.csv", layers.str());
    dir.write_json("map.json", to_json(m));
    log << summary.str();
  }

 private:
  std::string model_;
  std::string arch_;
  std::string policy_ = "min_blocks";
  ChipConfig chip_{};
};

struct SimOptions {
  double window_ms = 200.0;
  std::size_t limit = 0;
  SimConfig sim{};
  std::size_t threads = 0;

  void declare(Fields& f) {
    f.add("window_ms", window_ms, "presentation window per image [ms]");
    f.add("limit", limit, "evaluate an evenly spaced subset of this many test images, 0 for all");
    f.add("v_init", sim.v_init, "membrane voltage after reset");
    f.add("v_min", sim.v_min, "membrane floor");
    f.add("probe_sample", sim.probe_sample, "neurons recorded per population");
    f.add("probe_seed", sim.seed, "seed choosing the recorded neurons");
    f.add("threads", threads, "worker threads, 0 for all cores; results do not depend on it");
  }
  void check() const {
    if (!(window_ms > 0.0)) throw UsageError("--window-ms must be positive");
  }
};

Json evaluation_json(const Evaluation& ev, double window_ms, double dt) {
  Json m;
  m["samples"] = ev.samples;
  m["correct"] = ev.correct;
  m["undecided"] = ev.undecided;
  m["accuracy"] = ev.accuracy;
  m["window_ms"] = window_ms;
  m["dt_ms"] = dt * 1e3;
  m["mean_hidden_spikes"] = ev.mean_hidden_spikes;
  m["mean_synaptic_events"] = ev.mean_synaptic_events;
  m["mean_neuron_updates"] = ev.mean_neuron_updates;
  m["mean_delay_ms"] = ev.mean_delay_ms;
  m["delays_measured"] = ev.delays_measured;
  Json pops = Json::array();
  for (std::size_t p = 0; p < ev.population_names.size(); ++p) {
    pops.push_back({{"name", ev.population_names[p]}, {"mean_spikes", ev.mean_spikes[p]}});
  }
  m["populations"] = pops;
  return m;
}

class SimulateCommand : public Command {
 public:
  const char* name() const override { return "simulate"; }
  const char* about() const override { return "Run the spiking model on the test split: accuracy, traces, energy"; }
  void declare(Fields& f) override {
    f.add("model", model_, "spiking .smod file");
    data_.declare(f);
    opts_.declare(f);
    f.add("trace_index", trace_index_, "test image whose probability trace and raster are written");
    f.add("energy", energy_, "energy model TOML; omit to skip the energy estimate");
    f.add("name", name_, "profile name used when the result is added to a report");
  }
  void resolve() override {
    model_ = absolute_path(model_);
    energy_ = absolute_path(energy_);
    data_.resolve();
  }
  void check() const override {
    if (model_.empty()) throw UsageError("--model is required");
    data_.check(true);
    opts_.check();
  }
  void run(const RunDir& dir, std::ostream& log) override {
    const LayerGraph g = load_spiking(model_);
    const IngestResult data = data_.load();
    log_data(log, data);
    const Dataset test = subsample(data.test, opts_.limit);
    if (test.empty()) throw DataError("the test split is empty");
    if (trace_index_ >= test.size()) throw UsageError("--trace-index is past the end of the test split");

    const Evaluation ev = evaluate(g, test, opts_.window_ms, {opts_.sim, opts_.threads});
    const InferenceResult trace = run_inference(g, test.samples[trace_index_].pixels, opts_.window_ms, opts_.sim);
    const double fps = 1000.0 / opts_.window_ms;
    const RealtimeVerdict rt = realtime_check(fps);

    Json m;
    m["name"] = name_;
    m.update(evaluation_json(ev, opts_.window_ms, trace.dt));
    m["latency_ms"] = opts_.window_ms;
    m["fps"] = fps;
    m["realtime"] = {{"pass", rt.pass}, {"margin_fps", rt.margin_fps}, {"within_band", rt.within_band}};
    if (!energy_.empty()) {
      const NeuroEnergyModel model = load_energy_model(energy_);
      if (std::abs(model.dt - trace.dt) > 1e-12) throw CostError("energy model timestep differs from the model timestep");
      const SnnEnergy e = estimate_snn_energy(activity_of(ev, opts_.window_ms), model);
      m["energy"] = {{"dynamic_energy_mj", e.dynamic_energy_mj},
                     {"dynamic_power_w", e.dynamic_power_w},
                     {"total_power_w", e.total_power_w},
                     {"total_energy_mj", e.total_energy_mj}};
    }
    dir.write_json("metrics.json", m);

    std::ostringstream conf, probs, raster;
    conf << "true,predicted,count\n";
    for (std::size_t t = 0; t < ev.confusion.size(); ++t) {
      for (std::size_t p = 0; p < ev.confusion[t].size(); ++p) conf << t << ',' << p << ',' << ev.confusion[t][p] << '\n';
    }
    dir.write("confusion.csv", conf.str());
    write_probability_csv(probs, trace);
    dir.write("probabilities.csv", probs.str());
    write_raster_csv(raster, trace);
    dir.write("raster.csv", raster.str());

    log << "accuracy " << ev.accuracy << " on " << ev.samples << " images (" << ev.undecided << " undecided)\n"
        << "mean hidden spikes " << ev.mean_hidden_spikes << ", synaptic events " << ev.mean_synaptic_events << '\n'
        << "window " << opts_.window_ms << " ms -> " << fps << " FPS, real-time " << (rt.pass ? "pass" : "FAIL") << '\n';
    if (m.contains("energy")) {
      log << "dynamic power " << m["energy"]["dynamic_power_w"].get<double>() * 1e3 << " mW, total "
          << m["energy"]["total_power_w"].get<double>() * 1e3 << " mW\n";
    }
  }

 private:
  std::string model_;
  DataSource data_;
  SimOptions opts_;
  std::size_t trace_index_ = 0;
  std::string energy_;
  std::string name_ = "SNN";
};

class CalibrateCommand : public Command {
 public:
  const char* name() const override { return "calibrate"; }
  const char* about() const override { return "Fit the per-event energy to a measured dynamic power"; }
  void declare(Fields& f) override {
    f.add("model", model_, "spiking .smod file");
    data_.declare(f);
    opts_.declare(f);
    f.add("dynamic_power_w", dynamic_power_w_, "measured dynamic power of this workload [W]");
    f.add("p_static_w", p_static_w_, "static chip power [W]");
    f.add("e_neuron_update_j", e_neuron_update_j_, "energy per on-chip neuron update [J]");
  }
  void resolve() override {
    model_ = absolute_path(model_);
    data_.resolve();
  }
  void check() const override {
    if (model_.empty()) throw UsageError("--model is required");
    data_.check(true);
    opts_.check();
    if (!(dynamic_power_w_ > 0.0)) throw UsageError("--dynamic-power-w must be positive");
  }
  void run(const RunDir& dir, std::ostream& log) override {
    const LayerGraph g = load_spiking(model_);
    const IngestResult data = data_.load();
    log_data(log, data);
    const Dataset test = subsample(data.test, opts_.limit);
    if (test.empty()) throw DataError("the test split is empty");
    const Evaluation ev = evaluate(g, test, opts_.window_ms, {opts_.sim, opts_.threads});
    const double dt = Simulator(g, opts_.sim).dt();
    const SnnActivity a = activity_of(ev, opts_.window_ms);
    const NeuroEnergyModel m = calibrate_synop(a, dynamic_power_w_, {0.0, e_neuron_update_j_, p_static_w_, dt});

    std::ostringstream toml;
    toml << "# Energy model fitted by `neuroedge calibrate` to " << float_literal(dynamic_power_w_)
         << " W dynamic power\n# at " << float_literal(opts_.window_ms) << " ms windows over " << ev.samples
         << " images (" << float_literal(a.synaptic_events) << " synaptic events per image).\n"
         << "[energy]\n"
         << "e_synop_j = " << float_literal(m.e_synop_j) << '\n'
         << "e_neuron_update_j = " << float_literal(m.e_neuron_update_j) << '\n'
         << "p_static_w = " << float_literal(m.p_static_w) << '\n'
         << "dt = " << float_literal(m.dt) << '\n';
    dir.write("energy.toml", toml.str());
    Json j = evaluation_json(ev, opts_.window_ms, dt);
    j["dynamic_power_w"] = dynamic_power_w_;
    j["e_synop_j"] = m.e_synop_j;
    dir.write_json("calibration.json", j);
    log << "e_synop_j = " << m.e_synop_j << " (" << a.synaptic_events << " events per " << opts_.window_ms
        << " ms window)\n";
  }

 private:
  std::string model_;
  DataSource data_;
  SimOptions opts_;
  double dynamic_power_w_ = 0.0023;
  double p_static_w_ = 0.024;
  double e_neuron_update_j_ = 0.0;
};

class SearchCommand : public Command {
 public:
  const char* name() const override { return "search"; }
  const char* about() const override { return "Staged architecture search on the analytic surrogate evaluator"; }
  void declare(Fields& f) override {
    f.add("budget", cfg_.budget, "total trials");
    f.add("fractions", fractions_, "budget shares of the acc, acc_latency and acc_pdp stages");
    f.add("latency_weight", cfg_.weights.latency_per_ms, "objective weight per ms of latency");
    f.add("gamma", cfg_.gamma, "fraction of observations modelled as good");
    f.add("exploration", cfg_.exploration, "probability of a uniform-random proposal");
    f.add("carry", cfg_.carry, "best specs seeded into the next stage");
    f.add("startup", cfg_.startup, "random proposals before a stage is modelled");
    f.add("candidates", cfg_.candidates, "candidates scored per proposal");
    f.add("bandwidth", cfg_.bandwidth, "kernel width in grid steps");
    f.add("prior_weight", cfg_.prior_weight, "weight of the uniform prior");
    f.add("workers", cfg_.workers, "trials evaluated in parallel");
    f.add("seed", cfg_.seed, "search seed");
    f.add("evaluator", evaluator_, "trial evaluator (surrogate)");
    f.add("resume", resume_, "JSON-lines ledger to continue from");
  }
  void resolve() override { resume_ = absolute_path(resume_); }
  void check() const override {
    if (evaluator_ != "surrogate") throw UsageError("unknown evaluator '" + evaluator_ + "'");
    if (fractions_.size() != 3) throw UsageError("--fractions takes three shares");
    try {
      config().validate();
    } catch (const NasError& e) {
      throw UsageError(e.what());
    }
  }
  void run(const RunDir& dir, std::ostream& log) override {
    const SearchConfig cfg = config();
    SearchLedger start;
    if (!resume_.empty()) {
      start = load_ledger(resume_);
      log << "resuming after " << start.trials.size() << " trials\n";
    }
    std::ofstream ledger(dir / "ledger.jsonl", std::ios::binary | std::ios::trunc);
    if (!ledger) throw std::runtime_error("cannot write ledger");
    for (const auto& t : start.trials) ledger << to_json(t).dump() << '\n';
    ledger.flush();
    const SearchSpace space = SearchSpace::standard();
    const SearchLedger result = search(space, surrogate_evaluator(), cfg, start, [&](const Trial& t) {
      ledger << to_json(t).dump() << '\n';
      ledger.flush();
      log << "trial " << t.index << ' ' << to_string(t.stage) << ' ' << t.origin << ' ' << describe(t.spec);
      if (t.metrics) log << " objective " << objective(t, t.stage, cfg.weights);
      log << '\n';
    });

    std::ostringstream summary;
    write_search_summary(summary, result, cfg.weights);
    const GridOptimum opt = brute_force_optimum(space, surrogate_metrics, Stage::acc_pdp, cfg.weights);
    const auto found = result.trials_to(opt.spec);
    summary << "grid optimum acc_pdp: " << describe(opt.spec) << " objective=" << opt.objective << '\n'
            << "optimum " << (found ? "found at trial " + std::to_string(*found) : std::string("not found")) << '\n';
    dir.write("summary.txt", summary.str());

    Json best = Json::object();
    for (const auto& [stage, index] : result.best_per_stage(cfg.weights)) best[to_string(stage)] = to_json(result.trials[index]);
    dir.write_json("best.json", best);
    log << summary.str();
  }

 private:
  SearchConfig config() const {
    SearchConfig c = cfg_;
    c.stages = {{Stage::acc, fractions_.at(0)}, {Stage::acc_latency, fractions_.at(1)}, {Stage::acc_pdp, fractions_.at(2)}};
    return c;
  }

  SearchConfig cfg_{};
  std::vector<double> fractions_{0.4, 0.3, 0.3};
  std::string evaluator_ = "surrogate";
  std::string resume_;
};

class ReportCommand : public Command {
 public:
  const char* name() const override { return "report"; }
  const char* about() const override { return "Comparative device table, ratio checks and real-time verdicts"; }
  void declare(Fields& f) override {
    f.add("devices", devices_, "device profile TOML");
    f.add("simulated", simulated_, "simulate metrics.json files added as simulated profiles");
    f.add("gate", gate_, "device whose real-time verdict sets the exit code");
  }
  void resolve() override {
    devices_ = absolute_path(devices_);
    for (auto& s : simulated_) s = absolute_path(s);
  }
  void run(const RunDir& dir, std::ostream& log) override {
    DeviceFixture fx = load_devices(devices_);
    for (const auto& path : simulated_) fx.devices.push_back(profile_from_metrics(path));
    const ComparativeReport r = comparative_report(fx.devices, fx.claims);
    std::ostringstream text, csv, claims;
    write_report_text(text, r);
    write_report_csv(csv, r);
    write_claims_csv(claims, r);
    dir.write("report.txt", text.str());
    dir.write("report.csv", csv.str());
    dir.write("claims.csv", claims.str());
    log << text.str();
    for (const auto& c : r.claims) {
      if (!c.matches) throw VerdictFailed("ratio claims do not match the device table");
    }
    if (!gate_.empty()) {
      for (std::size_t i = 0; i < r.devices.size(); ++i) {
        if (r.devices[i].name != gate_) continue;
        if (!r.realtime[i].pass) throw VerdictFailed(gate_ + " misses the real-time requirement");
        return;
      }
      throw UsageError("--gate names no device in the report: " + gate_);
    }
  }

 private:
  static DeviceProfile profile_from_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    const Json m = Json::parse(in);
    if (!m.contains("energy")) throw DataError(path + " has no energy estimate; simulate with --energy");
    const auto& e = m.at("energy");
    const SnnEnergy energy{e.at("dynamic_energy_mj").get<double>(), e.at("dynamic_power_w").get<double>(),
                           e.at("total_power_w").get<double>(), e.at("total_energy_mj").get<double>()};
    return simulated_profile(m.at("name").get<std::string>(), 100.0 * m.at("accuracy").get<double>(),
                             m.at("latency_ms").get<double>(), energy);
  }

  std::string devices_ = std::string(NEUROEDGE_DATA_DIR) + "/devices.toml";
  std::vector<std::string> simulated_;
  std::string gate_;
};

std::vector<std::unique_ptr<Command>> all_commands() {
  std::vector<std::unique_ptr<Command>> c;
  c.push_back(std::make_unique<SynthCommand>());
  c.push_back(std::make_unique<TrainCommand>());
  c.push_back(std::make_unique<ConvertCommand>());
  c.push_back(std::make_unique<MapCommand>());
  c.push_back(std::make_unique<SimulateCommand>());
  c.push_back(std::make_unique<SearchCommand>());
  c.push_back(std::make_unique<ReportCommand>());
  c.push_back(std::make_unique<CalibrateCommand>());
  return c;
}

// Resolves, echoes and runs one command into a fresh run directory.
void execute(Command& cmd, const Fields& fields, const fs::path& out, const std::string& run_id) {
  cmd.resolve();
  cmd.check();
  const RunDir dir(make_run_dir(out, run_id));
  Json echo;
  echo["tool"] = "neuroedge";
  echo["version"] = NEUROEDGE_VERSION;
  echo["command"] = cmd.name();
  echo["run_id"] = dir.path().filename().string();
  echo["created_utc"] = utc_stamp("%Y-%m-%dT%H:%M:%SZ");
  echo["config"] = fields.to_json();
  dir.write_json("run.json", echo);
  cmd.run(dir, std::cout);
  std::cout << "run directory: " << dir.path().string() << '\n';
}

int run_main(int argc, char** argv) {
  CLI::App app{"Edge-detected SNN pipeline: train, convert, map, simulate, search and report"};
  app.set_version_flag("--version", NEUROEDGE_VERSION);
  app.require_subcommand(1);

  auto commands = all_commands();
  std::vector<Fields> fields(commands.size());
  std::string out = "runs", run_id, config;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i]->name(), commands[i]->about());
    commands[i]->declare(fields[i]);
    fields[i].bind(*sub);
    sub->add_option("--config", config, "TOML file whose keys override the flags");
    sub->add_option("--out", out, "parent directory of run directories")->capture_default_str();
    sub->add_option("--run-id", run_id, "run directory name (default: UTC timestamp)");
  }
  std::string rerun_file, rerun_out, rerun_id;
  CLI::App* rerun = app.add_subcommand("rerun", "Repeat a run from its run.json");
  rerun->add_option("run_json", rerun_file, "run.json of the run to repeat")->required();
  rerun->add_option("--out", rerun_out, "parent directory (default: that of the original run)");
  rerun->add_option("--run-id", rerun_id, "run directory name (default: UTC timestamp)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  if (rerun->parsed()) {
    std::ifstream in(rerun_file);
    if (!in) throw UsageError("cannot open " + rerun_file);
    Json echo;
    try {
      echo = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw UsageError(rerun_file + ": " + e.what());
    }
    if (!echo.contains("command") || !echo.contains("config")) throw UsageError(rerun_file + " is not a run.json");
    const std::string name = echo["command"].get<std::string>();
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (name != commands[i]->name()) continue;
      fields[i].apply(echo["config"], true, rerun_file);
      const fs::path parent = rerun_out.empty() ? fs::absolute(rerun_file).parent_path().parent_path() : fs::path(rerun_out);
      execute(*commands[i], fields[i], parent, rerun_id);
      return exit_ok;
    }
    throw UsageError(rerun_file + ": unknown command '" + name + "'");
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!app.got_subcommand(commands[i]->name())) continue;
    if (!config.empty()) {
      Json doc;
      try {
        doc = load_toml(config);
      } catch (const std::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
      }
      fields[i].apply(doc, false, config);
    }
    execute(*commands[i], fields[i], out, run_id);
  }
  return exit_ok;
}

int report_error(int code, const std::exception& e) {
  std::cerr << "error: " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const UsageError& e) {
    return report_error(exit_usage, e);
  } catch (const VerdictFailed& e) {
    return report_error(exit_invariant, e);
  } catch (const DataError& e) {
    return report_error(exit_data, e);
  } catch (const ParseError& e) {
    return report_error(exit_data, e);
  } catch (const TomlError& e) {
    return report_error(exit_data, e);
  } catch (const CostError& e) {
    return report_error(exit_data, e);
  } catch (const NasError& e) {
    return report_error(exit_data, e);
  } catch (const nlohmann::json::exception& e) {
    return report_error(exit_data, e);
  } catch (const fs::filesystem_error& e) {
    return report_error(exit_data, e);
  } catch (const SimulationError& e) {
    return report_error(exit_invariant, e);
  } catch (const TrainingError& e) {
    return report_error(exit_invariant, e);
  } catch (const std::logic_error& e) {
    // Graph, spec and mapping invariants.
    return report_error(exit_invariant, e);
  } catch (const std::runtime_error& e) {
    // Remaining I/O failures: missing or unreadable files.
    return report_error(exit_data, e);
  } catch (const std::exception& e) {
    return report_error(exit_invariant, e);
  }
}
