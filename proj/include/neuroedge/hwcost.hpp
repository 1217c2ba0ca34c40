// Device profiles and cost arithmetic: energy = power x latency, FPS,
// real-time verdicts, an activity-based energy model for the simulated
// neuromorphic device, and the comparative report with headline ratios.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroedge/neuromap.hpp"
#include "neuroedge/sim.hpp"
#include "neuroedge/toml.hpp"

namespace neuroedge {

class CostError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ProfileSource { published, simulated };

inline const char* to_string(ProfileSource s) { return s == ProfileSource::published ? "published" : "simulated"; }

struct DeviceProfile {
  std::string name;
  double accuracy_pct = 0.0;
  double latency_ms = 0.0;
  double power_w = 0.0;  // dynamic (inference-attributable) power
  ProfileSource source = ProfileSource::published;
  // Filled by derive_metrics.
  double energy_mj = 0.0;
  double fps = 0.0;
  double pdp_mj = 0.0;
  // Values printed alongside the inputs, kept to validate the arithmetic.
  std::optional<double> reported_energy_mj;
  std::optional<double> reported_fps;
  std::optional<double> total_power_w;  // idle + dynamic, when known
};

// energy [mJ] = power [W] x latency [ms]; FPS = 1000 / latency [ms].
inline DeviceProfile derive_metrics(DeviceProfile p) {
  if (!(p.latency_ms > 0.0)) throw CostError(p.name + ": latency must be positive");
  if (!(p.power_w >= 0.0)) throw CostError(p.name + ": power must be non-negative");
  p.energy_mj = p.power_w * p.latency_ms;
  p.fps = 1000.0 / p.latency_ms;
  p.pdp_mj = p.energy_mj;
  return p;
}

inline double relative_gap(double computed, double reported) {
  return std::abs(computed - reported) / std::abs(reported);
}

struct RealtimeVerdict {
  bool pass = false;
  double fps = 0.0;
  double margin_fps = 0.0;  // fps - fps_min
  bool within_band = false; // fps_min <= fps <= fps_max
};

inline RealtimeVerdict realtime_check(double fps, double fps_min = 20.0, double fps_max = 30.0) {
  return {fps >= fps_min, fps, fps - fps_min, fps >= fps_min && fps <= fps_max};
}

inline RealtimeVerdict realtime_check(const DeviceProfile& p, double fps_min = 20.0, double fps_max = 30.0) {
  return realtime_check(derive_metrics(p).fps, fps_min, fps_max);
}

// Energy model of the simulated neuromorphic device.
struct NeuroEnergyModel {
  double e_synop_j = 0.0;          // per synaptic event
  double e_neuron_update_j = 0.0;  // per on-chip neuron per timestep
  double p_static_w = 0.0;         // idle chip power
  double dt = 0.001;               // timestep the constants refer to [s]

  void validate() const {
    if (!(e_synop_j >= 0.0) || !(e_neuron_update_j >= 0.0) || !(p_static_w >= 0.0)) {
      throw CostError("energy model constants must be non-negative");
    }
    if (!(dt > 0.0)) throw CostError("energy model timestep must be positive");
  }
};

// Per-inference activity of the simulated network.
struct SnnActivity {
  double synaptic_events = 0.0;
  double neuron_updates = 0.0;
  double window_ms = 0.0;
};

struct SnnEnergy {
  double dynamic_energy_mj = 0.0;
  double dynamic_power_w = 0.0;
  double total_power_w = 0.0;
  double total_energy_mj = 0.0;
};

inline SnnEnergy estimate_snn_energy(const SnnActivity& a, const NeuroEnergyModel& m) {
  m.validate();
  if (!(a.window_ms > 0.0)) throw CostError("activity window must be positive");
  if (a.synaptic_events < 0.0 || a.neuron_updates < 0.0) throw CostError("activity counts must be non-negative");
  SnnEnergy e;
  const double joules = a.synaptic_events * m.e_synop_j + a.neuron_updates * m.e_neuron_update_j;
  e.dynamic_energy_mj = joules * 1e3;
  e.dynamic_power_w = joules / (a.window_ms * 1e-3);
  e.total_power_w = e.dynamic_power_w + m.p_static_w;
  e.total_energy_mj = e.total_power_w * a.window_ms;
  return e;
}

inline SnnActivity activity_of(const InferenceResult& r) {
  return {static_cast<double>(r.synaptic_events()), static_cast<double>(r.neuron_updates()),
          static_cast<double>(r.steps) * r.dt * 1e3};
}

inline SnnActivity activity_of(const Evaluation& ev, double window_ms) {
  return {ev.mean_synaptic_events, ev.mean_neuron_updates, window_ms};
}

// Every neuron placed on a core is updated once per timestep, so the map
// fixes the update count for a run of r.steps.
inline SnnEnergy estimate_snn_energy(const InferenceResult& r, const NeuroEnergyModel& m, const CoreMap& map) {
  m.validate();
  if (std::abs(r.dt - m.dt) > 1e-12) throw CostError("energy model timestep differs from the simulation timestep");
  SnnActivity a = activity_of(r);
  a.neuron_updates = static_cast<double>(map.total_neurons()) * static_cast<double>(r.steps);
  return estimate_snn_energy(a, m);
}

// Solves for the per-event energy that makes `a` dissipate the measured
// dynamic power, keeping the other constants.
inline NeuroEnergyModel calibrate_synop(const SnnActivity& a, double measured_dynamic_power_w, NeuroEnergyModel m) {
  m.validate();
  if (!(a.synaptic_events > 0.0)) throw CostError("calibration run produced no synaptic events");
  if (!(a.window_ms > 0.0)) throw CostError("activity window must be positive");
  const double joules = measured_dynamic_power_w * a.window_ms * 1e-3 - a.neuron_updates * m.e_neuron_update_j;
  if (joules < 0.0) throw CostError("neuron-update energy alone exceeds the measured dynamic power");
  m.e_synop_j = joules / a.synaptic_events;
  return m;
}

inline DeviceProfile simulated_profile(const std::string& name, double accuracy_pct, double latency_ms,
                                       const SnnEnergy& e) {
  DeviceProfile p;
  p.name = name;
  p.accuracy_pct = accuracy_pct;
  p.latency_ms = latency_ms;
  p.power_w = e.dynamic_power_w;
  p.total_power_w = e.total_power_w;
  p.source = ProfileSource::simulated;
  return derive_metrics(p);
}

enum class Metric { power, energy, latency, fps, accuracy };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::power: return "power";
    case Metric::energy: return "energy";
    case Metric::latency: return "latency";
    case Metric::fps: return "fps";
    case Metric::accuracy: return "accuracy";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  for (Metric m : {Metric::power, Metric::energy, Metric::latency, Metric::fps, Metric::accuracy}) {
    if (s == to_string(m)) return m;
  }
  throw CostError("unknown metric '" + s + "'");
}

inline double metric_of(const DeviceProfile& p, Metric m) {
  switch (m) {
    case Metric::power: return p.power_w;
    case Metric::energy: return p.energy_mj;
    case Metric::latency: return p.latency_ms;
    case Metric::fps: return p.fps;
    case Metric::accuracy: return p.accuracy_pct;
  }
  return 0.0;
}

inline const DeviceProfile& find_profile(const std::vector<DeviceProfile>& ps, const std::string& name) {
  for (const auto& p : ps) {
    if (p.name == name) return p;
  }
  throw CostError("no device profile named '" + name + "'");
}

inline double ratio(const std::vector<DeviceProfile>& ps, Metric m, const std::string& num, const std::string& den) {
  const double d = metric_of(find_profile(ps, den), m);
  if (d == 0.0) throw CostError("metric " + std::string(to_string(m)) + " of " + den + " is zero");
  return metric_of(find_profile(ps, num), m) / d;
}

// A published ratio to reproduce: metric(numerator) / metric(denominator).
struct RatioClaim {
  Metric metric = Metric::power;
  std::string numerator, denominator;
  double reported = 0.0;
};

// Digits after the decimal point in the shortest representation of v.
inline int printed_decimals(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  const std::string s(buf, r.ptr);
  const auto dot = s.find('.');
  return dot == std::string::npos ? 0 : static_cast<int>(s.size() - dot - 1);
}

struct ClaimResult {
  RatioClaim claim;
  double computed = 0.0;
  // Agrees with the printed figure to its last printed digit, whether the
  // figure was rounded or truncated.
  bool matches = false;
};

inline ClaimResult check_claim(const std::vector<DeviceProfile>& ps, const RatioClaim& c) {
  ClaimResult r{c, ratio(ps, c.metric, c.numerator, c.denominator), false};
  const double unit = std::pow(10.0, -printed_decimals(c.reported));
  r.matches = std::abs(r.computed - c.reported) < unit;
  return r;
}

struct DeviceFixture {
  std::vector<DeviceProfile> devices;
  std::vector<RatioClaim> claims;
};

namespace detail {

inline double number_at(const nlohmann::ordered_json& t, const char* key, const std::string& where) {
  if (!t.contains(key)) throw CostError(where + ": missing '" + key + "'");
  if (!t[key].is_number()) throw CostError(where + ": '" + key + "' must be a number");
  return t[key].get<double>();
}

inline std::optional<double> optional_number(const nlohmann::ordered_json& t, const char* key) {
  if (!t.contains(key)) return std::nullopt;
  if (!t[key].is_number()) throw CostError(std::string("'") + key + "' must be a number");
  return t[key].get<double>();
}

}  // namespace detail

// Devices are `[device."<name>"]` tables; claims are `[[ratio]]` entries.
inline DeviceFixture devices_from_toml(const nlohmann::ordered_json& doc) {
  static const std::vector<std::string> device_keys{
      "accuracy_pct", "latency_ms", "power_w", "source", "energy_mj", "fps", "total_power_w", "kernels", "fc"};
  DeviceFixture f;
  if (!doc.contains("device") || !doc["device"].is_object() || doc["device"].empty()) {
    throw CostError("profile file defines no devices");
  }
  for (const auto& [name, t] : doc["device"].items()) {
    for (const auto& [k, v] : t.items()) {
      if (std::find(device_keys.begin(), device_keys.end(), k) == device_keys.end()) {
        throw CostError("device " + name + ": unknown key '" + k + "'");
      }
    }
    DeviceProfile p;
    p.name = name;
    p.accuracy_pct = detail::number_at(t, "accuracy_pct", name);
    p.latency_ms = detail::number_at(t, "latency_ms", name);
    p.power_w = detail::number_at(t, "power_w", name);
    const std::string src = t.value("source", "published");
    if (src != "published" && src != "simulated") throw CostError(name + ": unknown source '" + src + "'");
    p.source = src == "published" ? ProfileSource::published : ProfileSource::simulated;
    p.reported_energy_mj = detail::optional_number(t, "energy_mj");
    p.reported_fps = detail::optional_number(t, "fps");
    p.total_power_w = detail::optional_number(t, "total_power_w");
    f.devices.push_back(derive_metrics(p));
  }
  if (doc.contains("ratio")) {
    for (const auto& r : doc["ratio"]) {
      RatioClaim c;
      c.metric = metric_from_string(r.at("metric").get<std::string>());
      c.numerator = r.at("numerator").get<std::string>();
      c.denominator = r.at("denominator").get<std::string>();
      c.reported = detail::number_at(r, "reported", "ratio");
      find_profile(f.devices, c.numerator);
      find_profile(f.devices, c.denominator);
      f.claims.push_back(c);
    }
  }
  for (const auto& [k, v] : doc.items()) {
    if (k != "device" && k != "ratio") throw CostError("unknown top-level key '" + k + "'");
  }
  return f;
}

inline DeviceFixture load_devices(const std::filesystem::path& path) {
  try {
    return devices_from_toml(load_toml(path));
  } catch (const CostError& e) {
    throw CostError(path.string() + ": " + e.what());
  }
}

inline NeuroEnergyModel energy_model_from_toml(const nlohmann::ordered_json& doc) {
  if (!doc.contains("energy")) throw CostError("energy file has no [energy] table");
  const auto& t = doc["energy"];
  for (const auto& [k, v] : t.items()) {
    if (k != "e_synop_j" && k != "e_neuron_update_j" && k != "p_static_w" && k != "dt") {
      throw CostError("energy: unknown key '" + k + "'");
    }
  }
  NeuroEnergyModel m;
  m.e_synop_j = detail::number_at(t, "e_synop_j", "energy");
  m.e_neuron_update_j = detail::number_at(t, "e_neuron_update_j", "energy");
  m.p_static_w = detail::number_at(t, "p_static_w", "energy");
  if (t.contains("dt")) m.dt = detail::number_at(t, "dt", "energy");
  m.validate();
  return m;
}

inline NeuroEnergyModel load_energy_model(const std::filesystem::path& path) {
  return energy_model_from_toml(load_toml(path));
}

struct ComparativeReport {
  std::vector<DeviceProfile> devices;
  std::vector<RealtimeVerdict> realtime;
  std::vector<ClaimResult> claims;
  // ratios[m][i][j] = metric m of device i / device j, for power, energy, latency.
  std::vector<std::vector<std::vector<double>>> ratios;
};

inline ComparativeReport comparative_report(const std::vector<DeviceProfile>& devices,
                                            const std::vector<RatioClaim>& claims = {}) {
  if (devices.size() < 2) throw CostError("a comparative report needs at least two device profiles");
  ComparativeReport r;
  for (const auto& d : devices) {
    r.devices.push_back(derive_metrics(d));
    r.realtime.push_back(realtime_check(r.devices.back().fps));
  }
  for (const auto& c : claims) r.claims.push_back(check_claim(r.devices, c));
  for (Metric m : {Metric::power, Metric::energy, Metric::latency}) {
    std::vector<std::vector<double>> table(devices.size(), std::vector<double>(devices.size()));
    for (std::size_t i = 0; i < devices.size(); ++i) {
      for (std::size_t j = 0; j < devices.size(); ++j) {
        table[i][j] = metric_of(r.devices[i], m) / metric_of(r.devices[j], m);
      }
    }
    r.ratios.push_back(std::move(table));
  }
  return r;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string pad(const std::string& s, std::size_t w, bool right = true) {
  if (s.size() >= w) return s;
  return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const ComparativeReport& r) {
  out << "device,source,accuracy_pct,latency_ms,fps,power_w,energy_mj,pdp_mj,realtime\n";
  for (std::size_t i = 0; i < r.devices.size(); ++i) {
    const auto& d = r.devices[i];
    out << d.name << ',' << to_string(d.source) << ',' << d.accuracy_pct << ',' << d.latency_ms << ','
        << detail::fixed(d.fps, 2) << ',' << d.power_w << ',' << detail::fixed(d.energy_mj, 4) << ','
        << detail::fixed(d.pdp_mj, 4) << ',' << (r.realtime[i].pass ? "pass" : "fail") << '\n';
  }
}

inline void write_claims_csv(std::ostream& out, const ComparativeReport& r) {
  out << "metric,numerator,denominator,computed,reported,matches\n";
  for (const auto& c : r.claims) {
    out << to_string(c.claim.metric) << ',' << c.claim.numerator << ',' << c.claim.denominator << ','
        << detail::fixed(c.computed, 2) << ',' << c.claim.reported << ',' << (c.matches ? "yes" : "no") << '\n';
  }
}

inline void write_report_text(std::ostream& out, const ComparativeReport& r) {
  std::size_t w = 6;
  for (const auto& d : r.devices) w = std::max(w, d.name.size());
  out << detail::pad("device", w, false) << "  " << detail::pad("acc %", 6) << "  " << detail::pad("lat ms", 7)
      << "  " << detail::pad("FPS", 8) << "  " << detail::pad("power W", 9) << "  " << detail::pad("energy mJ", 9)
      << "  real-time\n";
  for (std::size_t i = 0; i < r.devices.size(); ++i) {
    const auto& d = r.devices[i];
    out << detail::pad(d.name, w, false) << "  " << detail::pad(detail::fixed(d.accuracy_pct, 2), 6) << "  "
        << detail::pad(detail::fixed(d.latency_ms, 2), 7) << "  " << detail::pad(detail::fixed(d.fps, 1), 8)
        << "  " << detail::pad(detail::fixed(d.power_w, 4), 9) << "  "
        << detail::pad(detail::fixed(d.energy_mj, 3), 9) << "  " << (r.realtime[i].pass ? "pass" : "FAIL")
        << (d.source == ProfileSource::simulated ? "  (simulated)" : "") << '\n';
  }
  for (const auto& d : r.devices) {
    if (d.total_power_w) {
      out << d.name << ": power column is dynamic power; total including idle is "
          << detail::fixed(*d.total_power_w * 1e3, 1) << " mW\n";
    }
  }
  if (!r.claims.empty()) {
    out << "\nratios\n";
    for (const auto& c : r.claims) {
      out << "  " << to_string(c.claim.metric) << ' ' << c.claim.numerator << " / " << c.claim.denominator << " = "
          << detail::fixed(c.computed, 2) << "x (reported " << c.claim.reported << "x) "
          << (c.matches ? "ok" : "MISMATCH") << '\n';
    }
  }
}

}  // namespace neuroedge
