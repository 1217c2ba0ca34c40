#include <gtest/gtest.h>

#include <sstream>

#include "neuroedge/hwcost.hpp"
#include "neuroedge/rng.hpp"

using namespace neuroedge;

namespace {

DeviceProfile profile(const std::string& name, double power_w, double latency_ms, double acc = 90.0) {
  DeviceProfile p;
  p.name = name;
  p.power_w = power_w;
  p.latency_ms = latency_ms;
  p.accuracy_pct = acc;
  return derive_metrics(p);
}

const DeviceFixture& fixture() {
  static const DeviceFixture f = load_devices(NEUROEDGE_DATA_DIR "/devices.toml");
  return f;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(DeriveMetrics, PiRow) {
  const auto p = profile("Pi", 1.56, 2.88);
  EXPECT_NEAR(p.energy_mj, 4.49, 0.01 * 4.49);
  EXPECT_NEAR(p.fps, 347, 0.01 * 347);
  EXPECT_DOUBLE_EQ(p.pdp_mj, p.energy_mj);
}

TEST(DeriveMetrics, LoihiRow) {
  const auto p = profile("Intel Loihi", 0.0012, 35);
  EXPECT_NEAR(p.energy_mj, 0.042, 1e-12);
  EXPECT_NEAR(p.fps, 28.5, 0.01 * 28.5);
}

TEST(DeriveMetrics, UnitValues) {
  const auto p = profile("unit", 1.0, 1.0);
  EXPECT_DOUBLE_EQ(p.energy_mj, 1.0);
  EXPECT_DOUBLE_EQ(p.fps, 1000.0);
}

TEST(DeriveMetrics, RejectsNonPositiveLatency) {
  EXPECT_THROW(profile("x", 1.0, 0.0), CostError);
  EXPECT_THROW(profile("x", 1.0, -2.0), CostError);
  EXPECT_THROW(profile("x", -1.0, 2.0), CostError);
}

TEST(Fixture, EveryRowMatchesItsPrintedColumns) {
  const auto& f = fixture();
  ASSERT_EQ(f.devices.size(), 7u);
  const std::vector<std::string> names{"Pi", "Jetson-L", "Jetson-H", "Pi + NCS2", "Pi + TPU", "Coral Dev", "Intel Loihi"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& d = f.devices[i];
    EXPECT_EQ(d.name, names[i]);
    EXPECT_EQ(d.source, ProfileSource::published);
    ASSERT_TRUE(d.reported_energy_mj && d.reported_fps) << d.name;
    EXPECT_LE(relative_gap(d.energy_mj, *d.reported_energy_mj), 0.01) << d.name;
    EXPECT_LE(relative_gap(d.fps, *d.reported_fps), 0.01) << d.name;
  }
  const auto& loihi = find_profile(f.devices, "Intel Loihi");
  ASSERT_TRUE(loihi.total_power_w);
  EXPECT_DOUBLE_EQ(*loihi.total_power_w, 0.0263);
}

TEST(Ratios, HeadlineFiguresFromTableInputs) {
  const auto& d = fixture().devices;
  // Independent arithmetic on the printed table inputs.
  EXPECT_NEAR(ratio(d, Metric::power, "Pi + NCS2", "Intel Loihi"), 2.08 / 0.0012, 1e-9);
  EXPECT_NEAR(ratio(d, Metric::energy, "Coral Dev", "Intel Loihi"), (0.52 * 0.39) / (0.0012 * 35), 1e-9);
  EXPECT_NEAR(ratio(d, Metric::latency, "Intel Loihi", "Coral Dev"), 35 / 0.39, 1e-9);
  EXPECT_EQ(static_cast<int>(ratio(d, Metric::power, "Pi + NCS2", "Intel Loihi")), 1733);
  EXPECT_EQ(static_cast<int>(ratio(d, Metric::power, "Coral Dev", "Intel Loihi")), 433);
  EXPECT_EQ(static_cast<int>(ratio(d, Metric::energy, "Pi + NCS2", "Intel Loihi")), 116);
  EXPECT_EQ(static_cast<int>(ratio(d, Metric::latency, "Intel Loihi", "Pi")), 12);
  EXPECT_EQ(static_cast<int>(ratio(d, Metric::latency, "Intel Loihi", "Coral Dev")), 89);
  EXPECT_NEAR(ratio(d, Metric::energy, "Coral Dev", "Intel Loihi"), 4.8, 0.05);
}

TEST(Ratios, ShippedClaimsAllMatch) {
  const auto& f = fixture();
  ASSERT_EQ(f.claims.size(), 6u);
  const std::vector<double> reported{1733, 433, 116, 4.8, 12, 89};
  for (std::size_t i = 0; i < reported.size(); ++i) {
    EXPECT_EQ(f.claims[i].reported, reported[i]);
    const auto r = check_claim(f.devices, f.claims[i]);
    EXPECT_TRUE(r.matches) << to_string(r.claim.metric) << ' ' << r.computed;
  }
}

TEST(Ratios, ClaimToleranceFollowsPrintedDigits) {
  EXPECT_EQ(printed_decimals(1733), 0);
  EXPECT_EQ(printed_decimals(4.8), 1);
  EXPECT_EQ(printed_decimals(0.203), 3);
  const std::vector<DeviceProfile> ps{profile("a", 4.83, 1), profile("b", 1, 1)};
  EXPECT_TRUE(check_claim(ps, {Metric::power, "a", "b", 4.8}).matches);
  EXPECT_FALSE(check_claim(ps, {Metric::power, "a", "b", 4.7}).matches);
  EXPECT_FALSE(check_claim(ps, {Metric::power, "a", "b", 6}).matches);
}

TEST(Ratios, AntisymmetricUnderSwap) {
  Xoshiro256 rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::vector<DeviceProfile> ps{profile("a", 0.001 + rng.uniform() * 3, 0.1 + rng.uniform() * 50),
                                        profile("b", 0.001 + rng.uniform() * 3, 0.1 + rng.uniform() * 50)};
    for (Metric m : {Metric::power, Metric::energy, Metric::latency, Metric::fps}) {
      EXPECT_NEAR(ratio(ps, m, "a", "b") * ratio(ps, m, "b", "a"), 1.0, 1e-12);
    }
  }
  const auto r = comparative_report(fixture().devices);
  for (const auto& table : r.ratios)
    for (std::size_t i = 0; i < table.size(); ++i)
      for (std::size_t j = 0; j < table.size(); ++j) EXPECT_NEAR(table[i][j] * table[j][i], 1.0, 1e-12);
}

TEST(Ratios, UnknownDeviceOrMetric) {
  EXPECT_THROW(ratio(fixture().devices, Metric::power, "Pi", "Nope"), CostError);
  EXPECT_THROW(metric_from_string("throughput"), CostError);
}

TEST(Realtime, Verdicts) {
  const auto loihi = realtime_check(profile("Intel Loihi", 0.0012, 35));
  EXPECT_TRUE(loihi.pass);
  EXPECT_TRUE(loihi.within_band);
  EXPECT_NEAR(loihi.margin_fps, 1000.0 / 35 - 20, 1e-9);
  EXPECT_FALSE(realtime_check(19.9).pass);
  EXPECT_TRUE(realtime_check(20.0).pass);
  const auto coral = realtime_check(find_profile(fixture().devices, "Coral Dev"));
  EXPECT_TRUE(coral.pass);
  EXPECT_FALSE(coral.within_band);
  EXPECT_GT(coral.margin_fps, 2500);
}

TEST(EnergyModel, ZeroActivity) {
  NeuroEnergyModel m{1e-9, 0.0, 0.024};
  const auto e = estimate_snn_energy(SnnActivity{0, 5000, 35}, m);
  EXPECT_EQ(e.dynamic_energy_mj, 0.0);
  EXPECT_EQ(e.dynamic_power_w, 0.0);
  EXPECT_DOUBLE_EQ(e.total_power_w, 0.024);
  m.e_neuron_update_j = 2e-12;
  const auto u = estimate_snn_energy(SnnActivity{0, 5000, 35}, m);
  EXPECT_NEAR(u.dynamic_energy_mj, 5000 * 2e-12 * 1e3, 1e-18);
  EXPECT_NEAR(u.dynamic_power_w, 5000 * 2e-12 / 0.035, 1e-15);
}

TEST(EnergyModel, LinearAndMonotone) {
  const NeuroEnergyModel m{3e-11, 1e-13, 0.02};
  Xoshiro256 rng(9);
  for (int t = 0; t < 200; ++t) {
    const SnnActivity a{rng.uniform() * 1e6, rng.uniform() * 1e6, 200};
    const SnnActivity twice{2 * a.synaptic_events, a.neuron_updates, 200};
    const auto e1 = estimate_snn_energy(a, m), e2 = estimate_snn_energy(twice, m);
    EXPECT_NEAR(e2.dynamic_energy_mj - e1.dynamic_energy_mj, a.synaptic_events * m.e_synop_j * 1e3, 1e-15);
    const SnnActivity more{a.synaptic_events + rng.uniform() * 1e5, a.neuron_updates + rng.uniform() * 1e5, 200};
    EXPECT_GE(estimate_snn_energy(more, m).dynamic_energy_mj, e1.dynamic_energy_mj);
    EXPECT_GE(estimate_snn_energy(more, m).total_energy_mj, e1.total_energy_mj);
  }
}

TEST(EnergyModel, CalibrationSolvesForPerEventEnergy) {
  const SnnActivity gray{4.6e5, 1e6, 200};
  const auto m = calibrate_synop(gray, 0.0023, NeuroEnergyModel{0, 0, 0.024});
  EXPECT_NEAR(m.e_synop_j, 0.0023 * 0.2 / 4.6e5, 1e-20);
  EXPECT_NEAR(estimate_snn_energy(gray, m).dynamic_power_w, 0.0023, 1e-12);
  // Half the events at the same constants gives half the dynamic power.
  EXPECT_NEAR(estimate_snn_energy(SnnActivity{2.3e5, 1e6, 200}, m).dynamic_power_w, 0.00115, 1e-12);
  const auto with_updates = calibrate_synop(gray, 0.0023, NeuroEnergyModel{0, 1e-10, 0.024});
  EXPECT_NEAR(estimate_snn_energy(gray, with_updates).dynamic_power_w, 0.0023, 1e-12);
  EXPECT_THROW(calibrate_synop({0, 1, 200}, 0.0023, {}), CostError);
  EXPECT_THROW(calibrate_synop(gray, 0.0023, NeuroEnergyModel{0, 1e-6, 0}), CostError);
}

TEST(EnergyModel, RejectsNegativeConstants) {
  EXPECT_THROW(estimate_snn_energy(SnnActivity{1, 1, 1}, NeuroEnergyModel{-1, 0, 0}), CostError);
  EXPECT_THROW(estimate_snn_energy(SnnActivity{1, 1, 1}, NeuroEnergyModel{0, 0, -1}), CostError);
  EXPECT_THROW(estimate_snn_energy(SnnActivity{1, 1, 0}, NeuroEnergyModel{}), CostError);
}

TEST(EnergyModel, CoreMapFixesNeuronUpdates) {
  InferenceResult r;
  r.dt = 0.001;
  r.steps = 35;
  r.populations.push_back({"enc", 10, true, 5, 50, 350});
  r.populations.push_back({"h", 20, false, 7, 14, 700});
  const CoreMap map = map_layers({{"h", {2, 2, 5}}, {"out", {1, 1, 3}}});
  const NeuroEnergyModel m{1e-9, 1e-12, 0.0};
  const auto e = estimate_snn_energy(r, m, map);
  EXPECT_NEAR(e.dynamic_energy_mj, (64 * 1e-9 + 23 * 35 * 1e-12) * 1e3, 1e-15);
  NeuroEnergyModel coarse = m;
  coarse.dt = 0.002;
  EXPECT_THROW(estimate_snn_energy(r, coarse, map), CostError);
  const auto a = activity_of(r);
  EXPECT_EQ(a.synaptic_events, 64);
  EXPECT_EQ(a.neuron_updates, 700);
  EXPECT_DOUBLE_EQ(a.window_ms, 35);
}

TEST(EnergyModel, LoadsFromToml) {
  const auto m = energy_model_from_toml(parse_toml("[energy]\ne_synop_j = 2e-11\ne_neuron_update_j = 0.0\np_static_w = 0.024\n"));
  EXPECT_DOUBLE_EQ(m.e_synop_j, 2e-11);
  EXPECT_DOUBLE_EQ(m.dt, 0.001);
  EXPECT_THROW(energy_model_from_toml(parse_toml("[energy]\ne_synop_j = 1\ne_neuron_update_j = 0\np_static_w = 0\nwatts = 3\n")),
               CostError);
  EXPECT_THROW(energy_model_from_toml(parse_toml("[energy]\ne_synop_j = -1\ne_neuron_update_j = 0\np_static_w = 0\n")),
               CostError);
}

TEST(Fixture, MalformedProfileFiles) {
  EXPECT_THROW(devices_from_toml(parse_toml("")), CostError);
  EXPECT_THROW(devices_from_toml(parse_toml("[device]\n")), CostError);
  EXPECT_THROW(devices_from_toml(parse_toml("[device.a]\nlatency_ms = 1\npower_w = 1\n")), CostError);
  EXPECT_THROW(devices_from_toml(parse_toml("[device.a]\naccuracy_pct = 1\nlatency_ms = 1\npower_w = 1\ncolour = 2\n")),
               CostError);
  EXPECT_THROW(devices_from_toml(parse_toml("[device.a]\naccuracy_pct = 1\nlatency_ms = 0\npower_w = 1\n")), CostError);
  EXPECT_THROW(devices_from_toml(parse_toml(
                   "[device.a]\naccuracy_pct = 1\nlatency_ms = 1\npower_w = 1\n[[ratio]]\nmetric = \"power\"\n"
                   "numerator = \"a\"\ndenominator = \"b\"\nreported = 1\n")),
               CostError);
  EXPECT_THROW(comparative_report({profile("only", 1, 1)}), CostError);
}

TEST(Report, TextAndCsvAgree) {
  const auto& f = fixture();
  const auto r = comparative_report(f.devices, f.claims);
  std::ostringstream text, csv, claims;
  write_report_text(text, r);
  write_report_csv(csv, r);
  write_claims_csv(claims, r);
  const auto csv_lines = lines(csv.str());
  ASSERT_EQ(csv_lines.size(), 8u);
  EXPECT_EQ(csv_lines[0], "device,source,accuracy_pct,latency_ms,fps,power_w,energy_mj,pdp_mj,realtime");
  EXPECT_EQ(csv_lines[1], "Pi,published,96.95,2.88,347.22,1.56,4.4928,4.4928,pass");
  EXPECT_EQ(csv_lines[7], "Intel Loihi,published,97.4,35,28.57,0.0012,0.0420,0.0420,pass");
  // Every device's energy appears in the text table with the same value.
  for (const auto& d : r.devices) {
    std::ostringstream e;
    e << std::fixed << std::setprecision(3) << d.energy_mj;
    bool found = false;
    for (const auto& l : lines(text.str())) found |= l.rfind(d.name, 0) == 0 && l.find(e.str()) != std::string::npos;
    EXPECT_TRUE(found) << d.name;
  }
  EXPECT_EQ(text.str().find("MISMATCH"), std::string::npos);
  EXPECT_NE(text.str().find("26.3 mW"), std::string::npos);
  EXPECT_EQ(lines(claims.str()).size(), 7u);
  EXPECT_EQ(claims.str().find(",no\n"), std::string::npos);
}
