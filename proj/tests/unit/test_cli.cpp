#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "neuroedge/neuroedge.hpp"

using namespace neuroedge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI from `cwd` with stdout and stderr captured together.
Outcome cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(NEUROEDGE_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) o.output.append(buf, n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

nlohmann::json run_config(const fs::path& run) { return nlohmann::json::parse(slurp(run / "run.json"))["config"]; }

// Every output file except run.json matches byte for byte.
void expect_same_outputs(const fs::path& a, const fs::path& b) {
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
    ++compared;
  }
  EXPECT_GT(compared, 0u);
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("neuroedge_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) { return cli(args, dir_); }
  fs::path out(const std::string& id) const { return dir_ / "runs" / id; }

  // Tiny train + convert chain shared by several tests.
  void small_models() {
    ASSERT_EQ(run("train --synthetic 3 --epochs 1 --arch 'Intel Loihi' --out runs --run-id t").code, 0);
    ASSERT_EQ(run("convert --model runs/t/model.smod --synthetic 3 --out runs --run-id c").code, 0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("nonsense").code, 1);
  EXPECT_EQ(run("train --epochs notanumber --synthetic 2").code, 1);
  const Outcome missing = run("train --out runs");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.output.find("dataset is required"), std::string::npos);
  EXPECT_EQ(run("map --out runs").code, 1);
  EXPECT_EQ(run("map --arch Nope --out runs").code, 1);
}

TEST_F(Cli, ReportReproducesFixturesAndAgreesWithCsv) {
  const Outcome o = run("report --out runs --run-id r");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("(reported 1733x) ok"), std::string::npos);
  EXPECT_NE(o.output.find("(reported 4.8x) ok"), std::string::npos);
  const std::string csv = slurp(out("r") / "report.csv");
  EXPECT_EQ(count_lines(csv), 8u);
  EXPECT_NE(csv.find("Intel Loihi,published,97.4,35,28.57,0.0012,0.0420,0.0420,pass"), std::string::npos);
  EXPECT_EQ(slurp(out("r") / "report.txt"), o.output.substr(0, o.output.find("run directory:")));
  const std::string claims = slurp(out("r") / "claims.csv");
  EXPECT_EQ(count_lines(claims), 7u);
  EXPECT_EQ(claims.find(",no\n"), std::string::npos);
  EXPECT_NE(claims.find("4.83,4.8,yes\n"), std::string::npos);
  // Running the same config twice gives the same report.
  ASSERT_EQ(run("report --out runs --run-id r2").code, 0);
  expect_same_outputs(out("r"), out("r2"));
}

TEST_F(Cli, ReportDataAndVerdictErrors) {
  write_text(dir_ / "empty.toml", "# no devices\n");
  EXPECT_EQ(run("report --devices empty.toml --out runs").code, 2);
  EXPECT_EQ(run("report --devices missing.toml --out runs").code, 2);
  write_text(dir_ / "bad.toml",
             "[device.A]\naccuracy_pct = 90.0\nlatency_ms = 10.0\npower_w = 1.0\n"
             "[device.B]\naccuracy_pct = 90.0\nlatency_ms = 100.0\npower_w = 1.0\n"
             "[[ratio]]\nmetric = \"latency\"\nnumerator = \"B\"\ndenominator = \"A\"\nreported = 7.0\n");
  EXPECT_EQ(run("report --devices bad.toml --out runs").code, 3);
  write_text(dir_ / "slow.toml",
             "[device.A]\naccuracy_pct = 90.0\nlatency_ms = 10.0\npower_w = 1.0\n"
             "[device.B]\naccuracy_pct = 90.0\nlatency_ms = 100.0\npower_w = 1.0\n");
  EXPECT_EQ(run("report --devices slow.toml --gate A --out runs").code, 0);
  EXPECT_EQ(run("report --devices slow.toml --gate B --out runs").code, 3);
}

TEST_F(Cli, ConfigFileOverridesFlagsAndRejectsUnknownKeys) {
  write_text(dir_ / "cfg.toml", "budget = 3\nseed = 9\n");
  ASSERT_EQ(run("search --budget 50 --seed 1 --config cfg.toml --out runs --run-id s").code, 0);
  const auto cfg = run_config(out("s"));
  EXPECT_EQ(cfg["budget"], 3);
  EXPECT_EQ(cfg["seed"], 9);
  EXPECT_EQ(count_lines(slurp(out("s") / "ledger.jsonl")), 3u);

  write_text(dir_ / "unknown.toml", "budget = 3\nbudjet = 4\n");
  const Outcome u = run("search --config unknown.toml --out runs");
  EXPECT_EQ(u.code, 1);
  EXPECT_NE(u.output.find("unknown config key 'budjet'"), std::string::npos);
  write_text(dir_ / "typed.toml", "budget = \"three\"\n");
  EXPECT_EQ(run("search --config typed.toml --out runs").code, 1);
  write_text(dir_ / "negative.toml", "budget = -3\n");
  EXPECT_EQ(run("search --config negative.toml --out runs").code, 1);
  write_text(dir_ / "broken.toml", "budget = \n");
  EXPECT_EQ(run("search --config broken.toml --out runs").code, 1);
}

TEST_F(Cli, RunJsonEchoesEveryKeyAndRerunRejectsEdits) {
  ASSERT_EQ(run("search --budget 2 --out runs --run-id s").code, 0);
  auto echo = nlohmann::json::parse(slurp(out("s") / "run.json"));
  EXPECT_EQ(echo["command"], "search");
  EXPECT_EQ(echo["run_id"], "s");
  for (const char* key : {"budget", "fractions", "seed", "workers", "exploration", "resume", "evaluator"}) {
    EXPECT_TRUE(echo["config"].contains(key)) << key;
  }
  auto extra = echo;
  extra["config"]["surprise"] = 1;
  write_text(dir_ / "extra.json", extra.dump());
  EXPECT_EQ(run("rerun extra.json --out runs").code, 1);
  auto missing = echo;
  missing["config"].erase("seed");
  write_text(dir_ / "missing.json", missing.dump());
  EXPECT_EQ(run("rerun missing.json --out runs").code, 1);
  EXPECT_EQ(run("rerun nothere.json").code, 1);
}

TEST_F(Cli, SearchBudgetOneResumeAndRerun) {
  ASSERT_EQ(run("search --budget 1 --out runs --run-id one").code, 0);
  const std::string one = slurp(out("one") / "ledger.jsonl");
  EXPECT_EQ(count_lines(one), 1u);
  EXPECT_EQ(nlohmann::json::parse(one)["trial"], 0);

  ASSERT_EQ(run("search --budget 20 --seed 4 --out runs --run-id full").code, 0);
  const std::string full = slurp(out("full") / "ledger.jsonl");
  std::string head;
  std::istringstream lines(full);
  std::string line;
  for (int i = 0; i < 7 && std::getline(lines, line); ++i) head += line + "\n";
  write_text(dir_ / "part.jsonl", head);
  const Outcome resumed = run("search --budget 20 --seed 4 --resume part.jsonl --out runs --run-id resumed");
  ASSERT_EQ(resumed.code, 0) << resumed.output;
  EXPECT_NE(resumed.output.find("resuming after 7 trials"), std::string::npos);
  EXPECT_NE(resumed.output.find("trial 7 "), std::string::npos);
  EXPECT_EQ(resumed.output.find("trial 6 "), std::string::npos);
  EXPECT_EQ(slurp(out("resumed") / "ledger.jsonl"), full);

  // A ledger from another stage schedule is a data error.
  EXPECT_EQ(run("search --budget 20 --fractions 0.1,0.1,0.8 --resume part.jsonl --out runs").code, 2);

  ASSERT_EQ(run("rerun runs/full/run.json --run-id full2").code, 0);
  expect_same_outputs(out("full"), out("full2"));
}

TEST_F(Cli, SearchOnSurrogateReportsGridOptimum) {
  ASSERT_EQ(run("search --budget 5 --out runs --run-id s").code, 0);
  const std::string summary = slurp(out("s") / "summary.txt");
  EXPECT_NE(summary.find("grid optimum acc_pdp: blocks=2 K=[12,24] FC=[100,80]"), std::string::npos);
  const auto best = nlohmann::json::parse(slurp(out("s") / "best.json"));
  EXPECT_TRUE(best.contains("acc"));
  EXPECT_TRUE(best.contains("acc_latency"));
}

TEST_F(Cli, MapLoihiArchitectureFitsOneChip) {
  const Outcome o = run("map --arch 'Intel Loihi' --out runs --run-id m");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("fits on a single chip"), std::string::npos);
  const auto m = nlohmann::json::parse(slurp(out("m") / "map.json"));
  EXPECT_LE(m["cores_used"].get<int>(), 128);
  ASSERT_EQ(run("rerun runs/m/run.json --run-id m2").code, 0);
  expect_same_outputs(out("m"), out("m2"));
}

TEST_F(Cli, SevenNeuronNetworkUsesOneCore) {
  LayerGraph g({10}, Flavor::snn);
  g.add(Dense{DenseLayer<double>{Tensor<double>({10, 7}), std::vector<double>(7)}}, "readout");
  save_model(g, dir_ / "seven.smod");
  ASSERT_EQ(run("map --model seven.smod --out runs --run-id m").code, 0);
  EXPECT_EQ(slurp(out("m") / "cores.csv"), "core,chip,neurons,fill,blocks\n0,0,7,0.00683594,1\n");
}

TEST_F(Cli, PipelineChainAndFlavorErrors) {
  small_models();
  EXPECT_TRUE(fs::exists(out("t") / "model.smod"));
  EXPECT_EQ(count_lines(slurp(out("t") / "history.csv")), 2u);
  EXPECT_EQ(count_lines(slurp(out("t") / "split.csv")), 22u);
  EXPECT_EQ(load_model(out("c") / "snn.smod").flavor, Flavor::snn);
  EXPECT_NE(slurp(out("c") / "architecture.txt").find("off-chip encoder"), std::string::npos);

  // Converting a spiking model, or simulating an ANN, is a data error.
  EXPECT_EQ(run("convert --model runs/c/snn.smod --out runs").code, 2);
  EXPECT_EQ(run("simulate --model runs/t/model.smod --synthetic 3 --out runs").code, 2);
  EXPECT_EQ(run("convert --model missing.smod --out runs").code, 2);

  const Outcome sim = run("simulate --model runs/c/snn.smod --synthetic 3 --window-ms 35 --out runs --run-id s");
  ASSERT_EQ(sim.code, 0) << sim.output;
  // Probability trace: one row per step and class.
  EXPECT_EQ(count_lines(slurp(out("s") / "probabilities.csv")), 1u + 35u * 7u);
  EXPECT_EQ(slurp(out("s") / "raster.csv").rfind("t_ms,layer,neuron,spike\n", 0), 0u);
  const auto m = nlohmann::json::parse(slurp(out("s") / "metrics.json"));
  EXPECT_EQ(m["samples"], 7);
  EXPECT_NEAR(m["fps"].get<double>(), 1000.0 / 35.0, 1e-9);
  EXPECT_TRUE(m["realtime"]["pass"].get<bool>());
  EXPECT_FALSE(m.contains("energy"));
}

TEST_F(Cli, CalibrateThenSimulateReproducesMeasuredPower) {
  small_models();
  ASSERT_EQ(run("calibrate --model runs/c/snn.smod --synthetic 3 --window-ms 35 --out runs --run-id k").code, 0);
  const Outcome sim =
      run("simulate --model runs/c/snn.smod --synthetic 3 --window-ms 35 --energy runs/k/energy.toml --out runs --run-id s");
  ASSERT_EQ(sim.code, 0) << sim.output;
  const auto m = nlohmann::json::parse(slurp(out("s") / "metrics.json"));
  EXPECT_NEAR(m["energy"]["dynamic_power_w"].get<double>(), 0.0023, 1e-12);
  EXPECT_NEAR(m["energy"]["total_power_w"].get<double>(), 0.0263, 1e-12);
  // A simulated profile joins the comparative report.
  const Outcome rep = run("report --simulated runs/s/metrics.json --gate SNN --out runs --run-id r");
  ASSERT_EQ(rep.code, 0) << rep.output;
  EXPECT_NE(slurp(out("r") / "report.csv").find("\nSNN,simulated,"), std::string::npos);
}

TEST_F(Cli, EdgeFlagLowersSpikeCounts) {
  small_models();
  ASSERT_EQ(run("simulate --model runs/c/snn.smod --synthetic 3 --window-ms 35 --out runs --run-id g").code, 0);
  ASSERT_EQ(run("simulate --model runs/c/snn.smod --synthetic 3 --edges --window-ms 35 --out runs --run-id e").code, 0);
  const auto g = nlohmann::json::parse(slurp(out("g") / "metrics.json"));
  const auto e = nlohmann::json::parse(slurp(out("e") / "metrics.json"));
  EXPECT_LT(e["mean_hidden_spikes"].get<double>(), g["mean_hidden_spikes"].get<double>());
  EXPECT_LT(e["mean_synaptic_events"].get<double>(), g["mean_synaptic_events"].get<double>());
}

TEST_F(Cli, RerunIsByteIdentical) {
  small_models();
  ASSERT_EQ(run("simulate --model runs/c/snn.smod --synthetic 3 --window-ms 20 --out runs --run-id s").code, 0);
  for (const char* id : {"t", "c", "s"}) {
    const std::string again = std::string(id) + "_again";
    ASSERT_EQ(run("rerun runs/" + std::string(id) + "/run.json --run-id " + again).code, 0);
    expect_same_outputs(out(id), out(again));
    EXPECT_EQ(run_config(out(id)), run_config(out(again)));
  }
}

TEST_F(Cli, SynthCorpusRoundTripsThroughIngest) {
  ASSERT_EQ(run("synth --n-per-class 5 --out runs --run-id d").code, 0);
  EXPECT_EQ(count_lines(slurp(out("d") / "labels.csv")), 36u);
  const Outcome t = run("train --dataset runs/d/dataset --epochs 1 --arch 'Intel Loihi' --out runs --run-id t");
  ASSERT_EQ(t.code, 0) << t.output;
  EXPECT_NE(t.output.find("data: 28 train, 7 test"), std::string::npos);
  EXPECT_EQ(run("train --dataset runs/nowhere --epochs 1 --out runs").code, 2);
  EXPECT_EQ(run("train --dataset runs/d/dataset --synthetic 2 --out runs").code, 1);
}

// The Pi architecture (the default) trained 30 epochs on the 700-sample
// synthetic corpus. Takes several minutes on one core.
TEST_F(Cli, SyntheticTrainingReachesAccuracyTarget) {
  const Outcome o = run("train --synthetic 100 --epochs 30 --out runs --run-id pi");
  ASSERT_EQ(o.code, 0) << o.output;
  const auto m = nlohmann::json::parse(slurp(out("pi") / "metrics.json"));
  EXPECT_EQ(m["spec"], "blocks=2 K=[16,24] FC=[100,80]");
  EXPECT_EQ(m["train_samples"].get<int>() + m["test_samples"].get<int>(), 700);
  EXPECT_GE(m["test_accuracy"].get<double>(), 0.95);
  EXPECT_EQ(count_lines(slurp(out("pi") / "history.csv")), 31u);
}
