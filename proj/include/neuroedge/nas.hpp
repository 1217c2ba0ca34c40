// Hardware-aware architecture search: staged objectives (accuracy, then
// accuracy + latency, then accuracy per energy), a tree-structured Parzen
// estimator over the grid, and an append-only JSON-lines trial ledger.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroedge/model_ir.hpp"
#include "neuroedge/rng.hpp"

namespace neuroedge {

class NasError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { acc, acc_latency, acc_pdp };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::acc: return "acc";
    case Stage::acc_latency: return "acc_latency";
    case Stage::acc_pdp: return "acc_pdp";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::acc, Stage::acc_latency, Stage::acc_pdp}) {
    if (s == to_string(st)) return st;
  }
  throw NasError("unknown stage '" + s + "'");
}

struct Metrics {
  double accuracy = 0.0;  // percent
  double latency_ms = 0.0;
  double power_w = 0.0;
  double pdp_mj = 0.0;  // power x latency

  static Metrics from(double accuracy, double latency_ms, double power_w) {
    return {accuracy, latency_ms, power_w, power_w * latency_ms};
  }
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct ObjectiveWeights {
  double latency_per_ms = 0.1;  // accuracy points per millisecond
};

// Lower is better.
inline double objective(const Metrics& m, Stage stage, const ObjectiveWeights& w = {}) {
  switch (stage) {
    case Stage::acc: return -m.accuracy;
    case Stage::acc_latency: return -m.accuracy + w.latency_per_ms * m.latency_ms;
    case Stage::acc_pdp:
      if (m.pdp_mj == 0.0) throw NasError("objective acc_pdp is undefined for pdp == 0");
      return -m.accuracy / m.pdp_mj;
  }
  return 0.0;
}

enum class TrialStatus { done, failed };

struct Trial {
  std::size_t index = 0;
  Stage stage = Stage::acc;
  ModelSpec spec;
  std::uint64_t seed = 0;  // handed to the evaluator
  TrialStatus status = TrialStatus::done;
  std::optional<Metrics> metrics;  // present iff done
  std::string error;               // set iff failed
  std::string origin;              // "random", "startup" or "tpe"
};

inline double objective(const Trial& t, Stage stage, const ObjectiveWeights& w = {}) {
  if (!t.metrics) throw NasError("trial " + std::to_string(t.index) + " has no metrics");
  return objective(*t.metrics, stage, w);
}

// Draws every parameter on its grid; kernels are drawn for all four blocks
// and truncated, so each draw consumes the same amount of randomness.
inline ModelSpec sample_spec(const SearchSpace& space, Xoshiro256& rng) {
  ModelSpec s;
  s.blocks = space.blocks.value(rng.below(space.blocks.count()));
  std::array<int, 4> k{};
  for (std::size_t b = 0; b < 4; ++b) k[b] = space.kernels[b].value(rng.below(space.kernels[b].count()));
  s.kernels.assign(k.begin(), k.begin() + s.blocks);
  s.fc[0] = space.fc1.value(rng.below(space.fc1.count()));
  s.fc[1] = space.fc2.value(rng.below(space.fc2.count()));
  return s;
}

inline std::vector<ModelSpec> enumerate_space(const SearchSpace& space) {
  std::vector<ModelSpec> out;
  for (int blocks : space.blocks.values()) {
    std::vector<std::vector<int>> prefixes{{}};
    for (int b = 0; b < blocks; ++b) {
      std::vector<std::vector<int>> next;
      for (const auto& p : prefixes) {
        for (int k : space.kernels[static_cast<std::size_t>(b)].values()) {
          next.push_back(p);
          next.back().push_back(k);
        }
      }
      prefixes = std::move(next);
    }
    for (const auto& ks : prefixes) {
      for (int f1 : space.fc1.values()) {
        for (int f2 : space.fc2.values()) {
          ModelSpec s;
          s.blocks = blocks;
          s.kernels = ks;
          s.fc = {f1, f2};
          out.push_back(s);
        }
      }
    }
  }
  return out;
}

struct StagePlan {
  Stage stage = Stage::acc;
  double fraction = 0.0;
};

struct SearchConfig {
  std::size_t budget = 60;
  std::vector<StagePlan> stages{{Stage::acc, 0.4}, {Stage::acc_latency, 0.3}, {Stage::acc_pdp, 0.3}};
  ObjectiveWeights weights{};
  double gamma = 0.25;        // fraction of observations modelled as good
  double exploration = 0.2;   // probability of a uniform-random proposal
  std::size_t carry = 5;      // best specs seeded into the next stage
  std::size_t startup = 5;    // random proposals until a stage has this many observations
  std::size_t candidates = 24;
  double bandwidth = 1.0;     // kernel width in grid steps
  double prior_weight = 1.0;  // weight of the uniform prior in each density
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (budget == 0) throw NasError("search budget must be positive");
    if (stages.empty()) throw NasError("search needs at least one stage");
    double total = 0.0;
    for (const auto& s : stages) {
      if (!(s.fraction >= 0.0)) throw NasError("stage fractions must be non-negative");
      total += s.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9) throw NasError("stage fractions must sum to 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw NasError("gamma must lie in (0, 1)");
    if (!(exploration >= 0.0 && exploration <= 1.0)) throw NasError("exploration must lie in [0, 1]");
    if (candidates == 0) throw NasError("candidates must be positive");
    if (!(bandwidth > 0.0)) throw NasError("bandwidth must be positive");
    if (!(prior_weight > 0.0)) throw NasError("prior weight must be positive");
    if (workers == 0) throw NasError("workers must be positive");
  }
};

// Trials per stage: floor of each share, the remainder going to the last stage.
inline std::vector<std::size_t> stage_sizes(const SearchConfig& cfg) {
  std::vector<std::size_t> n;
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < cfg.stages.size(); ++i) {
    n.push_back(static_cast<std::size_t>(std::floor(cfg.stages[i].fraction * static_cast<double>(cfg.budget) + 1e-9)));
    used += n.back();
  }
  n.push_back(cfg.budget - std::min(used, cfg.budget));
  return n;
}

// Index into cfg.stages of the stage that runs trial `index`.
inline std::size_t stage_slot(const SearchConfig& cfg, std::size_t index) {
  const auto sizes = stage_sizes(cfg);
  std::size_t end = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    end += sizes[i];
    if (index < end) return i;
  }
  return sizes.size() - 1;
}

class SearchLedger {
 public:
  std::vector<Trial> trials;

  // Best completed trial of each stage under that stage's objective; ties go
  // to the earlier trial.
  std::map<Stage, std::size_t> best_per_stage(const ObjectiveWeights& w = {}) const {
    std::map<Stage, std::size_t> best;
    for (const auto& t : trials) {
      if (t.status != TrialStatus::done) continue;
      auto it = best.find(t.stage);
      if (it == best.end() || objective(t, t.stage, w) < objective(trials[it->second], t.stage, w)) {
        best[t.stage] = t.index;
      }
    }
    return best;
  }

  // 1-based position of the first trial evaluating `spec`, if any.
  std::optional<std::size_t> trials_to(const ModelSpec& spec) const {
    for (const auto& t : trials) {
      if (t.spec == spec) return t.index + 1;
    }
    return std::nullopt;
  }
};

inline nlohmann::ordered_json to_json(const Trial& t) {
  nlohmann::ordered_json j;
  j["trial"] = t.index;
  j["stage"] = to_string(t.stage);
  j["origin"] = t.origin;
  j["seed"] = t.seed;
  j["status"] = t.status == TrialStatus::done ? "done" : "failed";
  j["spec"] = {{"blocks", t.spec.blocks}, {"kernels", t.spec.kernels}, {"fc", t.spec.fc}};
  if (t.metrics) {
    j["metrics"] = {{"accuracy", t.metrics->accuracy},
                    {"latency_ms", t.metrics->latency_ms},
                    {"power_w", t.metrics->power_w},
                    {"pdp_mj", t.metrics->pdp_mj}};
  }
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

inline Trial trial_from_json(const nlohmann::json& j) {
  Trial t;
  try {
    t.index = j.at("trial").get<std::size_t>();
    t.stage = stage_from_string(j.at("stage").get<std::string>());
    t.origin = j.value("origin", "");
    t.seed = j.at("seed").get<std::uint64_t>();
    const std::string status = j.at("status").get<std::string>();
    if (status != "done" && status != "failed") throw NasError("unknown trial status '" + status + "'");
    t.status = status == "done" ? TrialStatus::done : TrialStatus::failed;
    const auto& s = j.at("spec");
    t.spec.blocks = s.at("blocks").get<int>();
    t.spec.kernels = s.at("kernels").get<std::vector<int>>();
    t.spec.fc = s.at("fc").get<std::array<int, 2>>();
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      t.metrics = Metrics{m.at("accuracy").get<double>(), m.at("latency_ms").get<double>(),
                          m.at("power_w").get<double>(), m.at("pdp_mj").get<double>()};
    }
    t.error = j.value("error", "");
  } catch (const nlohmann::json::exception& e) {
    throw NasError(std::string("malformed ledger entry: ") + e.what());
  }
  if ((t.status == TrialStatus::done) != t.metrics.has_value()) {
    throw NasError("trial " + std::to_string(t.index) + ": metrics must be present exactly when done");
  }
  return t;
}

inline void write_jsonl(std::ostream& out, const SearchLedger& ledger) {
  for (const auto& t : ledger.trials) out << to_json(t).dump() << '\n';
}

inline SearchLedger read_jsonl(std::istream& in) {
  SearchLedger ledger;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw NasError("ledger line " + std::to_string(line_no) + " is not valid JSON");
    }
    Trial t = trial_from_json(j);
    if (t.index != ledger.trials.size()) {
      throw NasError("ledger line " + std::to_string(line_no) + ": trials must be numbered consecutively from 0");
    }
    ledger.trials.push_back(std::move(t));
  }
  return ledger;
}

inline SearchLedger load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NasError("cannot open ledger " + path.string());
  return read_jsonl(in);
}

using Evaluator = std::function<Metrics(const ModelSpec&, std::uint64_t seed)>;

namespace detail {

// A spec as grid indices: blocks, K1..K4 (inactive beyond `blocks`), FC1, FC2.
constexpr std::size_t nas_dims = 7;

inline std::array<int, nas_dims> encode(const SearchSpace& space, const ModelSpec& s) {
  std::array<int, nas_dims> x{};
  x.fill(-1);
  x[0] = static_cast<int>(space.blocks.index_of(s.blocks));
  for (std::size_t b = 0; b < s.kernels.size(); ++b) x[1 + b] = static_cast<int>(space.kernels[b].index_of(s.kernels[b]));
  x[5] = static_cast<int>(space.fc1.index_of(s.fc[0]));
  x[6] = static_cast<int>(space.fc2.index_of(s.fc[1]));
  return x;
}

inline const ParamRange& dim_range(const SearchSpace& space, std::size_t d) {
  if (d == 0) return space.blocks;
  if (d <= 4) return space.kernels[d - 1];
  return d == 5 ? space.fc1 : space.fc2;
}

// Discrete Gaussian kernel on a grid of n values, centred on index c.
inline std::vector<double> grid_kernel(std::size_t n, std::size_t c, double bandwidth) {
  std::vector<double> k(n);
  double z = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double d = (static_cast<double>(v) - static_cast<double>(c)) / bandwidth;
    k[v] = std::exp(-0.5 * d * d);
    z += k[v];
  }
  for (double& v : k) v /= z;
  return k;
}

inline std::size_t draw(const std::vector<double>& p, Xoshiro256& rng) {
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    if (u < p[i]) return i;
    u -= p[i];
  }
  return p.size() - 1;
}

struct Observation {
  std::array<int, nas_dims> x;
  double y;
  std::size_t index;
};

// Tree-structured Parzen model. Observations are split at the gamma
// quantile into good and bad groups; each group's density is a uniform prior
// plus one product kernel per observation, so candidates are drawn around
// whole good configurations. Good kernels are weighted by rank (best first).
// Kernel dimensions beyond a spec's block count are inactive and skipped.
struct Parzen {
  std::vector<std::array<int, nas_dims>> good, bad;
  std::vector<double> good_w, bad_w;  // component weights, summing to the group size
  std::array<std::vector<std::vector<double>>, nas_dims> kernel;  // [d][centre][value]
  std::array<std::size_t, nas_dims> n{};
  double prior = 1.0;

  Parzen(const SearchSpace& space, std::vector<Observation> obs, const SearchConfig& cfg)
      : prior(cfg.prior_weight) {
    std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
      return a.y != b.y ? a.y < b.y : a.index < b.index;
    });
    const auto n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.gamma * static_cast<double>(obs.size()))));
    for (std::size_t i = 0; i < obs.size(); ++i) (i < n_good ? good : bad).push_back(obs[i].x);
    good_w.assign(good.size(), 1.0);
    bad_w.assign(bad.size(), 1.0);
    if (good.size() > 1) {
      const double m = static_cast<double>(good.size());
      for (std::size_t i = 0; i < good.size(); ++i) good_w[i] = 2.0 * (m - static_cast<double>(i)) / (m + 1.0);
    }
    for (std::size_t d = 0; d < nas_dims; ++d) {
      n[d] = dim_range(space, d).count();
      kernel[d].resize(n[d]);
      for (std::size_t c = 0; c < n[d]; ++c) kernel[d][c] = grid_kernel(n[d], c, cfg.bandwidth);
    }
  }

  // Kernel mass of value v in dimension d around centre c; a centre where the
  // dimension is inactive spreads uniformly.
  double k(std::size_t d, int c, int v) const {
    if (c < 0) return 1.0 / static_cast<double>(n[d]);
    return kernel[d][static_cast<std::size_t>(c)][static_cast<std::size_t>(v)];
  }

  double log_density(const std::vector<std::array<int, nas_dims>>& group, const std::vector<double>& w,
                     const std::array<int, nas_dims>& x) const {
    double uniform = 1.0;
    for (std::size_t d = 0; d < nas_dims; ++d) {
      if (x[d] >= 0) uniform /= static_cast<double>(n[d]);
    }
    double sum = prior * uniform;
    for (std::size_t i = 0; i < group.size(); ++i) {
      double p = w[i];
      for (std::size_t d = 0; d < nas_dims; ++d) {
        if (x[d] >= 0) p *= k(d, group[i][d], x[d]);
      }
      sum += p;
    }
    return std::log(sum / (prior + static_cast<double>(group.size())));
  }

  std::array<int, nas_dims> sample(const SearchSpace& space, Xoshiro256& rng) const {
    std::vector<double> mix(good_w);
    mix.push_back(prior);
    const double total = prior + static_cast<double>(good.size());
    for (double& v : mix) v /= total;
    const std::size_t pick = draw(mix, rng);  // the last component is the prior
    std::array<int, nas_dims> x{};
    x.fill(-1);
    std::array<int, nas_dims> centre{};
    centre.fill(-1);
    if (pick < good.size()) centre = good[pick];
    for (std::size_t d = 0; d < nas_dims; ++d) {
      const std::size_t v = centre[d] < 0 ? rng.below(n[d]) : draw(kernel[d][static_cast<std::size_t>(centre[d])], rng);
      x[d] = static_cast<int>(v);
    }
    const int blocks = space.blocks.value(static_cast<std::size_t>(x[0]));
    for (std::size_t d = 1; d <= 4; ++d) {
      if (static_cast<int>(d) > blocks) x[d] = -1;
    }
    return x;
  }

  double score(const std::array<int, nas_dims>& x) const {
    return log_density(good, good_w, x) - log_density(bad, bad_w, x);
  }
};

inline ModelSpec decode(const SearchSpace& space, const std::array<int, nas_dims>& x) {
  ModelSpec s;
  s.blocks = space.blocks.value(static_cast<std::size_t>(x[0]));
  s.kernels.clear();
  for (int b = 0; b < s.blocks; ++b) {
    s.kernels.push_back(space.kernels[static_cast<std::size_t>(b)].value(static_cast<std::size_t>(x[1 + static_cast<std::size_t>(b)])));
  }
  s.fc = {space.fc1.value(static_cast<std::size_t>(x[5])), space.fc2.value(static_cast<std::size_t>(x[6]))};
  return s;
}

// Observations the model of slot `slot` sees: the best `carry` completed
// trials of the previous stage (under that stage's objective) plus the
// slot's own completed trials, scored under the slot's objective.
inline std::vector<Observation> stage_observations(const SearchSpace& space, const SearchConfig& cfg,
                                                   const std::vector<Trial>& trials, std::size_t slot) {
  std::vector<Observation> obs;
  const Stage stage = cfg.stages[slot].stage;
  if (slot > 0) {
    const Stage prev = cfg.stages[slot - 1].stage;
    std::vector<const Trial*> previous;
    for (const auto& t : trials) {
      if (t.status == TrialStatus::done && stage_slot(cfg, t.index) == slot - 1) previous.push_back(&t);
    }
    std::stable_sort(previous.begin(), previous.end(), [&](const Trial* a, const Trial* b) {
      return objective(*a, prev, cfg.weights) < objective(*b, prev, cfg.weights);
    });
    previous.resize(std::min(previous.size(), cfg.carry));
    for (const Trial* t : previous) obs.push_back({encode(space, t->spec), objective(*t, stage, cfg.weights), t->index});
  }
  for (const auto& t : trials) {
    if (t.status == TrialStatus::done && stage_slot(cfg, t.index) == slot) {
      obs.push_back({encode(space, t.spec), objective(t, stage, cfg.weights), t.index});
    }
  }
  return obs;
}

}  // namespace detail

inline std::uint64_t trial_seed(std::uint64_t search_seed, std::size_t index) {
  return derive_seed(search_seed ^ 0x6576616c75617465ULL, index);
}

// Proposal for trial `index` given every earlier trial (and, with several
// workers, the specs already proposed for the current batch).
inline std::pair<ModelSpec, std::string> propose(const SearchSpace& space, const SearchConfig& cfg,
                                                 const std::vector<Trial>& trials, std::size_t index,
                                                 const std::vector<ModelSpec>& pending = {}) {
  Xoshiro256 rng(derive_seed(cfg.seed, index));
  if (rng.uniform() < cfg.exploration) return {sample_spec(space, rng), "random"};
  const std::size_t slot = stage_slot(cfg, index);
  const auto obs = detail::stage_observations(space, cfg, trials, slot);
  std::set<std::array<int, detail::nas_dims>> seen;
  for (const auto& t : trials) seen.insert(detail::encode(space, t.spec));
  for (const auto& p : pending) seen.insert(detail::encode(space, p));
  if (obs.size() < std::max<std::size_t>(cfg.startup, 2)) {
    ModelSpec s = sample_spec(space, rng);
    for (int tries = 0; tries < 64 && seen.count(detail::encode(space, s)); ++tries) s = sample_spec(space, rng);
    return {s, "startup"};
  }
  const detail::Parzen model(space, obs, cfg);
  std::optional<std::array<int, detail::nas_dims>> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cfg.candidates; ++c) {
    const auto x = model.sample(space, rng);
    if (seen.count(x)) continue;
    const double s = model.score(x);
    if (s > best_score) {
      best_score = s;
      best = x;
    }
  }
  if (best) return {detail::decode(space, *best), "tpe"};
  // Every candidate was already evaluated: fall back to an unseen random spec.
  ModelSpec s = sample_spec(space, rng);
  for (int tries = 0; tries < 64 && seen.count(detail::encode(space, s)); ++tries) s = sample_spec(space, rng);
  return {s, "random"};
}

// Runs (or resumes) a staged search. Trials already in `ledger` are kept and
// numbering continues after them; `on_trial` sees each new trial as it is
// committed, in index order.
inline SearchLedger search(const SearchSpace& space, const Evaluator& evaluator, const SearchConfig& cfg,
                           SearchLedger ledger = {}, const std::function<void(const Trial&)>& on_trial = {}) {
  space.validate();
  cfg.validate();
  for (const auto& t : ledger.trials) {
    if (t.index >= cfg.budget) throw NasError("ledger holds more trials than the budget");
    if (t.stage != cfg.stages[stage_slot(cfg, t.index)].stage) {
      throw NasError("ledger trial " + std::to_string(t.index) + " belongs to a different stage schedule");
    }
    if (!space.contains(t.spec)) throw NasError("ledger trial " + std::to_string(t.index) + " lies outside the search space");
  }
  while (ledger.trials.size() < cfg.budget) {
    const std::size_t first = ledger.trials.size();
    const std::size_t batch = std::min(cfg.workers, cfg.budget - first);
    std::vector<Trial> pending(batch);
    std::vector<ModelSpec> proposed;
    for (std::size_t b = 0; b < batch; ++b) {
      Trial& t = pending[b];
      t.index = first + b;
      t.stage = cfg.stages[stage_slot(cfg, t.index)].stage;
      t.seed = trial_seed(cfg.seed, t.index);
      std::tie(t.spec, t.origin) = propose(space, cfg, ledger.trials, t.index, proposed);
      if (!space.contains(t.spec)) throw std::logic_error("proposal off the search grid: " + describe(t.spec));
      proposed.push_back(t.spec);
    }
    auto run = [&](Trial& t) {
      try {
        t.metrics = evaluator(t.spec, t.seed);
        if (!std::isfinite(t.metrics->accuracy) || !std::isfinite(t.metrics->latency_ms) ||
            !std::isfinite(t.metrics->power_w) || !std::isfinite(t.metrics->pdp_mj)) {
          throw NasError("evaluator returned non-finite metrics");
        }
        t.status = TrialStatus::done;
      } catch (const std::exception& e) {
        t.metrics.reset();
        t.status = TrialStatus::failed;
        t.error = e.what();
      }
    };
    if (batch == 1) {
      run(pending[0]);
    } else {
      std::vector<std::jthread> pool;
      for (auto& t : pending) pool.emplace_back([&run, &t] { run(t); });
    }
    for (auto& t : pending) {
      ledger.trials.push_back(t);
      if (on_trial) on_trial(ledger.trials.back());
    }
  }
  return ledger;
}

// Analytic stand-in for train + measure: accuracy is a concave quadratic
// in K1 peaked at 12, latency and power grow with every parameter.
// Deterministic and cheap, so the grid can be brute-forced.
inline Metrics surrogate_metrics(const ModelSpec& s) {
  static constexpr std::array<double, 4> k_latency{0.004, 0.008, 0.005, 0.004};
  const double k1 = s.kernels.empty() ? 0.0 : s.kernels.front();
  const double acc = 97.5 - 1.0 * (k1 - 12) * (k1 - 12);
  double latency = 0.3 + 0.45 * (s.blocks - 2) + 0.002 * s.fc[0] + 0.002 * s.fc[1];
  double power = 0.5 + 0.001 * (s.fc[0] + s.fc[1]);
  for (std::size_t b = 0; b < s.kernels.size() && b < 4; ++b) {
    latency += k_latency[b] * s.kernels[b];
    power += 0.004 * s.kernels[b];
  }
  return Metrics::from(acc, latency, power);
}

inline Evaluator surrogate_evaluator() {
  return [](const ModelSpec& s, std::uint64_t) { return surrogate_metrics(s); };
}

struct GridOptimum {
  ModelSpec spec;
  double objective = 0.0;
  double runner_up = 0.0;  // next best objective on the grid
};

// Exhaustive enumeration; the oracle for small grids.
inline GridOptimum brute_force_optimum(const SearchSpace& space, const std::function<Metrics(const ModelSpec&)>& f,
                                       Stage stage, const ObjectiveWeights& w = {}) {
  GridOptimum best{{}, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const auto& s : enumerate_space(space)) {
    const double y = objective(f(s), stage, w);
    if (y < best.objective) {
      best.runner_up = best.objective;
      best.objective = y;
      best.spec = s;
    } else if (y < best.runner_up) {
      best.runner_up = y;
    }
  }
  return best;
}

inline void write_search_summary(std::ostream& out, const SearchLedger& ledger, const ObjectiveWeights& w = {}) {
  std::size_t failed = 0;
  for (const auto& t : ledger.trials) failed += t.status == TrialStatus::failed;
  out << "trials: " << ledger.trials.size() << " (" << failed << " failed)\n";
  for (const auto& [stage, index] : ledger.best_per_stage(w)) {
    const Trial& t = ledger.trials[index];
    out << "best " << to_string(stage) << ": trial " << index << ' ' << describe(t.spec)
        << " accuracy=" << t.metrics->accuracy << " latency_ms=" << t.metrics->latency_ms
        << " power_w=" << t.metrics->power_w << " pdp_mj=" << t.metrics->pdp_mj
        << " objective=" << objective(t, stage, w) << '\n';
  }
}

}  // namespace neuroedge
