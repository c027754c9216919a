#pragma once

// Experiment orchestration: JSON experiment configs, per-seed setup
// (machine, dataset, targets), the four methods, and the robustness,
// ablation and comparison suites. Every sub-run builds its own machine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfl/baselines.hpp"
#include "mfl/emulator.hpp"
#include "mfl/errors.hpp"
#include "mfl/machine.hpp"
#include "mfl/mfl.hpp"
#include "mfl/process.hpp"
#include "mfl/report.hpp"
#include "mfl/spec_io.hpp"

namespace mfl {

inline const std::vector<std::string>& registered_methods() {
  static const std::vector<std::string> m{"mfl", "lsrs-lr", "random-search", "supervised-inverse"};
  return m;
}

struct AblationArm {
  std::string name;
  bool skip_loop_a = false;
  bool skip_loop_b = false;
  bool no_domain_randomization = false;

  int flag_count() const { return int(skip_loop_a) + int(skip_loop_b) + int(no_domain_randomization); }
};

struct ExperimentConfig {
  std::string scenario = "etch";
  std::optional<std::filesystem::path> spec_file;
  std::string method = "mfl";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t dataset_size = 500;
  double dataset_input_noise = 0.0;
  std::size_t target_count = 16;
  double target_band = 0.5;

  std::uint64_t machine_seed = 7;
  MachineOptions machine;
  EmulatorConfig emulator;
  MflConfig mfl;
  LsrsConfig lsrs;  // bounds are filled per run
  bool lsrs_recommended_window = false;
  std::size_t random_search_samples = 2100;
  SupervisedConfig supervised;

  std::vector<double> robustness_noise;
  std::vector<double> robustness_shift;
  bool robustness_compare_supervised = true;

  std::vector<AblationArm> ablation_arms{{"full", false, false, false},
                                         {"no_loop_a", true, false, false},
                                         {"no_loop_b", false, true, false},
                                         {"no_domain_randomization", false, false, true}};
  double ablation_input_noise = 0.0;

  ProcessSpec spec() const {
    if (spec_file) return load_spec_file(*spec_file);
    return builtin_spec(scenario);
  }

  void validate() const {
    if (!spec_file) builtin_spec(scenario);
    if (std::find(registered_methods().begin(), registered_methods().end(), method) == registered_methods().end())
      throw ConfigError("unknown method '" + method + "'");
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (dataset_size < 1) throw ConfigError("dataset_size must be >= 1");
    if (target_count < 1) throw ConfigError("target_count must be >= 1");
    if (!(target_band > 0.0 && target_band <= 1.0)) throw ConfigError("target_band must be in (0, 1]");
    if (!(dataset_input_noise >= 0.0)) throw ConfigError("dataset_input_noise must be >= 0");
    if (!(machine.gain > 0.0)) throw ConfigError("machine.gain must be > 0");
    if (!(machine.input_noise >= 0.0) || !(machine.output_noise >= 0.0))
      throw ConfigError("machine noise must be >= 0");
    if (machine.hidden_width < 1 || machine.hidden_layers < 0) throw ConfigError("machine hidden shape invalid");
    emulator.validate();
    mfl.validate();
    supervised.validate();
    if (lsrs.samples < 1 || lsrs.top_k < 1 || lsrs.top_k > lsrs.samples)
      throw ConfigError("lsrs.top_k must be in [1, samples]");
    if (lsrs.refine_steps < 0 || !(lsrs.eta > 0.0)) throw ConfigError("lsrs.refine_steps >= 0 and eta > 0 required");
    if (random_search_samples < 1) throw ConfigError("random_search.samples must be >= 1");
    for (double v : robustness_noise)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("robustness.noise values must be finite and >= 0");
    for (double v : robustness_shift)
      if (!std::isfinite(v)) throw ConfigError("robustness.shift values must be finite");
    if (!(ablation_input_noise >= 0.0)) throw ConfigError("ablation.input_noise must be >= 0");
    std::set<std::string> names;
    for (const auto& arm : ablation_arms) {
      if (arm.name.empty() || arm.name.find_first_of("/\\ .") != std::string::npos)
        throw ConfigError("ablation arm names must be non-empty and contain no '/', '\\\\', '.' or spaces");
      if (!names.insert(arm.name).second) throw ConfigError("duplicate ablation arm '" + arm.name + "'");
      if (arm.flag_count() > 1) throw ConfigError("ablation arm '" + arm.name + "' sets conflicting flags");
    }
  }
};

// ---- JSON ----

namespace detail {

// Reads an object's members, complaining about any key left unread.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    // nlohmann converts -1 to a huge unsigned value; refuse instead.
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where_ + "." + key + " must be true or false");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!non_negative_integer(v)) throw ConfigError(where_ + "." + key + " must be a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
      if (!v.is_array()) throw ConfigError(where_ + "." + key + " must be an array");
      for (const auto& e : v)
        if (!non_negative_integer(e)) throw ConfigError(where_ + "." + key + " must hold non-negative integers");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where_ + "." + key + " must be an integer");
    }
    try {
      out = v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const nlohmann::json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + where_ + "." + it.key() + "'");
  }

 private:
  static bool non_negative_integer(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline double read_number_or_inf(const nlohmann::json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string() && (j == "inf" || j == "+inf")) return std::numeric_limits<double>::infinity();
  throw ConfigError(where + " must be a number or \"inf\"");
}

}  // namespace detail

// Defaults that depend on the scenario: the linear toy uses linear models.
inline void apply_scenario_defaults(ExperimentConfig& c) {
  if (c.scenario == "toy-linear") {
    c.machine.linear = true;
    c.emulator.hidden = {};
    c.emulator.randomization_std = 0.0;
    c.mfl.reverse_hidden = {};
    c.mfl.reverse_output = Activation::identity;
    c.supervised.hidden = {};
    c.supervised.output = Activation::identity;
  }
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  detail::StrictObject top(j, "config");
  top.read("scenario", c.scenario);
  apply_scenario_defaults(c);
  if (top.has("spec_file")) {
    std::string f;
    top.read("spec_file", f);
    std::filesystem::path p(f);
    c.spec_file = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  top.read("method", c.method);
  top.read("seeds", c.seeds);
  top.read("dataset_size", c.dataset_size);
  top.read("dataset_input_noise", c.dataset_input_noise);
  top.read("target_count", c.target_count);
  top.read("target_band", c.target_band);

  if (top.has("machine")) {
    detail::StrictObject m(top.child("machine"), "machine");
    m.read("seed", c.machine_seed);
    m.read("hidden_width", c.machine.hidden_width);
    m.read("hidden_layers", c.machine.hidden_layers);
    m.read("linear", c.machine.linear);
    m.read("gain", c.machine.gain);
    m.read("input_noise", c.machine.input_noise);
    m.read("output_noise", c.machine.output_noise);
    m.finish();
  }
  if (top.has("emulator")) {
    detail::StrictObject e(top.child("emulator"), "emulator");
    e.read("hidden", c.emulator.hidden);
    e.read("epochs", c.emulator.epochs);
    e.read("learning_rate", c.emulator.learning_rate);
    e.read("randomization_std", c.emulator.randomization_std);
    e.read("validation_fraction", c.emulator.validation_fraction);
    std::string opt(to_string(c.emulator.optimizer));
    e.read("optimizer", opt);
    c.emulator.optimizer = optimizer_from_string(opt);
    e.finish();
  }
  if (top.has("mfl")) {
    detail::StrictObject m(top.child("mfl"), "mfl");
    m.read("alpha1", c.mfl.alpha1);
    m.read("alpha2", c.mfl.alpha2);
    m.read("loop_a_iterations", c.mfl.loop_a_iterations);
    m.read("loop_a_gate_start", c.mfl.loop_a_gate_start);
    m.read("loop_b_iterations", c.mfl.loop_b_iterations);
    m.read("loop_b_gate_start", c.mfl.loop_b_gate_start);
    if (m.has("delta")) c.mfl.delta = detail::read_number_or_inf(m.child("delta"), "mfl.delta");
    m.read("reverse_hidden", c.mfl.reverse_hidden);
    std::string out(to_string(c.mfl.reverse_output));
    m.read("reverse_output", out);
    c.mfl.reverse_output = activation_from_string(out);
    m.read("early_stop", c.mfl.early_stop);
    std::string port(to_string(c.mfl.port));
    m.read("jacobian_port", port);
    c.mfl.port = jacobian_port_from_string(port);
    m.read("fd_step", c.mfl.fd_step);
    m.finish();
  }
  if (top.has("lsrs")) {
    detail::StrictObject l(top.child("lsrs"), "lsrs");
    l.read("samples", c.lsrs.samples);
    l.read("top_k", c.lsrs.top_k);
    l.read("refine_steps", c.lsrs.refine_steps);
    l.read("eta", c.lsrs.eta);
    std::string window = c.lsrs_recommended_window ? "recommended" : "full";
    l.read("search_window", window);
    if (window != "full" && window != "recommended")
      throw ConfigError("lsrs.search_window must be \"full\" or \"recommended\"");
    c.lsrs_recommended_window = window == "recommended";
    l.finish();
  }
  if (top.has("random_search")) {
    detail::StrictObject r(top.child("random_search"), "random_search");
    r.read("samples", c.random_search_samples);
    r.finish();
  }
  if (top.has("supervised")) {
    detail::StrictObject s(top.child("supervised"), "supervised");
    s.read("hidden", c.supervised.hidden);
    std::string out(to_string(c.supervised.output));
    s.read("output", out);
    c.supervised.output = activation_from_string(out);
    s.read("epochs", c.supervised.epochs);
    s.read("learning_rate", c.supervised.learning_rate);
    std::string opt(to_string(c.supervised.optimizer));
    s.read("optimizer", opt);
    c.supervised.optimizer = optimizer_from_string(opt);
    s.read("validation_fraction", c.supervised.validation_fraction);
    s.finish();
  }
  if (top.has("robustness")) {
    detail::StrictObject r(top.child("robustness"), "robustness");
    r.read("noise", c.robustness_noise);
    r.read("shift", c.robustness_shift);
    r.read("compare_supervised", c.robustness_compare_supervised);
    r.finish();
  }
  if (top.has("ablation")) {
    detail::StrictObject a(top.child("ablation"), "ablation");
    a.read("input_noise", c.ablation_input_noise);
    if (a.has("arms")) {
      const auto& arms = a.child("arms");
      if (!arms.is_array()) throw ConfigError("ablation.arms must be an array");
      c.ablation_arms.clear();
      for (const auto& arm_json : arms) {
        detail::StrictObject arm(arm_json, "ablation.arms[]");
        AblationArm x;
        arm.read("name", x.name);
        arm.read("skip_loop_a", x.skip_loop_a);
        arm.read("skip_loop_b", x.skip_loop_b);
        bool dr = true;
        arm.read("domain_randomization", dr);
        x.no_domain_randomization = !dr;
        arm.finish();
        c.ablation_arms.push_back(std::move(x));
      }
    }
    a.finish();
  }
  top.finish();
  if (c.spec_file) {
    const ProcessSpec s = c.spec();
    if (j.contains("scenario") && c.scenario != s.name)
      throw ConfigError("scenario '" + c.scenario + "' does not match spec file name '" + s.name + "'");
    c.scenario = s.name;
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

// Fully resolved config, as echoed into reports.
inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : c.ablation_arms)
    arms.push_back({{"name", a.name},
                    {"skip_loop_a", a.skip_loop_a},
                    {"skip_loop_b", a.skip_loop_b},
                    {"domain_randomization", !a.no_domain_randomization}});
  nlohmann::json j = {
      {"scenario", c.scenario},
      {"method", c.method},
      {"seeds", c.seeds},
      {"dataset_size", c.dataset_size},
      {"dataset_input_noise", c.dataset_input_noise},
      {"target_count", c.target_count},
      {"target_band", c.target_band},
      {"machine",
       {{"seed", c.machine_seed},
        {"hidden_width", c.machine.hidden_width},
        {"hidden_layers", c.machine.hidden_layers},
        {"linear", c.machine.linear},
        {"gain", c.machine.gain},
        {"input_noise", c.machine.input_noise},
        {"output_noise", c.machine.output_noise}}},
      {"emulator",
       {{"hidden", c.emulator.hidden},
        {"epochs", c.emulator.epochs},
        {"learning_rate", c.emulator.learning_rate},
        {"randomization_std", c.emulator.randomization_std},
        {"validation_fraction", c.emulator.validation_fraction},
        {"optimizer", std::string(to_string(c.emulator.optimizer))}}},
      {"mfl", mfl_config_json(c.mfl)},
      {"lsrs",
       {{"samples", c.lsrs.samples},
        {"top_k", c.lsrs.top_k},
        {"refine_steps", c.lsrs.refine_steps},
        {"eta", c.lsrs.eta},
        {"search_window", c.lsrs_recommended_window ? "recommended" : "full"}}},
      {"random_search", {{"samples", c.random_search_samples}}},
      {"supervised",
       {{"hidden", c.supervised.hidden},
        {"output", std::string(to_string(c.supervised.output))},
        {"epochs", c.supervised.epochs},
        {"learning_rate", c.supervised.learning_rate},
        {"optimizer", std::string(to_string(c.supervised.optimizer))},
        {"validation_fraction", c.supervised.validation_fraction}}},
      {"robustness",
       {{"noise", c.robustness_noise},
        {"shift", c.robustness_shift},
        {"compare_supervised", c.robustness_compare_supervised}}},
      {"ablation", {{"input_noise", c.ablation_input_noise}, {"arms", arms}}}};
  j["mfl"].erase("seed");
  if (c.spec_file) j["spec_file"] = c.spec_file->string();
  return j;
}

// ---- per-seed setup ----

struct SeedContext {
  ProcessSpec spec;
  GroundTruthMachine machine;
  Dataset data;
  TargetSet targets;
  std::size_t dataset_queries = 0;
};

// Fresh machine (same plant for every seed), dataset and targets.
inline SeedContext prepare_seed(const ExperimentConfig& c, std::uint64_t seed,
                                std::optional<double> machine_input_noise = std::nullopt) {
  ProcessSpec spec = c.spec();
  MachineOptions mo = c.machine;
  if (machine_input_noise) mo.input_noise = *machine_input_noise;
  GroundTruthMachine machine = build_machine(spec, c.machine_seed, mo);
  Dataset data = sample_dataset(machine, c.dataset_size, c.dataset_input_noise, seed);
  const std::size_t q = machine.evaluations();
  TargetSet targets = make_targets(machine, c.target_count, c.target_band, seed);
  return {std::move(spec), std::move(machine), std::move(data), std::move(targets), q};
}

inline EmulatorConfig emulator_config_for(const ExperimentConfig& c, std::uint64_t seed) {
  EmulatorConfig e = c.emulator;
  e.seed = seed;
  return e;
}

inline MflConfig mfl_config_for(const ExperimentConfig& c, std::uint64_t seed) {
  MflConfig m = c.mfl;
  m.seed = seed;
  return m;
}

inline std::string seed_label(const std::string& prefix, std::uint64_t seed) {
  return prefix + "_s" + std::to_string(seed);
}

namespace detail {

inline void stamp(RunReport& r, const ExperimentConfig& c, const SeedContext& ctx, std::string method,
                  std::uint64_t seed, std::string label) {
  r.method = std::move(method);
  r.scenario = ctx.spec.name;
  r.spec = ctx.spec;
  r.seed = seed;
  r.label = std::move(label);
  r.dataset_queries = ctx.dataset_queries;
  // Method-level settings (the MFL config actually used) override the echo.
  nlohmann::json echo = experiment_to_json(c);
  if (r.config.is_object())
    for (auto it = r.config.begin(); it != r.config.end(); ++it) echo[it.key()] = it.value();
  echo["seed"] = seed;
  r.config = std::move(echo);
}

inline double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace detail

// ---- methods on a prepared seed ----

inline RunReport run_mfl(const ExperimentConfig& c, SeedContext& ctx, std::uint64_t seed, const EmulatorFit& emulator,
                         const MflConfig& cfg, const MflOptions& opt, const std::string& label) {
  const auto start = std::chrono::steady_clock::now();
  MflOutcome out = mfl_train(emulator, ctx.machine, ctx.targets.targets, cfg, opt);
  RunReport r = std::move(out.report);
  detail::stamp(r, c, ctx, "mfl", seed, label);
  r.wall_clock_seconds = detail::seconds_since(start);
  return r;
}

inline std::pair<Vector, Vector> lsrs_bounds(const ExperimentConfig& c, const ProcessSpec& spec) {
  Vector lo = Vector::Constant(spec.input_count(), -1.0);
  Vector hi = Vector::Constant(spec.input_count(), 1.0);
  if (c.lsrs_recommended_window) {
    for (Eigen::Index i = 0; i < spec.input_count(); ++i) {
      const auto& in = spec.inputs[static_cast<std::size_t>(i)];
      if (!in.recommended) continue;
      const double span = in.upper - in.lower;
      lo[i] = 2.0 * (in.recommended->lower - in.lower) / span - 1.0;
      hi[i] = 2.0 * (in.recommended->upper - in.lower) / span - 1.0;
    }
  }
  return {lo, hi};
}

// Per-target search on the emulator, then one machine query per target.
inline RunReport run_search(const ExperimentConfig& c, SeedContext& ctx, std::uint64_t seed,
                            const EmulatorFit& emulator, bool refine, const std::string& label) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t q0 = ctx.machine.evaluations();
  const std::size_t c0 = ctx.machine.clipped_evaluations();
  const auto [lo, hi] = lsrs_bounds(c, ctx.spec);
  const auto zn = normalize_targets(ctx.targets, ctx.spec);
  RunReport r;
  r.spec = ctx.spec;
  r.emulator_validation_mse = emulator.validation_mse;
  Matrix recipes(ctx.spec.input_count(), static_cast<Eigen::Index>(zn.size()));
  double final_sum = 0.0, best_sum = 0.0;
  const std::uint64_t base = derive_seed(seed, stream::baseline);
  for (std::size_t j = 0; j < zn.size(); ++j) {
    LsrsResult res;
    if (refine) {
      LsrsConfig lc = c.lsrs;
      lc.lower = lo;
      lc.upper = hi;
      lc.seed = derive_seed(base, j);
      res = lsrs_lr(emulator.net, zn[j], lc);
    } else {
      res = random_search(emulator.net, zn[j], lo, hi, c.random_search_samples, derive_seed(base, j));
    }
    recipes.col(static_cast<Eigen::Index>(j)) = res.x;
    final_sum += res.loss;
    best_sum += res.best_loss;
    IterationRow row;
    row.iteration = j;
    row.loop = refine ? 'L' : 'R';
    row.loss = res.loss;
    row.rate = refine ? c.lsrs.eta : 0.0;
    row.updated = refine && c.lsrs.refine_steps > 0;
    r.trace.push_back(row);
  }
  score_on_machine(r, ctx.machine, ctx.targets.targets, recipes);
  r.scoring_queries = ctx.machine.evaluations() - q0;
  r.method_queries = r.scoring_queries;
  r.clipped_evaluations = ctx.machine.clipped_evaluations() - c0;
  const double n = static_cast<double>(zn.size());
  r.notes.push_back("trace rows are per target: emulator MSE of the returned recipe");
  if (refine)
    r.notes.push_back("mean emulator MSE, final iterate " + format_double(final_sum / n) + ", best visited " +
                      format_double(best_sum / n));
  detail::stamp(r, c, ctx, refine ? "lsrs-lr" : "random-search", seed, label);
  r.wall_clock_seconds = detail::seconds_since(start);
  return r;
}

inline SupervisedFit fit_supervised(const ExperimentConfig& c, const SeedContext& ctx, std::uint64_t seed) {
  SupervisedConfig sc = c.supervised;
  sc.seed = seed;
  return supervised_inverse(ctx.data, ctx.spec, sc);
}

inline RunReport run_supervised(const ExperimentConfig& c, SeedContext& ctx, std::uint64_t seed,
                                const SupervisedFit& fit, const std::string& label) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t q0 = ctx.machine.evaluations();
  const std::size_t c0 = ctx.machine.clipped_evaluations();
  RunReport r;
  r.spec = ctx.spec;
  for (const auto& m : fit.fit.history) {
    IterationRow row;
    row.iteration = static_cast<std::size_t>(m.epoch);
    row.loop = 'S';
    row.loss = m.train_mse;
    row.rate = c.supervised.learning_rate;
    r.trace.push_back(row);
  }
  const Matrix z = targets_matrix(normalize_targets(ctx.targets, ctx.spec));
  score_on_machine(r, ctx.machine, ctx.targets.targets, fit.model.propose(z));
  r.scoring_queries = ctx.machine.evaluations() - q0;
  r.method_queries = r.scoring_queries;
  r.clipped_evaluations = ctx.machine.clipped_evaluations() - c0;
  r.notes.push_back("supervised inverse: direct regression of recipes on outputs over the dataset; "
                    "trace loss is the input-space training MSE per epoch");
  r.notes.push_back("supervised validation MSE (input space) " + format_double(fit.fit.validation_mse));
  detail::stamp(r, c, ctx, "supervised-inverse", seed, label);
  r.wall_clock_seconds = detail::seconds_since(start);
  return r;
}

inline RunReport run_method(const ExperimentConfig& c, const std::string& method, std::uint64_t seed,
                            const std::string& label) {
  SeedContext ctx = prepare_seed(c, seed);
  if (method == "supervised-inverse") return run_supervised(c, ctx, seed, fit_supervised(c, ctx, seed), label);
  const EmulatorFit emu = train_emulator(ctx.data, ctx.spec, emulator_config_for(c, seed));
  if (method == "mfl") return run_mfl(c, ctx, seed, emu, mfl_config_for(c, seed), {}, label);
  if (method == "lsrs-lr") return run_search(c, ctx, seed, emu, true, label);
  if (method == "random-search") return run_search(c, ctx, seed, emu, false, label);
  throw ConfigError("unknown method '" + method + "'");
}

// ---- suites ----

// The configured method over every seed.
inline std::vector<RunReport> run_experiment(const ExperimentConfig& c) {
  c.validate();
  std::vector<RunReport> out;
  for (auto seed : c.seeds) out.push_back(run_method(c, c.method, seed, seed_label(c.method, seed)));
  return out;
}

// All four methods per seed, sharing one emulator fit per seed. Each
// method gets its own fresh machine.
inline std::vector<RunReport> compare_methods(const ExperimentConfig& c) {
  c.validate();
  std::vector<RunReport> out;
  for (auto seed : c.seeds) {
    SeedContext base = prepare_seed(c, seed);
    const EmulatorFit emu = train_emulator(base.data, base.spec, emulator_config_for(c, seed));
    out.push_back(run_mfl(c, base, seed, emu, mfl_config_for(c, seed), {}, seed_label("mfl", seed)));
    SeedContext l = prepare_seed(c, seed);
    out.push_back(run_search(c, l, seed, emu, true, seed_label("lsrs-lr", seed)));
    SeedContext rs = prepare_seed(c, seed);
    out.push_back(run_search(c, rs, seed, emu, false, seed_label("random-search", seed)));
    SeedContext s = prepare_seed(c, seed);
    out.push_back(run_supervised(c, s, seed, fit_supervised(c, s, seed), seed_label("supervised-inverse", seed)));
  }
  return out;
}

inline std::string rung_text(double v) {
  std::string s = format_double(v);
  for (char& ch : s)
    if (ch == '.') ch = 'p';
  return s;
}

// MFL on the unperturbed targets, then once per noise magnitude and per
// shift value. Early stopping is off so every run spends the full budget.
inline std::vector<RunReport> robustness_sweep(const ExperimentConfig& c) {
  c.validate();
  if (c.robustness_noise.empty() && c.robustness_shift.empty())
    throw ConfigError("robustness needs at least one noise or shift value");
  std::vector<RunReport> out;
  for (auto seed : c.seeds) {
    MflConfig cfg = mfl_config_for(c, seed);
    cfg.early_stop = false;
    SeedContext first = prepare_seed(c, seed);
    const EmulatorFit emu = train_emulator(first.data, first.spec, emulator_config_for(c, seed));
    std::optional<SupervisedFit> sup;
    if (c.robustness_compare_supervised) sup = fit_supervised(c, first, seed);
    const TargetSet base_targets = first.targets;

    auto rung = [&](const std::string& tag, double noise, double shift, std::uint64_t rung_seed, bool perturb) {
      SeedContext ctx = prepare_seed(c, seed);
      std::string note;
      if (perturb) {
        ctx.targets = perturb_targets(base_targets, ctx.spec, noise, shift, c.target_band, rung_seed);
        note = "targets perturbed: noise " + format_double(noise) + ", shift " + format_double(shift) +
               " (normalized units); " + std::to_string(ctx.targets.clipped_coordinates) +
               " coordinates clipped into the +-" + format_double(c.target_band) + " band";
      }
      RunReport r = run_mfl(c, ctx, seed, emu, cfg, {}, seed_label("mfl", seed) + "_" + tag);
      if (!note.empty()) r.notes.push_back(note);
      r.config["robustness_rung"] = {{"noise", noise}, {"shift", shift}};
      out.push_back(std::move(r));
      if (sup) {
        SeedContext sctx = prepare_seed(c, seed);
        sctx.targets = ctx.targets;
        RunReport s = run_supervised(c, sctx, seed, *sup, seed_label("supervised-inverse", seed) + "_" + tag);
        if (!note.empty()) s.notes.push_back(note);
        s.config["robustness_rung"] = {{"noise", noise}, {"shift", shift}};
        out.push_back(std::move(s));
      }
    };
    rung("base", 0.0, 0.0, 0, false);
    for (std::size_t k = 0; k < c.robustness_noise.size(); ++k)
      rung("noise" + rung_text(c.robustness_noise[k]), c.robustness_noise[k], 0.0, derive_seed(seed, 100 + k), true);
    for (std::size_t k = 0; k < c.robustness_shift.size(); ++k)
      rung("shift" + rung_text(c.robustness_shift[k]), 0.0, c.robustness_shift[k], derive_seed(seed, 200 + k), true);
  }
  return out;
}

// One MFL run per arm per seed, differing only in the arm's flag. The
// machine carries `ablation.input_noise`; early stopping is off.
inline std::vector<RunReport> ablation_suite(const ExperimentConfig& c) {
  c.validate();
  if (c.ablation_arms.empty()) throw ConfigError("ablation needs at least one arm");
  std::vector<RunReport> out;
  for (auto seed : c.seeds) {
    std::optional<EmulatorFit> randomized, fixed;
    for (const auto& arm : c.ablation_arms) {
      SeedContext ctx = prepare_seed(c, seed, c.ablation_input_noise);
      auto& slot = arm.no_domain_randomization ? fixed : randomized;
      if (!slot) {
        EmulatorConfig ec = emulator_config_for(c, seed);
        if (arm.no_domain_randomization) ec.randomization_std = 0.0;
        slot = train_emulator(ctx.data, ctx.spec, ec);
      }
      MflConfig cfg = mfl_config_for(c, seed);
      cfg.early_stop = false;
      RunReport r = run_mfl(c, ctx, seed, *slot, cfg, {arm.skip_loop_a, arm.skip_loop_b}, seed_label(arm.name, seed));
      r.config["ablation_arm"] = {{"name", arm.name},
                                  {"skip_loop_a", arm.skip_loop_a},
                                  {"skip_loop_b", arm.skip_loop_b},
                                  {"domain_randomization", !arm.no_domain_randomization},
                                  {"machine_input_noise", c.ablation_input_noise}};
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct TrainedEmulator {
  std::uint64_t seed = 0;
  EmulatorFit fit;
  std::size_t dataset_queries = 0;
};

inline std::vector<TrainedEmulator> train_emulators(const ExperimentConfig& c) {
  c.validate();
  std::vector<TrainedEmulator> out;
  for (auto seed : c.seeds) {
    SeedContext ctx = prepare_seed(c, seed);
    out.push_back({seed, train_emulator(ctx.data, ctx.spec, emulator_config_for(c, seed)), ctx.dataset_queries});
  }
  return out;
}

}  // namespace mfl
