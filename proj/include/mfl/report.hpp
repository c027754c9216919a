#pragma once

// Run reports: per-iteration traces, final recipes and machine-scored
// outputs, plus their CSV / JSON renderings.
//
// "Output error" everywhere is sqrt of the mean over targets of the squared
// distance between target and machine output, in normalized output units.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfl/csv.hpp"
#include "mfl/errors.hpp"
#include "mfl/process.hpp"
#include "mfl/spec_io.hpp"

namespace mfl {

inline constexpr const char* kOutputErrorDefinition =
    "output error = sqrt(mean over targets of ||target - output||^2), normalized output units "
    "(each output's scale range mapped to [-1, 1])";

struct IterationRow {
  std::size_t iteration = 0;
  char loop = 'A';  // A: emulator loop, B: machine loop, S: supervised fit epochs
  double loss = 0.0;
  double mean_sensitivity = 0.0;
  double rate = 0.0;
  bool updated = true;  // false for a pure evaluation pass (early-stop check)
  double gradient_norm = 0.0;
  std::size_t cumulative_queries = 0;
  std::size_t targets_meeting = 0;
  std::size_t out_of_box = 0;

  double output_error() const { return std::sqrt(std::max(loss, 0.0)); }
  friend bool operator==(const IterationRow&, const IterationRow&) = default;
};

struct TargetOutcome {
  Vector target;  // physical units
  Vector recipe;  // physical units
  Vector output;  // machine-scored, physical units
  std::vector<Verdict> verdicts;
};

struct RunReport {
  std::string label;
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  ProcessSpec spec;
  nlohmann::json config = nlohmann::json::object();
  std::vector<IterationRow> trace;
  std::vector<TargetOutcome> outcomes;
  double final_loss = 0.0;
  double emulator_validation_mse = std::nan("");
  std::size_t dataset_queries = 0;
  std::size_t method_queries = 0;   // machine queries by the method, scoring included
  std::size_t scoring_queries = 0;  // part of method_queries spent on final scoring
  std::size_t clipped_evaluations = 0;
  std::size_t loop_b_updates = 0;
  std::optional<std::size_t> loop_b_iterations_to_meet;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> notes;

  double output_error() const { return std::sqrt(std::max(final_loss, 0.0)); }
  std::size_t total_queries() const { return dataset_queries + method_queries; }

  std::size_t targets_meeting() const {
    return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(),
                                                  [](const auto& o) { return mfl::all_meet(o.verdicts); }));
  }
  std::size_t metrics_meeting() const {
    std::size_t n = 0;
    for (const auto& o : outcomes)
      n += static_cast<std::size_t>(std::count(o.verdicts.begin(), o.verdicts.end(), Verdict::meets));
    return n;
  }
  bool all_meet() const { return !outcomes.empty() && targets_meeting() == outcomes.size(); }
  bool recipes_within_bounds() const {
    return std::all_of(outcomes.begin(), outcomes.end(),
                       [&](const auto& o) { return within_bounds(o.recipe, spec); });
  }
};

// Scores recipes against targets on already-measured outputs.
inline void fill_outcomes(RunReport& r, const std::vector<Vector>& targets,
                          const std::vector<Vector>& recipes, const std::vector<Vector>& outputs) {
  if (targets.size() != recipes.size() || targets.size() != outputs.size() || targets.empty())
    throw DimensionError("fill_outcomes: inconsistent target/recipe/output counts");
  r.outcomes.clear();
  double loss = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    r.outcomes.push_back({targets[j], recipes[j], outputs[j], classify_output(outputs[j], r.spec)});
    loss += (normalize_output(outputs[j], r.spec) - normalize_output(targets[j], r.spec)).squaredNorm();
  }
  r.final_loss = loss / static_cast<double>(targets.size());
}

// True when every stored verdict equals the classification of its output.
inline bool verdicts_consistent(const RunReport& r) {
  for (const auto& o : r.outcomes)
    if (classify_output(o.output, r.spec) != o.verdicts) return false;
  return true;
}

// ---- rendering helpers ----

inline std::string rule_text(const TargetRule& rule) {
  if (rule.kind == TargetRule::Kind::at_least) return ">= " + format_double(rule.meets.lower);
  return format_double(rule.meets.lower) + " to " + format_double(rule.meets.upper);
}

inline std::string close_text(const TargetRule& rule) {
  if (!rule.close) return "";
  if (rule.kind == TargetRule::Kind::at_least) return ">= " + format_double(rule.close->lower);
  return format_double(rule.close->lower) + " to " + format_double(rule.close->upper);
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "Meets") return Verdict::meets;
  if (s == "Close") return Verdict::close;
  if (s == "Far") return Verdict::far;
  throw FormatError("unknown verdict '" + std::string(s) + "'");
}

inline std::vector<std::string> trace_header() {
  return {"iteration",      "loop",          "loss", "output_error",       "mean_sensitivity",
          "rate",           "updated",       "gradient_norm", "cumulative_queries", "targets_meeting",
          "out_of_box"};
}

inline std::vector<std::string> trace_cells(const IterationRow& row) {
  return {std::to_string(row.iteration),
          std::string(1, row.loop),
          format_double(row.loss),
          format_double(row.output_error()),
          format_double(row.mean_sensitivity),
          format_double(row.rate),
          row.updated ? "1" : "0",
          format_double(row.gradient_norm),
          std::to_string(row.cumulative_queries),
          std::to_string(row.targets_meeting),
          std::to_string(row.out_of_box)};
}

inline void write_trace_csv(const RunReport& r, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row(trace_header());
  for (const auto& row : r.trace) csv.row(trace_cells(row));
}

// One row per output metric for the first target, plus how many of all
// targets meet that metric.
inline void write_summary_csv(const RunReport& r, const std::filesystem::path& path) {
  if (r.outcomes.empty()) throw ConfigError("report has no outcomes");
  CsvWriter csv(path);
  csv.row({"metric", "unit", "target", "close_band", "target_value", "output", "verdict",
           "targets_meeting_metric", "target_count"});
  const auto& first = r.outcomes.front();
  for (std::size_t k = 0; k < r.spec.outputs.size(); ++k) {
    const auto& out = r.spec.outputs[k];
    std::size_t meeting = 0;
    for (const auto& o : r.outcomes) meeting += o.verdicts[k] == Verdict::meets ? 1 : 0;
    csv.row({out.name, out.unit, rule_text(out.rule), close_text(out.rule),
             format_double(first.target[static_cast<Eigen::Index>(k)]),
             format_double(first.output[static_cast<Eigen::Index>(k)]), std::string(to_string(first.verdicts[k])),
             std::to_string(meeting), std::to_string(r.outcomes.size())});
  }
}

// Input ranges next to the generated recipe for the first target.
inline void write_recipe_csv(const RunReport& r, const std::filesystem::path& path) {
  if (r.outcomes.empty()) throw ConfigError("report has no outcomes");
  CsvWriter csv(path);
  csv.row({"input", "unit", "lower", "upper", "value", "within_bounds"});
  const auto& x = r.outcomes.front().recipe;
  for (std::size_t i = 0; i < r.spec.inputs.size(); ++i) {
    const auto& in = r.spec.inputs[i];
    const double v = x[static_cast<Eigen::Index>(i)];
    csv.row({in.name, in.unit, format_double(in.lower), format_double(in.upper), format_double(v),
             v >= in.lower && v <= in.upper ? "1" : "0"});
  }
}

// Every target: long format, one row per (target, metric) and per (target, input).
inline void write_outcomes_csv(const RunReport& r, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row({"target_index", "kind", "name", "target", "value", "verdict"});
  for (std::size_t j = 0; j < r.outcomes.size(); ++j) {
    const auto& o = r.outcomes[j];
    for (std::size_t k = 0; k < r.spec.outputs.size(); ++k)
      csv.row({std::to_string(j), "output", r.spec.outputs[k].name,
               format_double(o.target[static_cast<Eigen::Index>(k)]),
               format_double(o.output[static_cast<Eigen::Index>(k)]), std::string(to_string(o.verdicts[k]))});
    for (std::size_t i = 0; i < r.spec.inputs.size(); ++i)
      csv.row({std::to_string(j), "input", r.spec.inputs[i].name, "",
               format_double(o.recipe[static_cast<Eigen::Index>(i)]), ""});
  }
}

// ---- JSON ----

namespace detail {

inline nlohmann::json vec_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// JSON has no NaN; null stands in for "not available".
inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["format"] = "mfl-run-report";
  j["version"] = 1;
  j["label"] = r.label;
  j["method"] = r.method;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["output_error_definition"] = kOutputErrorDefinition;
  j["spec"] = spec_to_json(r.spec);
  j["config"] = r.config;
  j["final_loss"] = r.final_loss;
  j["output_error"] = r.output_error();
  j["emulator_validation_mse"] = detail::number_or_null(r.emulator_validation_mse);
  j["queries"] = {{"dataset", r.dataset_queries},
                  {"method", r.method_queries},
                  {"scoring", r.scoring_queries},
                  {"total", r.total_queries()},
                  {"clipped", r.clipped_evaluations}};
  j["loop_b_updates"] = r.loop_b_updates;
  j["loop_b_iterations_to_meet"] =
      r.loop_b_iterations_to_meet ? nlohmann::json(*r.loop_b_iterations_to_meet) : nlohmann::json(nullptr);
  j["targets_meeting"] = r.targets_meeting();
  j["metrics_meeting"] = r.metrics_meeting();
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["notes"] = r.notes;
  auto& outs = j["outcomes"] = nlohmann::json::array();
  for (const auto& o : r.outcomes) {
    nlohmann::json v = nlohmann::json::array();
    for (auto x : o.verdicts) v.push_back(std::string(to_string(x)));
    outs.push_back({{"target", detail::vec_json(o.target)},
                    {"recipe", detail::vec_json(o.recipe)},
                    {"output", detail::vec_json(o.output)},
                    {"verdicts", v}});
  }
  auto& trace = j["trace"] = nlohmann::json::array();
  for (const auto& row : r.trace)
    trace.push_back({row.iteration, std::string(1, row.loop), row.loss, row.mean_sensitivity, row.rate,
                     row.updated, row.gradient_norm, row.cumulative_queries, row.targets_meeting,
                     row.out_of_box});
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "mfl-run-report" || j.at("version") != 1)
      throw FormatError("not a version-1 run report");
    RunReport r;
    r.label = j.at("label").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.scenario = j.at("scenario").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.spec = spec_from_json(j.at("spec"));
    r.config = j.at("config");
    r.final_loss = j.at("final_loss").get<double>();
    const auto& ev = j.at("emulator_validation_mse");
    r.emulator_validation_mse = ev.is_null() ? std::nan("") : ev.get<double>();
    const auto& q = j.at("queries");
    r.dataset_queries = q.at("dataset").get<std::size_t>();
    r.method_queries = q.at("method").get<std::size_t>();
    r.scoring_queries = q.at("scoring").get<std::size_t>();
    r.clipped_evaluations = q.at("clipped").get<std::size_t>();
    r.loop_b_updates = j.at("loop_b_updates").get<std::size_t>();
    if (!j.at("loop_b_iterations_to_meet").is_null())
      r.loop_b_iterations_to_meet = j.at("loop_b_iterations_to_meet").get<std::size_t>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& o : j.at("outcomes")) {
      TargetOutcome t{detail::vec_from_json(o.at("target")), detail::vec_from_json(o.at("recipe")),
                      detail::vec_from_json(o.at("output")), {}};
      for (const auto& v : o.at("verdicts")) t.verdicts.push_back(verdict_from_string(v.get<std::string>()));
      if (t.target.size() != r.spec.output_count() || t.output.size() != r.spec.output_count() ||
          t.recipe.size() != r.spec.input_count() || t.verdicts.size() != r.spec.outputs.size())
        throw FormatError("outcome dimensions do not match the spec");
      r.outcomes.push_back(std::move(t));
    }
    for (const auto& row : j.at("trace")) {
      IterationRow it;
      it.iteration = row.at(0).get<std::size_t>();
      it.loop = row.at(1).get<std::string>().at(0);
      it.loss = row.at(2).get<double>();
      it.mean_sensitivity = row.at(3).get<double>();
      it.rate = row.at(4).get<double>();
      it.updated = row.at(5).get<bool>();
      it.gradient_norm = row.at(6).get<double>();
      it.cumulative_queries = row.at(7).get<std::size_t>();
      it.targets_meeting = row.at(8).get<std::size_t>();
      it.out_of_box = row.at(9).get<std::size_t>();
      r.trace.push_back(it);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run report: ") + e.what());
  }
}

inline RunReport load_report_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- multi-report tables ----

// Per metric, the first target's output from each report with an [ok] /
// [MISS] mark against the meets range; closing rows count satisfied cells.
inline void write_comparison_csv(const std::vector<RunReport>& reports, const std::filesystem::path& path) {
  if (reports.empty()) throw ConfigError("no reports to compare");
  const auto& spec = reports.front().spec;
  for (const auto& r : reports)
    if (!(r.spec == spec)) throw ConfigError("cannot compare reports from different process specs");
  CsvWriter csv(path);
  std::vector<std::string> header{"metric", "unit", "target"};
  for (const auto& r : reports) header.push_back(r.label);
  csv.row(header);
  for (std::size_t k = 0; k < spec.outputs.size(); ++k) {
    std::vector<std::string> row{spec.outputs[k].name, spec.outputs[k].unit, rule_text(spec.outputs[k].rule)};
    for (const auto& r : reports) {
      const auto& o = r.outcomes.front();
      row.push_back(format_double(o.output[static_cast<Eigen::Index>(k)]) +
                    (o.verdicts[k] == Verdict::meets ? " [ok]" : " [MISS]"));
    }
    csv.row(row);
  }
  auto summary_row = [&](const std::string& name, auto value) {
    std::vector<std::string> row{name, "", ""};
    for (const auto& r : reports) row.push_back(value(r));
    csv.row(row);
  };
  summary_row("metrics meeting (all targets)", [](const RunReport& r) {
    return std::to_string(r.metrics_meeting()) + "/" +
           std::to_string(r.outcomes.size() * r.spec.outputs.size());
  });
  summary_row("targets meeting all metrics", [](const RunReport& r) {
    return std::to_string(r.targets_meeting()) + "/" + std::to_string(r.outcomes.size());
  });
  summary_row("output error", [](const RunReport& r) { return format_double(r.output_error()); });
  summary_row("machine queries", [](const RunReport& r) { return std::to_string(r.method_queries); });
}

inline std::string report_text(const std::vector<RunReport>& reports) {
  std::string s = "# MFL run report\n";
  s += "# " + std::string(kOutputErrorDefinition) + "\n";
  s += "# attack-noise magnitudes and target shifts are in the same normalized output units\n\n";
  for (const auto& r : reports) {
    s += r.label + ": method=" + r.method + " scenario=" + r.scenario + " seed=" + std::to_string(r.seed) +
         "\n  output_error=" + format_double(r.output_error()) + " targets_meeting=" +
         std::to_string(r.targets_meeting()) + "/" + std::to_string(r.outcomes.size()) +
         " method_queries=" + std::to_string(r.method_queries) +
         " loop_b_updates=" + std::to_string(r.loop_b_updates) + " loop_b_iterations_to_meet=" +
         (r.loop_b_iterations_to_meet ? std::to_string(*r.loop_b_iterations_to_meet) : "none") + "\n";
    for (const auto& n : r.notes) s += "  note: " + n + "\n";
  }
  return s;
}

// Writes <dir>/<label>/{trace,summary,recipe,outcomes}.csv + summary.json
// for every report, then <dir>/comparison.csv and <dir>/report.txt.
// Returns the label directories in order.
inline std::vector<std::filesystem::path> emit_report(const std::vector<RunReport>& reports,
                                                      const std::filesystem::path& dir) {
  if (reports.empty()) throw ConfigError("emit_report: empty report list");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw FormatError("cannot create output directory " + dir.string());
  std::set<std::string> seen;
  std::vector<std::filesystem::path> written;
  for (const auto& r : reports) {
    if (!seen.insert(r.label).second) throw ConfigError("duplicate report label '" + r.label + "'");
    const auto sub = dir / r.label;
    std::filesystem::create_directories(sub, ec);
    if (ec) throw FormatError("cannot create " + sub.string());
    write_trace_csv(r, sub / "trace.csv");
    write_summary_csv(r, sub / "summary.csv");
    write_recipe_csv(r, sub / "recipe.csv");
    write_outcomes_csv(r, sub / "outcomes.csv");
    std::ofstream js(sub / "summary.json", std::ios::trunc);
    if (!js) throw FormatError("cannot write " + (sub / "summary.json").string());
    js << report_to_json(r).dump(2) << '\n';
    written.push_back(sub);
  }
  // Reports over different specs cannot share one comparison table.
  bool same_spec = std::all_of(reports.begin(), reports.end(),
                               [&](const RunReport& r) { return r.spec == reports.front().spec; });
  if (same_spec) write_comparison_csv(reports, dir / "comparison.csv");
  std::ofstream txt(dir / "report.txt", std::ios::binary | std::ios::trunc);
  if (!txt) throw FormatError("cannot write " + (dir / "report.txt").string());
  txt << report_text(reports);
  return written;
}

}  // namespace mfl
