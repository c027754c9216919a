#pragma once

// ProcessSpec <-> JSON documents (one file per process).

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mfl/errors.hpp"
#include "mfl/process.hpp"

namespace mfl {

inline constexpr const char* kSpecFormat = "mfl-process-spec";
inline constexpr int kSpecFormatVersion = 1;

namespace detail {

inline nlohmann::json interval_to_json(const Interval& i) { return nlohmann::json::array({i.lower, i.upper}); }

inline Interval interval_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw FormatError(where + ": expected [lower, upper]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(where + ": missing '" + key + "'");
  return j.at(key);
}

}  // namespace detail

inline nlohmann::json spec_to_json(const ProcessSpec& s) {
  nlohmann::json j;
  j["format"] = kSpecFormat;
  j["version"] = kSpecFormatVersion;
  j["name"] = s.name;
  auto& inputs = j["inputs"] = nlohmann::json::array();
  for (const auto& in : s.inputs) {
    nlohmann::json e{{"name", in.name}, {"unit", in.unit}, {"lower", in.lower}, {"upper", in.upper}};
    if (in.recommended) e["recommended"] = detail::interval_to_json(*in.recommended);
    if (!in.note.empty()) e["note"] = in.note;
    inputs.push_back(std::move(e));
  }
  auto& outputs = j["outputs"] = nlohmann::json::array();
  for (const auto& out : s.outputs) {
    nlohmann::json rule;
    if (out.rule.kind == TargetRule::Kind::interval) {
      rule["kind"] = "interval";
      rule["meets"] = detail::interval_to_json(out.rule.meets);
      if (out.rule.close) rule["close"] = detail::interval_to_json(*out.rule.close);
    } else {
      rule["kind"] = "at-least";
      rule["meets_lower"] = out.rule.meets.lower;
      if (out.rule.close) rule["close_lower"] = out.rule.close->lower;
    }
    outputs.push_back({{"name", out.name},
                       {"unit", out.unit},
                       {"rule", std::move(rule)},
                       {"scale", detail::interval_to_json(out.scale)}});
  }
  j["reference_point"] = s.reference_point;
  return j;
}

inline ProcessSpec spec_from_json(const nlohmann::json& j) {
  const std::string where = "process spec";
  if (detail::require(j, "format", where) != kSpecFormat)
    throw FormatError(where + ": unexpected format tag");
  if (detail::require(j, "version", where) != kSpecFormatVersion)
    throw FormatError(where + ": unsupported version");
  ProcessSpec s;
  try {
    s.name = detail::require(j, "name", where).get<std::string>();
    for (const auto& e : detail::require(j, "inputs", where)) {
      InputDim in;
      in.name = detail::require(e, "name", where).get<std::string>();
      const std::string w = where + "/" + in.name;
      in.unit = detail::require(e, "unit", w).get<std::string>();
      in.lower = detail::require(e, "lower", w).get<double>();
      in.upper = detail::require(e, "upper", w).get<double>();
      if (e.contains("recommended")) in.recommended = detail::interval_from_json(e["recommended"], w);
      if (e.contains("note")) in.note = e["note"].get<std::string>();
      s.inputs.push_back(std::move(in));
    }
    for (const auto& e : detail::require(j, "outputs", where)) {
      OutputDim out;
      out.name = detail::require(e, "name", where).get<std::string>();
      const std::string w = where + "/" + out.name;
      out.unit = detail::require(e, "unit", w).get<std::string>();
      const auto& rule = detail::require(e, "rule", w);
      const auto kind = detail::require(rule, "kind", w).get<std::string>();
      if (kind == "interval") {
        const auto m = detail::interval_from_json(detail::require(rule, "meets", w), w);
        out.rule = TargetRule::interval(m.lower, m.upper);
        if (rule.contains("close")) out.rule.close = detail::interval_from_json(rule["close"], w);
      } else if (kind == "at-least") {
        const double lo = detail::require(rule, "meets_lower", w).get<double>();
        out.rule = rule.contains("close_lower")
                       ? TargetRule::at_least(lo, rule["close_lower"].get<double>())
                       : TargetRule::at_least(lo);
      } else {
        throw FormatError(w + ": unknown rule kind '" + kind + "'");
      }
      out.scale = detail::interval_from_json(detail::require(e, "scale", w), w);
      s.outputs.push_back(std::move(out));
    }
    if (j.contains("reference_point"))
      s.reference_point = j["reference_point"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  s.validate();
  return s;
}

inline ProcessSpec load_spec_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open spec file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return spec_from_json(j);
}

inline void save_spec_file(const ProcessSpec& s, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << spec_to_json(s).dump(2) << '\n';
}

}  // namespace mfl
