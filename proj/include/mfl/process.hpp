#pragma once

// Process metadata: named input boxes, output target rules, normalization,
// and the bundled etch / CVD / wire-bonding / toy-linear specs.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mfl/errors.hpp"

namespace mfl {

using Vector = Eigen::VectorXd;

enum class Verdict { meets = 0, close = 1, far = 2 };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::meets: return "Meets";
    case Verdict::close: return "Close";
    case Verdict::far: return "Far";
  }
  return "?";
}

// Closed interval; either end may be infinite.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v >= lower && v <= upper; }
  bool contains(const Interval& o) const { return o.lower >= lower && o.upper <= upper; }
  bool empty() const { return !(lower <= upper); }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct TargetRule {
  enum class Kind { interval, at_least };

  Kind kind = Kind::interval;
  Interval meets;               // at_least: upper is +inf
  std::optional<Interval> close;  // absent => {Meets, Far} only

  static TargetRule interval(double lo, double hi) {
    return {Kind::interval, {lo, hi}, std::nullopt};
  }
  static TargetRule interval(double lo, double hi, double close_lo, double close_hi) {
    return {Kind::interval, {lo, hi}, Interval{close_lo, close_hi}};
  }
  static TargetRule at_least(double lo) {
    return {Kind::at_least, {lo, std::numeric_limits<double>::infinity()}, std::nullopt};
  }
  static TargetRule at_least(double lo, double close_lo) {
    return {Kind::at_least,
            {lo, std::numeric_limits<double>::infinity()},
            Interval{close_lo, std::numeric_limits<double>::infinity()}};
  }

  // Boundaries go to the better category.
  Verdict classify(double v) const {
    if (meets.contains(v)) return Verdict::meets;
    if (close && close->contains(v)) return Verdict::close;
    return Verdict::far;
  }

  void validate(const std::string& where) const {
    if (meets.empty() || std::isnan(meets.lower) || std::isnan(meets.upper))
      throw ConfigError(where + ": empty meets range");
    if (kind == Kind::at_least && !(std::isinf(meets.upper) && meets.upper > 0))
      throw ConfigError(where + ": at-least rule must be unbounded above");
    if (kind == Kind::interval && (!std::isfinite(meets.lower) || !std::isfinite(meets.upper)))
      throw ConfigError(where + ": interval rule must be finite");
    if (close && (close->empty() || !close->contains(meets)))
      throw ConfigError(where + ": close range must contain the meets range");
  }

  friend bool operator==(const TargetRule&, const TargetRule&) = default;
};

struct InputDim {
  std::string name;
  std::string unit;
  double lower = 0.0;
  double upper = 1.0;
  // Narrower operating window some experiments search in (etch only).
  std::optional<Interval> recommended;
  std::string note;

  friend bool operator==(const InputDim&, const InputDim&) = default;
};

struct OutputDim {
  std::string name;
  std::string unit;
  TargetRule rule;
  // Range mapped to [-1, 1] by normalization. Equals the meets range for
  // interval rules; at-least rules need an explicit reference upper.
  Interval scale;

  friend bool operator==(const OutputDim&, const OutputDim&) = default;
};

struct ProcessSpec {
  std::string name;
  std::vector<InputDim> inputs;
  std::vector<OutputDim> outputs;
  // Outputs at the bounds midpoint for the bundled synthetic machine.
  std::vector<double> reference_point;

  Eigen::Index input_count() const { return static_cast<Eigen::Index>(inputs.size()); }
  Eigen::Index output_count() const { return static_cast<Eigen::Index>(outputs.size()); }

  Vector lower_bounds() const {
    Vector v(input_count());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = inputs[i].lower;
    return v;
  }
  Vector upper_bounds() const {
    Vector v(input_count());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = inputs[i].upper;
    return v;
  }
  Vector midpoint() const { return 0.5 * (lower_bounds() + upper_bounds()); }

  Vector reference() const {
    Vector v(static_cast<Eigen::Index>(reference_point.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = reference_point[i];
    return v;
  }

  void validate() const {
    if (name.empty()) throw ConfigError("process spec has no name");
    if (inputs.empty() || outputs.empty()) throw ConfigError(name + ": needs inputs and outputs");
    for (const auto& in : inputs) {
      if (!std::isfinite(in.lower) || !std::isfinite(in.upper) || !(in.lower < in.upper))
        throw ConfigError(name + "/" + in.name + ": degenerate input bounds");
      if (in.recommended && (in.recommended->empty() ||
                             !Interval{in.lower, in.upper}.contains(*in.recommended)))
        throw ConfigError(name + "/" + in.name + ": recommended range outside bounds");
    }
    for (const auto& out : outputs) {
      out.rule.validate(name + "/" + out.name);
      if (!std::isfinite(out.scale.lower) || !std::isfinite(out.scale.upper) ||
          !(out.scale.lower < out.scale.upper))
        throw ConfigError(name + "/" + out.name + ": degenerate output scale");
    }
    if (!reference_point.empty() && reference_point.size() != outputs.size())
      throw ConfigError(name + ": reference point has wrong length");
  }

  friend bool operator==(const ProcessSpec&, const ProcessSpec&) = default;
};

// ---- normalization: per-dimension affine map of [lo, hi] onto [-1, 1] ----

namespace detail {
inline Vector to_unit(const Vector& v, const Vector& lo, const Vector& hi) {
  if (v.size() != lo.size()) throw DimensionError("normalize: dimension mismatch");
  return (2.0 * (v - lo).array() / (hi - lo).array() - 1.0).matrix();
}
inline Vector from_unit(const Vector& u, const Vector& lo, const Vector& hi) {
  if (u.size() != lo.size()) throw DimensionError("denormalize: dimension mismatch");
  return (lo.array() + (u.array() + 1.0) * 0.5 * (hi - lo).array()).matrix();
}
inline void check_degenerate(const Vector& lo, const Vector& hi) {
  if (!lo.allFinite() || !hi.allFinite() || !(lo.array() < hi.array()).all())
    throw ConfigError("degenerate normalization bounds");
}
}  // namespace detail

inline Vector output_scale_lower(const ProcessSpec& s) {
  Vector v(s.output_count());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = s.outputs[i].scale.lower;
  return v;
}
inline Vector output_scale_upper(const ProcessSpec& s) {
  Vector v(s.output_count());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = s.outputs[i].scale.upper;
  return v;
}

inline Vector normalize_input(const Vector& x, const ProcessSpec& s) {
  const Vector lo = s.lower_bounds(), hi = s.upper_bounds();
  detail::check_degenerate(lo, hi);
  return detail::to_unit(x, lo, hi);
}
inline Vector denormalize_input(const Vector& u, const ProcessSpec& s) {
  const Vector lo = s.lower_bounds(), hi = s.upper_bounds();
  detail::check_degenerate(lo, hi);
  return detail::from_unit(u, lo, hi);
}
inline Vector normalize_output(const Vector& z, const ProcessSpec& s) {
  const Vector lo = output_scale_lower(s), hi = output_scale_upper(s);
  detail::check_degenerate(lo, hi);
  return detail::to_unit(z, lo, hi);
}
inline Vector denormalize_output(const Vector& u, const ProcessSpec& s) {
  const Vector lo = output_scale_lower(s), hi = output_scale_upper(s);
  detail::check_degenerate(lo, hi);
  return detail::from_unit(u, lo, hi);
}

// Half-width of each output scale, the physical size of one normalized unit.
inline Vector output_half_range(const ProcessSpec& s) {
  return 0.5 * (output_scale_upper(s) - output_scale_lower(s));
}

inline std::vector<Verdict> classify_output(const Vector& z, const ProcessSpec& s) {
  if (z.size() != s.output_count()) throw DimensionError("classify_output: dimension mismatch");
  std::vector<Verdict> out;
  out.reserve(s.outputs.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(s.outputs[i].rule.classify(z[i]));
  return out;
}

inline bool all_meet(const std::vector<Verdict>& v) {
  for (auto x : v)
    if (x != Verdict::meets) return false;
  return true;
}

inline bool meets_all(const Vector& z, const ProcessSpec& s) {
  return all_meet(classify_output(z, s));
}

inline bool within_bounds(const Vector& x, const ProcessSpec& s) {
  if (x.size() != s.input_count()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!(x[i] >= s.inputs[i].lower && x[i] <= s.inputs[i].upper)) return false;
  return true;
}

// ---- bundled specs ----

// Plasma etch: unconstrained input windows and the
// Meets / Close / Far output categories. `recommended` is the hull of the
// engineers' search windows.
inline ProcessSpec etch_spec() {
  ProcessSpec s;
  s.name = "etch";
  auto in = [&](std::string n, std::string u, double lo, double hi, double rlo, double rhi) {
    s.inputs.push_back({std::move(n), std::move(u), lo, hi, Interval{rlo, rhi}, {}});
  };
  in("Pressure", "mT", 5, 120, 5, 38);
  in("Power 1", "W", 0, 29000, 4000, 25000);
  in("Power 2", "W", 0, 10000, 0, 8000);
  in("Ar Flow", "sccm", 0, 1000, 0, 600);
  in("C4F8 Flow", "sccm", 0, 100, 0, 80);
  in("C4F6 Flow", "sccm", 0, 100, 0, 96);
  in("CH4 Flow", "sccm", 0, 20, 0, 20);
  in("O2 Flow", "sccm", 0, 50, 10, 50);
  in("Pulse Duty Cycle", "%", 10, 100, 10, 70);
  in("Pulse Frequency", "Hz", 500, 2000, 1000, 1000);
  in("Temperature", "C", -15, 80, 10, 55);

  s.outputs = {
      {"Etch depth", "nm", TargetRule::interval(2250, 2750, 2000, 3000), {2250, 2750}},
      {"Etch rate", "nm/min", TargetRule::at_least(100, 70), {100, 150}},
      {"Mask remaining", "nm", TargetRule::at_least(350, 300), {350, 450}},
      {"Top CD", "nm", TargetRule::interval(190, 210, 160, 240), {190, 210}},
      {"Delta CD", "nm", TargetRule::interval(-15, 15, -60, 60), {-15, 15}},
      {"Bow CD", "nm", TargetRule::interval(190, 210, 160, 240), {190, 210}},
  };
  s.reference_point = {2500, 125, 400, 200, 0, 200};
  return s;
}

// Chemical vapor deposition; {Meets, Far} only.
inline ProcessSpec cvd_spec() {
  ProcessSpec s;
  s.name = "cvd";
  auto in = [&](std::string n, std::string u, double lo, double hi, std::string note = {}) {
    s.inputs.push_back({std::move(n), std::move(u), lo, hi, std::nullopt, std::move(note)});
  };
  in("SiH4 flow rate", "sccm", 50, 500);
  in("NH3 flow rate", "sccm", 100, 1000);
  in("N2 flow rate", "sccm", 200, 2000);
  in("Chamber temperature", "C", 300, 750);
  in("Chamber pressure", "Torr", 1, 10);
  in("Chamber humidity", "%RH", 5, 40);
  in("Electrode distance", "mm", 10, 30);
  in("Pre-clean plasma power", "W", 0, 300);
  in("Pre-clean duration", "s", 0, 60);
  in("Wafer rotation speed", "rpm", 0, 3000);
  in("Process time", "s", 5.05, 300,
     "source row lists '5.05 | 144.5516' with columns apparently swapped; bounds "
     "reconstructed as (5.05, 300)");
  auto out = [&](std::string n, std::string u, double lo, double hi) {
    s.outputs.push_back({std::move(n), std::move(u), TargetRule::interval(lo, hi), {lo, hi}});
  };
  out("Film thickness (center)", "nm", 100, 2000);
  out("Film thickness (edge)", "nm", 100, 2200);
  out("Internal stress", "MPa", -500, 500);
  out("Surface roughness (Ra)", "nm", 0.1, 10);
  s.reference_point = {1050, 1150, 0, 5.05};
  return s;
}

// Wire bonding; {Meets, Far} only.
inline ProcessSpec bonding_spec() {
  ProcessSpec s;
  s.name = "bonding";
  auto in = [&](std::string n, std::string u, double lo, double hi) {
    s.inputs.push_back({std::move(n), std::move(u), lo, hi, std::nullopt, {}});
  };
  in("Bonding pressure", "gf", 20, 120);
  in("Bonding time", "ms", 1, 30);
  in("Temperature", "C", 100, 300);
  in("Wire diameter", "um", 15, 33);
  in("Wire length", "mm", 0.5, 5.0);
  in("Pad diameter", "um", 50, 150);
  auto out = [&](std::string n, std::string u, double lo, double hi) {
    s.outputs.push_back({std::move(n), std::move(u), TargetRule::interval(lo, hi), {lo, hi}});
  };
  out("Pull strength", "gf", 5, 25);
  out("Bonding x-offset", "um", -20, 20);
  out("Bonding y-offset", "um", -20, 20);
  s.reference_point = {15, 0, 0};
  return s;
}

// Small linear scenario used for descent-property runs.
inline ProcessSpec toy_linear_spec() {
  ProcessSpec s;
  s.name = "toy-linear";
  for (int i = 0; i < 3; ++i)
    s.inputs.push_back({"u" + std::to_string(i + 1), "-", -1, 1, std::nullopt, {}});
  for (int i = 0; i < 2; ++i)
    s.outputs.push_back({"v" + std::to_string(i + 1), "-", TargetRule::interval(-1, 1), {-1, 1}});
  s.reference_point = {0, 0};
  return s;
}

inline const std::vector<std::string>& builtin_scenarios() {
  static const std::vector<std::string> names{"etch", "cvd", "bonding", "toy-linear"};
  return names;
}

inline ProcessSpec builtin_spec(std::string_view name) {
  if (name == "etch") return etch_spec();
  if (name == "cvd") return cvd_spec();
  if (name == "bonding") return bonding_spec();
  if (name == "toy-linear") return toy_linear_spec();
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

}  // namespace mfl
