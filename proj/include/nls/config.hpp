#pragma once

// Model configuration files.
//
//   # comment
//   [bundle]
//   base_dim = 1
//   fibre_dim = 1
//   [splitting]
//   h1 = "x1*v1"
//   [simulation]
//   ic = [0, 0, 0.2]
//
// Values are numbers, double-quoted expressions, or bracketed
// comma-separated lists of either. Keys and sections are checked against
// a fixed schema; unknown keys, duplicates and malformed lines raise
// ParseError with the line number.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nls/lagrangian.hpp"
#include "nls/nonholonomic.hpp"
#include "nls/reduction.hpp"
#include "nls/splitting.hpp"

namespace nls {

struct ConfigValue {
  enum class Kind { Number, Text, List };
  Kind kind = Kind::Number;
  double number = 0.0;
  std::string text;
  std::vector<ConfigValue> items;
  std::size_t line = 0;
};

struct RawSection {
  std::size_t line = 0;
  std::map<std::string, ConfigValue> entries;
};

/// Syntax-level parse; section and key names are checked later.
std::map<std::string, RawSection> parse_config_text(const std::string& text);

struct SimulationConfig {
  double t0 = 0.0;
  double t1 = 1.0;
  double dt = 1e-3;
  std::optional<Vec> ic;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  double box_lo = -1.0, box_hi = 1.0;
  std::optional<std::pair<double, double>> box_y;  // overrides the y coordinates
  std::optional<std::pair<double, double>> box_v;  // overrides the v coordinates
  std::vector<std::string> curve;                  // base curve x(t), one expression per base coordinate
  std::optional<Vec> y0;
  std::vector<Vec> eval_points;                    // flat (x, y, v) points for reports
};

struct ModelConfig {
  BundleChart chart;
  std::optional<SplittingSpec> splitting;
  std::vector<std::string> splitting_text;
  std::optional<LagrangianSpec> lagrangian;
  std::string lagrangian_text;
  std::optional<ActionSpec> action;
  std::optional<AffineConstraintSpec> constraints;
  std::optional<MagneticModel> magnetic;
  std::optional<SodeSpec> base_sode;  // [sode] f = [...] in x1..xn, v1..vn
  SimulationConfig simulation;
  std::string text;
  std::uint64_t hash = 0;  // FNV-1a of the file bytes

  /// Sample box for points of dimension `dim` laid out as (x, y, v[, w]).
  SampleBox sample_box(std::size_t dim) const;
  /// The base curve (requires [simulation] curve).
  BaseCurve base_curve() const;
};

ModelConfig load_config_text(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace nls
