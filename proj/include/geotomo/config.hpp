#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "geotomo/geometry.hpp"

namespace geotomo {

// Desk-scale experiment description: the metric expressions plus the grid
// and solver knobs shared by the command-line pipelines.
struct ExperimentConfig {
  // [metric]: exactly one of the conformal exponent or the three components
  std::string lambda;
  std::string g11, g12, g22;

  // [grid]
  int ns = 64;   // boundary arclength nodes
  int nphi = 32; // inward fiber nodes
  int nb = 64;   // interior fiber nodes, power of two
  int nr = 32;   // interior radial cells
  int nth = 64;  // interior angular nodes

  // [solver]
  double step = 1e-3;   // geodesic integrator step
  double dt = 0.05;     // flow-derivative increment
  double cutoff = 1e-3; // relative singular-value truncation
  double delta = 0.3;   // disk enlargement for the transport solve
  double cg_tol = 1e-6;
  int cg_max = 500;

  // [run]
  std::uint64_t seed = 1;
};

// Sectioned key = value text; values are bare tokens or double-quoted
// strings, comments start with '#' or ';'.  Unknown sections or keys,
// duplicate keys, and malformed numbers raise ConfigError with the line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Enforces the schema invariants: exactly one metric form, every grid size
// at least 8, nb a power of two, delta in (0, 1/2], positive tolerances.
void validate_config(const ExperimentConfig& c);

// Builds the metric from the expression strings; malformed expressions
// propagate ParseError with the character offset.
MetricField make_metric(const ExperimentConfig& c);

// Canonical one-line-per-key serializations; expressions are normalized
// through the parser so spacing differences hash alike.
std::string canonical_metric(const ExperimentConfig& c);
std::string canonical_config(const ExperimentConfig& c);

std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::string_view s); // 16 hex digits of fnv1a64

std::string config_hash(const ExperimentConfig& c);
std::string metric_hash(const ExperimentConfig& c);

} // namespace geotomo
