#pragma once

// Deterministic synthetic stand-in for the forming simulation: a blank SDF
// maps to a thinning field built from Gaussian sites whose amplitudes depend
// on the blank shape through SDF probes.

#include <vector>

#include "blankopt/config.hpp"
#include "blankopt/field_grid.hpp"

namespace blankopt {

inline constexpr double kThinningLimit = 0.15;
inline constexpr double kThickeningLimit = 0.10;

struct OracleSite {
  Vec2 centre;       // mm
  double sigma = 30.0;
  int sign = 1;      // +1 thinning, -1 thickening
  Vec2 probe;        // mm
  double alpha = 0.0;
  double beta = 0.0;
};

struct OracleConfig {
  std::vector<OracleSite> sites;
  double clamp_lo = 0.0;
  double clamp_hi = 0.5;

  void validate() const;
  // Reads keys "site_1", "site_2", ... of the [oracle] section, each
  // "x y sigma sign probe_x probe_y alpha beta".
  static OracleConfig from_config(const Config& config);
  static OracleConfig defaults();
};

struct Maxima {
  double thinning = 0.0;
  double thickening = 0.0;
};

struct ThinningResult {
  ScalarGrid field;
  Maxima maxima;
};

ThinningResult simulate(const ScalarGrid& sdf, const OracleConfig& cfg);
Maxima maxima(const ScalarGrid& field);
inline bool meets_criteria(const Maxima& m) {
  return m.thinning <= kThinningLimit && m.thickening <= kThickeningLimit;
}

}  // namespace blankopt
