#include "blankopt/forming_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "default_configs.hpp"

namespace blankopt {

void OracleConfig::validate() const {
  if (sites.size() < 4) throw ConfigError("oracle needs at least 4 sites");
  bool thin = false, thick = false;
  for (const auto& s : sites) {
    if (!(s.sigma > 0.0)) throw ConfigError("oracle site width must be positive");
    if (s.sign != 1 && s.sign != -1) throw ConfigError("oracle site sign must be +1 or -1");
    thin |= s.sign > 0;
    thick |= s.sign < 0;
  }
  if (!thin || !thick) throw ConfigError("oracle needs thinning and thickening sites");
  if (!(clamp_lo <= clamp_hi)) throw ConfigError("oracle clamp range is empty");
}

OracleConfig OracleConfig::from_config(const Config& config) {
  OracleConfig cfg;
  for (int k = 1; config.has("oracle.site_" + std::to_string(k)); ++k) {
    const std::string key = "oracle.site_" + std::to_string(k);
    const auto v = config.get_doubles(key);
    if (v.size() != 8) throw ConfigError("config key '" + key + "' needs 8 numbers");
    OracleSite s;
    s.centre = {v[0], v[1]};
    s.sigma = v[2];
    s.sign = static_cast<int>(v[3]);
    s.probe = {v[4], v[5]};
    s.alpha = v[6];
    s.beta = v[7];
    cfg.sites.push_back(s);
  }
  cfg.clamp_lo = config.get_double("oracle.clamp_lo", 0.0);
  cfg.clamp_hi = config.get_double("oracle.clamp_hi", 0.5);
  cfg.validate();
  return cfg;
}

OracleConfig OracleConfig::defaults() { return from_config(Config::from_string(detail::kPipelineConfig)); }

ThinningResult simulate(const ScalarGrid& sdf, const OracleConfig& cfg) {
  if (sdf.kind != GridKind::Sdf) throw GridError("simulate expects an SDF grid");
  const GridSpec& spec = sdf.spec;
  std::vector<double> amp(cfg.sites.size());
  for (std::size_t k = 0; k < cfg.sites.size(); ++k) {
    const OracleSite& s = cfg.sites[k];
    double probe;
    try {
      probe = sdf.sample(s.probe);
    } catch (const GridError&) {
      throw GridError("oracle probe " + std::to_string(k + 1) + " lies outside the grid");
    }
    amp[k] = s.sign * std::clamp(s.alpha + s.beta * probe, cfg.clamp_lo, cfg.clamp_hi);
  }
  ThinningResult out{ScalarGrid(spec, GridKind::ThinningField), {}};
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c) {
      if (!(sdf.at(r, c) < 0.0f)) continue;
      const Vec2 p = spec.centre(r, c);
      double t = 0.0;
      for (std::size_t k = 0; k < cfg.sites.size(); ++k) {
        const Vec2 d = p - cfg.sites[k].centre;
        t += amp[k] * std::exp(-dot(d, d) / (2.0 * cfg.sites[k].sigma * cfg.sites[k].sigma));
      }
      out.field.at(r, c) = static_cast<float>(t);
    }
  out.maxima = maxima(out.field);
  return out;
}

Maxima maxima(const ScalarGrid& field) {
  if (field.kind != GridKind::ThinningField) throw GridError("maxima expects a thinning field");
  Maxima m;
  for (float v : field.values) {
    m.thinning = std::max(m.thinning, static_cast<double>(v));
    m.thickening = std::max(m.thickening, -static_cast<double>(v));
  }
  return m;
}

}  // namespace blankopt
