#include <doctest.h>

#include <cmath>

#include "blankopt/doe_sampler.hpp"
#include "blankopt/forming_oracle.hpp"
#include "fixtures.hpp"

using namespace blankopt;

namespace {

// Straight pixel scan of the oracle formula in double precision.
Maxima scan_maxima(const ScalarGrid& sdf, const OracleConfig& cfg) {
  const GridSpec& s = sdf.spec;
  auto bilinear = [&](Vec2 p) {
    const double x = (p.x - s.origin.x) / s.spacing, y = (p.y - s.origin.y) / s.spacing;
    const int c = static_cast<int>(std::floor(x)), r = static_cast<int>(std::floor(y));
    const double u = x - c, v = y - r;
    return (1 - u) * (1 - v) * sdf.at(r, c) + u * (1 - v) * sdf.at(r, c + 1) + (1 - u) * v * sdf.at(r + 1, c) +
           u * v * sdf.at(r + 1, c + 1);
  };
  Maxima m;
  for (int r = 0; r < s.height; ++r)
    for (int c = 0; c < s.width; ++c) {
      if (sdf.at(r, c) >= 0) continue;
      const Vec2 p = s.centre(r, c);
      double t = 0;
      for (const auto& site : cfg.sites) {
        const double a = std::fmin(0.5, std::fmax(0.0, site.alpha + site.beta * bilinear(site.probe)));
        t += site.sign * a *
             std::exp(-((p.x - site.centre.x) * (p.x - site.centre.x) + (p.y - site.centre.y) * (p.y - site.centre.y)) /
                      (2 * site.sigma * site.sigma));
      }
      m.thinning = std::fmax(m.thinning, t);
      m.thickening = std::fmax(m.thickening, -t);
    }
  return m;
}

OracleConfig single_site(double alpha, double beta) {
  OracleConfig cfg;
  cfg.sites.push_back({{100.0, 100.0}, 50.0, 1, {100.0, 100.0}, alpha, beta});
  return cfg;
}

}  // namespace

TEST_CASE("maxima of a field") {
  ScalarGrid f(GridSpec{8, 8, {0, 0}, 1.0}, GridKind::ThinningField);
  f.values[3] = 0.12f;
  f.values[10] = -0.08f;
  const Maxima m = maxima(f);
  CHECK(m.thinning == doctest::Approx(0.12));
  CHECK(m.thickening == doctest::Approx(0.08));
  CHECK(meets_criteria(m));
  CHECK(meets_criteria({0.15, 0.10}));
  CHECK_FALSE(meets_criteria({0.1501, 0.0}));
  const Maxima z = maxima(ScalarGrid(GridSpec{8, 8, {0, 0}, 1.0}, GridKind::ThinningField));
  CHECK(z.thinning == 0.0);
  CHECK(z.thickening == 0.0);
}

TEST_CASE("single gaussian site") {
  const GridSpec spec{64, 64, {0.0, 0.0}, 4.0};  // pixel (25, 25) sits on the site
  ScalarGrid sdf(spec, GridKind::Sdf, -10.0f);
  OracleConfig cfg = single_site(0.2, 0.0);
  // validate() insists on four sites with both signs; simulate itself does not.
  const auto r = simulate(sdf, cfg);
  CHECK(r.field.at(25, 25) == doctest::Approx(0.2));
  CHECK(r.maxima.thinning == doctest::Approx(0.2));
  CHECK(r.maxima.thickening == 0.0);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero beta decouples amplitude from shape") {
  const auto ref = build_reference();
  const GridSpec spec = GridSpec::desk();
  OracleConfig cfg = OracleConfig::defaults();
  for (auto& s : cfg.sites) s.beta = 0.0;
  const auto a = rasterize_sdf(build_contour(ref.reference_design, ref), spec);
  const auto b = rasterize_sdf(build_contour(fixtures::feasible_design(), ref), spec);
  const auto fa = simulate(a, cfg).field, fb = simulate(b, cfg).field;
  int both_inside = 0;
  for (std::size_t i = 0; i < fa.values.size(); ++i) {
    if (a.values[i] < 0 && b.values[i] < 0) {
      CHECK(fa.values[i] == fb.values[i]);
      ++both_inside;
    }
  }
  CHECK(both_inside > 1000);
  CHECK(fa.values != fb.values);  // masks differ
}

TEST_CASE("default oracle on the reference and the feasible fixture") {
  const auto ref = build_reference();
  const GridSpec spec = GridSpec::desk();
  const OracleConfig cfg = OracleConfig::defaults();
  CHECK(cfg.sites.size() == 8);
  const auto sdf = rasterize_sdf(build_contour(ref.reference_design, ref), spec);
  const auto r = simulate(sdf, cfg);
  const Maxima scan = scan_maxima(sdf, cfg);
  CHECK(r.maxima.thinning == doctest::Approx(scan.thinning).epsilon(1e-6));
  CHECK(r.maxima.thickening == doctest::Approx(scan.thickening).epsilon(1e-6));
  CHECK(r.maxima.thinning == doctest::Approx(fixtures::kReferenceThinning).epsilon(1e-6));
  CHECK(r.maxima.thickening == doctest::Approx(fixtures::kReferenceThickening).epsilon(1e-6));
  CHECK(r.maxima.thinning > kThinningLimit);
  CHECK(r.maxima.thickening > kThickeningLimit);
  for (std::size_t i = 0; i < sdf.values.size(); ++i)
    if (sdf.values[i] >= 0) CHECK(r.field.values[i] == 0.0f);

  const auto fsdf = rasterize_sdf(build_contour(fixtures::feasible_design(), ref), spec);
  CHECK(meets_criteria(simulate(fsdf, cfg).maxima));
}

TEST_CASE("oracle maxima are Lipschitz in the design parameters") {
  const auto ref = build_reference();
  const GridSpec spec = GridSpec::desk();
  const OracleConfig cfg = OracleConfig::defaults();
  const BlankDesign d = sample_designs(16, 21, ref)[15];
  const Maxima base = simulate(rasterize_sdf(build_contour(d, ref), spec), cfg).maxima;
  for (int id : active_parameters(d.choices)) {
    CAPTURE(id);
    const ParamRange r = is_range_independent(id) ? static_range(id) : dependent_range(id, d, ref);
    BlankDesign p = d;
    p.params[id] += 1e-3 * (r.hi - r.lo);
    const Maxima m = simulate(rasterize_sdf(build_contour(p, ref), spec), cfg).maxima;
    CHECK(std::abs(m.thinning - base.thinning) < 0.01);
    CHECK(std::abs(m.thickening - base.thickening) < 0.01);
  }
}

TEST_CASE("probe outside the grid") {
  OracleConfig cfg = OracleConfig::defaults();
  cfg.sites[0].probe = {-50.0, 0.0};
  ScalarGrid sdf(GridSpec::desk(), GridKind::Sdf, -1.0f);
  CHECK_THROWS_AS(simulate(sdf, cfg), GridError);
}
