#include <doctest.h>

#include <cmath>

#include "blankopt/geometry.hpp"
#include "test_support.hpp"

using namespace blankopt;

namespace {

// Every parameter at the midpoint of its (sequentially evaluated) range.
BlankDesign midrange_design(unsigned bits, const ReferenceGeometry& ref) {
  BlankDesign d;
  d.choices = RegionChoices::from_bits(bits);
  for (int id : range_independent_parameters(d.choices)) {
    const ParamRange r = static_range(id);
    d.params[id] = 0.5 * (r.lo + r.hi);
  }
  for (int id : range_dependent_order(d.choices)) {
    const ParamRange r = dependent_range(id, d, ref);
    d.params[id] = 0.5 * (r.lo + r.hi);
  }
  return d;
}

const CurvePiece* find_piece(const std::vector<CurvePiece>& pieces, int region, CurvePiece::Kind kind, int nth = 0) {
  for (const auto& p : pieces)
    if (p.region == region && p.kind == kind && nth-- == 0) return &p;
  return nullptr;
}

}  // namespace

TEST_CASE("active parameter counts") {
  CHECK(active_parameters(RegionChoices::from_bits(0)) == std::vector<int>{0, 1, 2, 8, 9, 15, 16, 24, 25});
  CHECK(active_parameters(RegionChoices::from_bits(15)).size() == 25);
  const auto r2 = active_parameters(RegionChoices::from_bits(1));
  for (int id = 3; id <= 7; ++id) CHECK(std::count(r2.begin(), r2.end(), id) == 1);
  CHECK(std::count(r2.begin(), r2.end(), 1) == 0);
  CHECK(std::count(r2.begin(), r2.end(), 2) == 0);
  for (unsigned b = 0; b < 16; ++b) {
    const auto c = RegionChoices::from_bits(b);
    CHECK(c.bits() == b);
    std::vector<int> all = range_independent_parameters(c);
    for (int id : range_dependent_order(c)) all.push_back(id);
    std::sort(all.begin(), all.end());
    CHECK(all == active_parameters(c));
  }
}

TEST_CASE("reference outline is a valid simple polygon") {
  const auto ref = build_reference();
  const Contour c = build_contour(ref.reference_design, ref);
  CHECK(c.signed_area() > 0.0);
  CHECK_FALSE(testing::brute_force_self_intersects(c.points));
  const Box b = c.bounds();
  CHECK(b.width() > 900.0);
  CHECK(b.height() > 450.0);
  // Aspect ratio of the domain box matches the desk grid within 1%.
  CHECK(std::abs(ref.bbox.width() / ref.bbox.height() - 280.0 / 152.0) / (280.0 / 152.0) < 0.01);
  for (int k = 0; k <= 5; ++k) CHECK(std::count(c.region.begin(), c.region.end(), k) > 0);
  const Contour again = build_contour(ref.reference_design, ref);
  CHECK(again.points == c.points);
}

TEST_CASE("parallel anchors are rejected") {
  Config cfg = Config::from_string(default_geometry_config());
  cfg.set("region_3.main_dir", "-1 0");
  CHECK_THROWS_WITH(build_reference(cfg), "parallel anchors, region 3");
}

TEST_CASE("midrange designs are valid for all parameterisations") {
  const auto ref = build_reference();
  for (unsigned b = 0; b < 16; ++b) {
    CAPTURE(b);
    const BlankDesign d = midrange_design(b, ref);
    CHECK(validate_design(d, ref).empty());
    const Contour c = build_contour(d, ref);
    CHECK_FALSE(testing::brute_force_self_intersects(c.points));
    CHECK(c.signed_area() > 0.0);
  }
}

TEST_CASE("P0 moves only the region 1 edge") {
  const auto ref = build_reference();
  BlankDesign a = midrange_design(0, ref), b = a;
  a.params[0] = 10.0;
  b.params[0] = 70.0;
  const Contour ca = build_contour(a, ref), cb = build_contour(b, ref);
  REQUIRE(ca.size() == cb.size());
  const Vec2 n = ref.region1.normal;
  int moved = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (ca.points[i] == cb.points[i]) continue;
    ++moved;
    CHECK(ca.region[i] == 1);
    // The edge end points slide along the side lines; their offset along
    // the edge normal is exactly the P0 difference.
    CHECK(dot(cb.points[i] - ca.points[i], n) == doctest::Approx(60.0).epsilon(1e-12));
  }
  CHECK(moved == 2);
}

TEST_CASE("validation messages and bounds") {
  const auto ref = build_reference();
  BlankDesign d = midrange_design(0, ref);
  d.params[0] = 5.0;
  const auto v = validate_design(d, ref);
  REQUIRE(v.size() == 1);
  CHECK(v[0].message == "P0 below 10 mm");

  BlankDesign s = midrange_design(1, ref);
  s.params[4] = 0.0;
  const auto vs = validate_design(s, ref);
  REQUIRE_FALSE(vs.empty());
  CHECK(vs[0].param == 4);

  BlankDesign m = midrange_design(0, ref);
  m.params.erase(9);
  CHECK_THROWS_WITH(build_contour(m, ref), "missing parameter P9");
}

TEST_CASE("radius at its upper bound leaves a 15 mm in-between line") {
  const auto ref = build_reference();
  for (int k = 2; k <= 5; ++k) {
    CAPTURE(k);
    BlankDesign d = midrange_design(0, ref);
    const int radius_id = k == 2 ? 2 : k == 3 ? 9 : k == 4 ? 16 : 25;
    const ParamRange r = dependent_range(radius_id, d, ref);
    if (r.hi >= 200.0) continue;  // capped, not line-limited
    d.params[radius_id] = r.hi;
    const auto pieces = build_pieces(d, ref);
    const CurvePiece* line = find_piece(pieces, k, CurvePiece::Kind::Line);
    REQUIRE(line != nullptr);
    CHECK(norm(line->points.back() - line->points.front()) == doctest::Approx(15.0).epsilon(1e-9));
  }
}

TEST_CASE("arc regions are G1 continuous") {
  const auto ref = build_reference();
  const auto pieces = build_pieces(midrange_design(0, ref), ref);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& a = pieces[i];
    const auto& b = pieces[(i + 1) % pieces.size()];
    if (a.region < 2 && b.region < 2) continue;
    const double dev = std::abs(rad2deg(angle_between(a.end_tangent, b.start_tangent)));
    CHECK(dev <= 0.5);
    CHECK(norm(a.points.back() - b.points.front()) < 1e-9);
  }
}

TEST_CASE("area is continuous in each parameter") {
  const auto ref = build_reference();
  for (unsigned bits : {0u, 15u}) {
    const BlankDesign d = midrange_design(bits, ref);
    const double area = build_contour(d, ref).signed_area();
    for (int id : active_parameters(d.choices)) {
      CAPTURE(id);
      const ParamRange r = is_range_independent(id) ? static_range(id) : dependent_range(id, d, ref);
      BlankDesign p = d;
      p.params[id] += 1e-3 * (r.hi - r.lo);
      const double pa = build_contour(p, ref).signed_area();
      CHECK(std::abs(pa - area) < 0.01 * area);
    }
  }
}
