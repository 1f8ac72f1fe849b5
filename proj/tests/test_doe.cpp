#include <doctest.h>

#include <cmath>
#include <set>

#include "blankopt/doe_sampler.hpp"
#include "test_support.hpp"

using namespace blankopt;

namespace {

bool one_per_bin(const std::vector<std::vector<double>>& pts) {
  const std::size_t n = pts.size();
  for (std::size_t j = 0; j < pts[0].size(); ++j) {
    std::vector<int> count(n, 0);
    for (const auto& p : pts) {
      if (!(p[j] >= 0.0 && p[j] < 1.0)) return false;
      ++count[static_cast<std::size_t>(std::floor(p[j] * static_cast<double>(n)))];
    }
    for (int c : count)
      if (c != 1) return false;
  }
  return true;
}

// Independent closed-form bounds for the arc and straight-line parameters:
// the end of the small arc, the corner of the two extended lines, and the
// tangent length of a fillet of radius R at that corner.
struct TrigOracle {
  double lambda;     // distance from the small-arc end to the corner
  double half_turn;  // half of the main-arc turning angle
};

TrigOracle trig_oracle(const TransitionAnchor& t, double angle_deg) {
  const Vec2 a = t.small_point + t.small_dir * t.arc_offset;
  const Vec2 n0{-t.small_dir.y, t.small_dir.x};
  const double side = (t.main_point.x - a.x) * n0.x + (t.main_point.y - a.y) * n0.y >= 0 ? 1.0 : -1.0;
  const double th = angle_deg * kPi / 180.0;
  const Vec2 b = a + t.small_dir * (t.small_radius * std::sin(th)) + n0 * (side * t.small_radius * (1 - std::cos(th)));
  const Vec2 t1 = t.small_dir * std::cos(th) + n0 * (side * std::sin(th));
  // b + l t1 = m + s d  (Cramer's rule)
  const Vec2 rhs = t.main_point - b;
  const double det = -t1.x * t.main_dir.y + t1.y * t.main_dir.x;
  const double l = (-rhs.x * t.main_dir.y + rhs.y * t.main_dir.x) / det;
  const double turn = std::acos(std::clamp(t1.x * t.main_dir.x + t1.y * t.main_dir.y, -1.0, 1.0));
  return {l, 0.5 * turn};
}

void check_bounds_independently(const BlankDesign& d, const ReferenceGeometry& ref) {
  struct Ids { int angle, radius, line, sub_a; };
  const Ids arc[] = {{1, 2, -1, -1}, {8, 9, -1, -1}, {15, 16, -1, -1}, {24, 25, -1, -1}};
  const Ids spl[] = {{3, -1, 4, 5}, {10, -1, 11, 12}, {17, -1, 18, 19}, {26, -1, 27, 28}};
  CHECK(d.at(0) >= 10.0);
  CHECK(d.at(0) <= 70.0);
  for (int k = 2; k <= 5; ++k) {
    const Ids ids = d.choices.region(k) == Shape::Arc ? arc[k - 2] : spl[k - 2];
    const double angle = d.at(ids.angle);
    CHECK(angle >= (k <= 3 ? 50.0 : 60.0));
    CHECK(angle <= (k <= 3 ? 90.0 : 100.0));
    const TrigOracle o = trig_oracle(ref.transition(k), angle);
    if (ids.radius >= 0) {
      const double r = d.at(ids.radius);
      CHECK(r >= 15.0);
      CHECK(r <= 200.0 + 1e-9);
      CHECK(o.lambda - r * std::tan(o.half_turn) >= 15.0 - 1e-6);
    } else {
      const double line = d.at(ids.line);
      CHECK(line >= 15.0);
      CHECK(line <= o.lambda - 15.0 + 1e-6);
      CHECK(d.at(ids.sub_a) >= 5.0);
      CHECK(line + d.at(ids.sub_a) <= o.lambda - 2.0 + 1e-6);
    }
  }
}

}  // namespace

TEST_CASE("lhs stratification") {
  for (std::size_t n : {1u, 4u, 16u, 64u}) {
    const auto pts = lhs(n, 5, 99);
    CHECK(pts.size() == n);
    CHECK(one_per_bin(pts));
    CHECK(lhs(n, 5, 99) == pts);
  }
  CHECK(lhs(4, 3, 1) != lhs(4, 3, 2));
  CHECK_THROWS(lhs(0, 2, 1));
}

TEST_CASE("trig oracle agrees with the radius upper bound") {
  const auto ref = build_reference();
  for (int k = 2; k <= 5; ++k)
    for (double angle : {50.0, 70.0, 90.0}) {
      const int a = k == 2 ? 1 : k == 3 ? 8 : k == 4 ? 15 : 24;
      const double ang = k >= 4 ? angle + 10.0 : angle;
      BlankDesign d;
      d.params[a] = ang;
      const ParamRange r = dependent_range(a + 1, d, ref);
      const TrigOracle o = trig_oracle(ref.transition(k), ang);
      const double expect = std::min(200.0, (o.lambda - 15.0) / std::tan(o.half_turn));
      CHECK(r.hi == doctest::Approx(expect).epsilon(1e-9));
      CHECK(r.lo == 15.0);
    }
}

TEST_CASE("sampled designs are valid and stratified") {
  const auto ref = build_reference();
  const auto designs = sample_designs(64, 7, ref);
  REQUIRE(designs.size() == 64);
  std::vector<int> per(16, 0);
  std::vector<std::vector<double>> ri;
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const auto& d = designs[i];
    CHECK(d.choices.bits() == i % 16);
    ++per[d.choices.bits()];
    CHECK(validate_design(d, ref).empty());
    check_bounds_independently(d, ref);
    const Contour c = build_contour(d, ref);
    CHECK_FALSE(testing::brute_force_self_intersects(c.points));
    // RI block in unit coordinates.
    const auto ids = range_independent_parameters(d.choices);
    std::vector<double> u;
    for (int id : ids) {
      const ParamRange r = static_range(id);
      u.push_back((d.at(id) - r.lo) / (r.hi - r.lo));
    }
    ri.push_back(u);
  }
  for (int c : per) CHECK(c == 4);
  CHECK(one_per_bin(ri));

  const auto again = sample_designs(64, 7, ref);
  for (std::size_t i = 0; i < designs.size(); ++i) CHECK(again[i].params == designs[i].params);

  const auto sixteen = sample_designs(16, 3, ref);
  std::set<unsigned> bits;
  for (const auto& d : sixteen) bits.insert(d.choices.bits());
  CHECK(bits.size() == 16);
}

TEST_CASE("splits") {
  const auto ref = build_reference();
  SamplingPlan plan;
  plan.n_train = 32;
  plan.n_test = 16;
  const auto [train, test] = generate_splits(plan, ref);
  CHECK(train.size() == 32);
  CHECK(test.size() == 16);
  CHECK(train[0].params != test[0].params);
  plan.seed_test = plan.seed_train;
  CHECK_THROWS_AS(generate_splits(plan, ref), SamplingError);
}
