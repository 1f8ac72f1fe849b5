#pragma once

// Reference blank outline and the sixteen parameterisations of its five
// modifiable regions (parameters P0..P32).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blankopt/config.hpp"
#include "blankopt/vec2.hpp"

namespace blankopt {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Box {
  Vec2 min;
  Vec2 max;
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
};

// Closed (or, from iso-extraction, possibly open) polyline in mm. For closed
// contours the first point is not repeated at the end.
struct Contour {
  std::vector<Vec2> points;
  std::vector<std::uint8_t> region;  // per point: 0 fixed outline, 1..5 region
  bool closed = true;

  std::size_t size() const { return points.size(); }
  double signed_area() const;
  double perimeter() const;
  Box bounds() const;
};

// Index pair of the first two crossing segments, if any. Segment i joins
// point i and point i+1 (wrapping for closed contours).
std::optional<std::pair<std::size_t, std::size_t>> find_self_intersection(const Contour& c);
bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

enum class Shape : std::uint8_t { Arc = 0, Spline = 1 };

// Arc/spline choice for regions 2..5. Region 1 has a single parameterisation.
struct RegionChoices {
  std::array<Shape, 4> shape{Shape::Arc, Shape::Arc, Shape::Arc, Shape::Arc};

  Shape region(int k) const { return shape.at(static_cast<std::size_t>(k - 2)); }
  // Bit (k-2) set means region k is a spline.
  unsigned bits() const;
  static RegionChoices from_bits(unsigned bits);
  std::string label() const;  // e.g. "ASAA"
  bool operator==(const RegionChoices&) const = default;
};

inline constexpr int kParamCount = 33;
inline constexpr int kParameterisations = 16;
std::string param_name(int id);  // "P7"

struct BlankDesign {
  RegionChoices choices;
  std::map<int, double> params;

  double at(int id) const;
  bool has(int id) const { return params.count(id) != 0; }
};

// Parameter ids active under the given choices, ascending.
std::vector<int> active_parameters(const RegionChoices& choices);

// P0 and the eight small-arc angles.
bool is_range_independent(int id);
std::vector<int> range_independent_parameters(const RegionChoices& choices);
// Range-dependent ids in evaluation order: each id's range depends only on
// range-independent ids and ids earlier in this list.
std::vector<int> range_dependent_order(const RegionChoices& choices);

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
  bool empty() const { return !(lo <= hi); }
};

// Static ranges of the range-independent parameters (mm or deg).
ParamRange static_range(int id);

// Region 1: straight upper edge at distance P0 from a fixed dashed subline,
// clipped by two fixed side lines.
struct TabAnchor {
  Vec2 dashed_point;
  Vec2 normal;  // unit, pointing out of the blank
  Vec2 right_foot;
  Vec2 right_dir;  // unit, from the foot towards the edge
  Vec2 left_foot;
  Vec2 left_dir;
};

// Regions 2..5 in a canonical frame: the outline runs along the small-arc
// line towards the transition, turns through the small arc, and leaves along
// the main line. `reversed` means the blank outline traverses it backwards.
struct TransitionAnchor {
  Vec2 small_point;
  Vec2 small_dir;  // unit travel direction towards the transition
  double arc_offset = 0.0;
  double small_radius = 20.0;
  Vec2 main_point;
  Vec2 main_dir;  // unit travel direction leaving the transition
  bool reversed = false;

  Vec2 arc_start() const { return small_point + small_dir * arc_offset; }
};

struct ReferenceGeometry {
  Box bbox;
  Vec2 bottom_left, bottom_right, top_right, top_left;
  TabAnchor region1;
  std::array<TransitionAnchor, 4> transitions;  // regions 2..5
  BlankDesign reference_design;
  double chord_tolerance = 0.5;

  const TransitionAnchor& transition(int k) const { return transitions.at(static_cast<std::size_t>(k - 2)); }
};

// Shipped default geometry config text.
const std::string& default_geometry_config();

ReferenceGeometry build_reference(const Config& config);
inline ReferenceGeometry build_reference() { return build_reference(Config::from_string(default_geometry_config())); }

// Range of a range-dependent parameter given the values of everything it
// depends on (read from `partial`).
ParamRange dependent_range(int id, const BlankDesign& partial, const ReferenceGeometry& ref);

struct Violation {
  int param = -1;  // -1 when not tied to one parameter
  std::string message;
};

std::vector<Violation> validate_design(const BlankDesign& design, const ReferenceGeometry& ref);

// One analytic piece of the outline, already discretised.
struct CurvePiece {
  enum class Kind : std::uint8_t { Line, Arc, Bezier };
  Kind kind = Kind::Line;
  int region = 0;
  std::vector<Vec2> points;  // includes both end points
  Vec2 start_tangent;
  Vec2 end_tangent;
};

// Outline pieces in counter-clockwise order. Throws GeometryError on a
// missing parameter or an infeasible construction.
std::vector<CurvePiece> build_pieces(const BlankDesign& design, const ReferenceGeometry& ref);

// Throws GeometryError naming the region when the outline self-intersects,
// and the parameter when one is missing.
Contour build_contour(const BlankDesign& design, const ReferenceGeometry& ref);

// Straight upper edge of region 1 for a given P0: (right end, left end).
std::pair<Vec2, Vec2> region1_edge(const ReferenceGeometry& ref, double p0);

}  // namespace blankopt
