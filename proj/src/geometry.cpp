#include "blankopt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "default_configs.hpp"

namespace blankopt {

namespace {

constexpr double kMinInBetween = 15.0;    // in-between straight lines, radii
constexpr double kLineAllowance = 15.0;   // straight line vs. extended edge
constexpr double kMinSubline = 5.0;       // spline sublines
constexpr double kCrossAllowance = 2.0;   // control points vs. intersection
constexpr double kAuxMin = 15.0;          // auxiliary subline offset window
constexpr double kAuxMax = 100.0;
constexpr double kMaxRadius = 200.0;
constexpr double kFixedClearance = 5.0;   // region end vs. next fixed vertex

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Parameter ids of one transition region.
struct RegionIds {
  int angle = -1;
  int radius = -1;
  int line = -1;
  int sub_a = -1;  // control point on the extension of the straight line
  int aux = -1;    // auxiliary subline offset
  int sub_b = -1;  // control point on the extension of the main line
  int mid_x = -1;
  int mid_y = -1;
  bool aux_from_centre = false;
};

RegionIds region_ids(int k, Shape s) {
  RegionIds r;
  const bool arc = s == Shape::Arc;
  switch (k) {
    case 2:
      if (arc) { r.angle = 1; r.radius = 2; }
      else { r.angle = 3; r.line = 4; r.sub_a = 5; r.aux = 6; r.sub_b = 7; }
      break;
    case 3:
      if (arc) { r.angle = 8; r.radius = 9; }
      else { r.angle = 10; r.line = 11; r.sub_a = 12; r.aux = 13; r.sub_b = 14; }
      break;
    case 4:
      if (arc) { r.angle = 15; r.radius = 16; }
      else {
        r.angle = 17; r.line = 18; r.sub_a = 19; r.sub_b = 20; r.aux = 21; r.mid_x = 22; r.mid_y = 23;
        r.aux_from_centre = true;
      }
      break;
    case 5:
      if (arc) { r.angle = 24; r.radius = 25; }
      else {
        r.angle = 26; r.line = 27; r.sub_a = 28; r.aux = 29; r.sub_b = 30; r.mid_x = 31; r.mid_y = 32;
        r.aux_from_centre = true;
      }
      break;
    default:
      throw GeometryError("no transition region " + std::to_string(k));
  }
  return r;
}

std::vector<int> dependent_ids(const RegionIds& r) {
  std::vector<int> out;
  for (int id : {r.radius, r.line, r.sub_a, r.aux, r.sub_b, r.mid_x, r.mid_y})
    if (id >= 0) out.push_back(id);
  return out;
}

int region_of(int id) {
  if (id == 0) return 1;
  if (id <= 7) return 2;
  if (id <= 14) return 3;
  if (id <= 23) return 4;
  return 5;
}

// ---------------------------------------------------------------------------
// Canonical transition construction.

struct Frame {
  Vec2 a;       // small-arc start
  Vec2 t0;      // travel direction along the small-arc line
  double tau;   // +1 small arc turns left, -1 right (towards the main line)
  double rs;
  Vec2 m0, dm, nm;
};

Frame frame_of(const TransitionAnchor& t) {
  Frame f;
  f.a = t.arc_start();
  f.t0 = t.small_dir;
  f.rs = t.small_radius;
  f.m0 = t.main_point;
  f.dm = t.main_dir;
  f.nm = perp(t.main_dir);
  f.tau = dot(f.m0 - f.a, perp(f.t0)) >= 0.0 ? 1.0 : -1.0;
  return f;
}

struct SmallArc {
  Vec2 centre, b, t1;
  double sweep;
};

SmallArc small_arc(const Frame& f, double angle_deg) {
  SmallArc s;
  s.sweep = deg2rad(angle_deg);
  s.centre = f.a + perp(f.t0) * (f.tau * f.rs);
  s.t1 = rotated(f.t0, f.tau * s.sweep);
  s.b = s.centre - perp(s.t1) * (f.tau * f.rs);
  return s;
}

double along_main(const Frame& f, Vec2 p) { return dot(p - f.m0, f.dm); }

// Distance along t1 from b to the (extended) main line; NaN if it never hits.
double hit_distance(const Frame& f, const SmallArc& s) {
  const double den = dot(s.t1, f.nm);
  if (std::abs(den) < 1e-9) return std::numeric_limits<double>::quiet_NaN();
  const double lambda = -dot(s.b - f.m0, f.nm) / den;
  return lambda > 0.0 ? lambda : std::numeric_limits<double>::quiet_NaN();
}

struct MainArc {
  double in_between;  // straight length between the arcs
  double sigma;       // main arc turn sign
  double sweep;
  Vec2 d, centre, e;
};

MainArc main_arc(const Frame& f, const SmallArc& s, double radius) {
  MainArc m;
  const double psi = angle_between(s.t1, f.dm);
  m.sigma = psi >= 0.0 ? 1.0 : -1.0;
  m.sweep = std::abs(psi);
  const Vec2 n1 = perp(s.t1);
  m.in_between = (-dot(s.b - f.m0, f.nm) - m.sigma * radius * (dot(n1, f.nm) - 1.0)) / dot(s.t1, f.nm);
  m.d = s.b + s.t1 * m.in_between;
  m.centre = m.d + n1 * (m.sigma * radius);
  m.e = m.centre - f.nm * (m.sigma * radius);
  return m;
}

ParamRange radius_range(const Frame& f, const SmallArc& s) {
  const double den = dot(s.t1, f.nm);
  if (std::abs(den) < 1e-9) return {1.0, 0.0};
  const double psi = angle_between(s.t1, f.dm);
  const double sigma = psi >= 0.0 ? 1.0 : -1.0;
  const double l0 = -dot(s.b - f.m0, f.nm) / den;
  const double k = -sigma * (dot(perp(s.t1), f.nm) - 1.0) / den;
  double hi = kMaxRadius;
  if (k < 0.0) hi = std::min(hi, (kMinInBetween - l0) / k);
  else if (l0 + k * kMinInBetween < kMinInBetween) return {1.0, 0.0};
  return {kMinInBetween, hi};
}

// Half-disc over the chord c1-c3 on the side away from `corner`, shrunk by
// the crossing allowance.
struct HalfDisc {
  Vec2 mid, u, n_in;
  double rho;
};

HalfDisc half_disc(Vec2 c1, Vec2 c3, Vec2 corner) {
  HalfDisc h;
  h.mid = (c1 + c3) * 0.5;
  h.u = normalized(c3 - c1);
  h.n_in = perp(h.u);
  if (dot(corner - h.mid, h.n_in) > 0.0) h.n_in = -h.n_in;
  h.rho = std::max(0.0, 0.5 * norm(c3 - c1) - kCrossAllowance);
  return h;
}

double support(const HalfDisc& h, Vec2 e) {
  return dot(e, h.n_in) >= 0.0 ? h.rho : h.rho * std::abs(dot(e, h.u));
}

ParamRange half_disc_x(const HalfDisc& h) {
  return {h.mid.x - support(h, {-1.0, 0.0}), h.mid.x + support(h, {1.0, 0.0})};
}

ParamRange half_disc_y(const HalfDisc& h, double x) {
  const double dx = x - h.mid.x;
  const double w2 = h.rho * h.rho - dx * dx;
  if (w2 < 0.0) return {1.0, 0.0};
  const double w = std::sqrt(w2);
  ParamRange r{h.mid.y - w, h.mid.y + w};
  // (x - mid.x) n.x + (y - mid.y) n.y >= 0
  if (std::abs(h.n_in.y) > 1e-12) {
    const double bound = h.mid.y - dx * h.n_in.x / h.n_in.y;
    if (h.n_in.y > 0.0) r.lo = std::max(r.lo, bound);
    else r.hi = std::min(r.hi, bound);
  } else if (dx * h.n_in.x < 0.0) {
    return {1.0, 0.0};
  }
  return r;
}

// All construction points of a spline transition that are defined by the
// parameters present in `d`. Values are read lazily so that ranges can be
// evaluated on partial designs.
struct SplineState {
  Frame f;
  SmallArc s;
  double lambda_i = 0.0;
  Vec2 corner;
  double s_corner = 0.0;
  Vec2 e1, c1, c2, c3, e2;
  double s_ref = 0.0;
  double s_aux = 0.0;
};

double require(const BlankDesign& d, int id) {
  auto it = d.params.find(id);
  if (it == d.params.end()) throw GeometryError("missing parameter " + param_name(id));
  return it->second;
}

ParamRange spline_range(int id, const RegionIds& ids, const BlankDesign& d, const TransitionAnchor& t) {
  SplineState st;
  st.f = frame_of(t);
  st.s = small_arc(st.f, require(d, ids.angle));
  st.lambda_i = hit_distance(st.f, st.s);
  if (!std::isfinite(st.lambda_i)) return {1.0, 0.0};
  st.corner = st.s.b + st.s.t1 * st.lambda_i;
  st.s_corner = along_main(st.f, st.corner);
  if (id == ids.line) return {kMinInBetween, st.lambda_i - kLineAllowance};
  const double line = require(d, ids.line);
  st.e1 = st.s.b + st.s.t1 * line;
  if (id == ids.sub_a) return {kMinSubline, st.lambda_i - kCrossAllowance - line};
  st.s_ref = ids.aux_from_centre ? along_main(st.f, st.s.centre) : along_main(st.f, st.e1);
  if (id == ids.aux) return {st.s_corner + kAuxMin - st.s_ref, st.s_corner + kAuxMax - st.s_ref};
  st.s_aux = st.s_ref + require(d, ids.aux);
  if (id == ids.sub_b) return {kMinSubline, st.s_aux - st.s_corner - kCrossAllowance};
  st.c1 = st.e1 + st.s.t1 * require(d, ids.sub_a);
  st.e2 = st.f.m0 + st.f.dm * st.s_aux;
  st.c3 = st.e2 - st.f.dm * require(d, ids.sub_b);
  const HalfDisc h = half_disc(st.c1, st.c3, st.corner);
  if (id == ids.mid_x) {
    const ParamRange r = half_disc_x(h);
    return {r.lo - st.s.centre.x, r.hi - st.s.centre.x};
  }
  if (id == ids.mid_y) {
    const ParamRange r = half_disc_y(h, st.s.centre.x + require(d, ids.mid_x));
    return {r.lo - st.s.centre.y, r.hi - st.s.centre.y};
  }
  throw GeometryError("parameter " + param_name(id) + " does not belong to this region");
}

// ---------------------------------------------------------------------------
// Discretisation.

std::vector<Vec2> arc_points(Vec2 centre, Vec2 t_start, double turn, double sweep, double radius, double tol) {
  const double max_step = 2.0 * std::acos(std::max(-1.0, 1.0 - tol / radius));
  const int n = std::max(1, static_cast<int>(std::ceil(sweep / max_step)));
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double phi = sweep * i / n;
    const Vec2 t = rotated(t_start, turn * phi);
    pts.push_back(centre - perp(t) * (turn * radius));
  }
  return pts;
}

void bezier_flatten(const std::vector<Vec2>& ctrl, double tol, int depth, std::vector<Vec2>& out) {
  const Vec2 a = ctrl.front(), b = ctrl.back();
  const Vec2 ab = b - a;
  const double len = norm(ab);
  double dev = 0.0;
  for (std::size_t i = 1; i + 1 < ctrl.size(); ++i) {
    const Vec2 ap = ctrl[i] - a;
    dev = std::max(dev, len > 1e-12 ? std::abs(cross(ab, ap)) / len : norm(ap));
  }
  if (dev <= tol || depth >= 20) {
    out.push_back(b);
    return;
  }
  // de Casteljau split at t = 0.5
  std::vector<Vec2> left, right(ctrl.size()), work = ctrl;
  left.reserve(ctrl.size());
  for (std::size_t level = 0; level < ctrl.size(); ++level) {
    left.push_back(work.front());
    right[ctrl.size() - 1 - level] = work.back();
    for (std::size_t i = 0; i + 1 < work.size(); ++i) work[i] = (work[i] + work[i + 1]) * 0.5;
    work.pop_back();
  }
  bezier_flatten(left, tol, depth + 1, out);
  bezier_flatten(right, tol, depth + 1, out);
}

CurvePiece line_piece(Vec2 a, Vec2 b, int region) {
  CurvePiece p;
  p.kind = CurvePiece::Kind::Line;
  p.region = region;
  p.points = {a, b};
  const double len = norm(b - a);
  p.start_tangent = p.end_tangent = len > 0.0 ? (b - a) / len : Vec2{};
  return p;
}

CurvePiece bezier_piece(const std::vector<Vec2>& ctrl, int region, double tol) {
  CurvePiece p;
  p.kind = CurvePiece::Kind::Bezier;
  p.region = region;
  p.points.push_back(ctrl.front());
  bezier_flatten(ctrl, tol, 0, p.points);
  p.start_tangent = normalized(ctrl[1] - ctrl[0]);
  p.end_tangent = normalized(ctrl.back() - ctrl[ctrl.size() - 2]);
  return p;
}

void reverse_piece(CurvePiece& p) {
  std::reverse(p.points.begin(), p.points.end());
  const Vec2 s = p.start_tangent;
  p.start_tangent = -p.end_tangent;
  p.end_tangent = -s;
}

// Canonical pieces of transition k, from the small-arc start to the point
// where the outline rejoins the main line.
std::vector<CurvePiece> transition_pieces(int k, const BlankDesign& d, const ReferenceGeometry& ref) {
  const TransitionAnchor& t = ref.transition(k);
  const Shape shape = d.choices.region(k);
  const RegionIds ids = region_ids(k, shape);
  const Frame f = frame_of(t);
  const double tol = ref.chord_tolerance;
  const SmallArc s = small_arc(f, require(d, ids.angle));

  std::vector<CurvePiece> out;
  CurvePiece arc;
  arc.kind = CurvePiece::Kind::Arc;
  arc.region = k;
  arc.points = arc_points(s.centre, f.t0, f.tau, s.sweep, f.rs, tol);
  arc.start_tangent = f.t0;
  arc.end_tangent = s.t1;
  out.push_back(std::move(arc));

  if (shape == Shape::Arc) {
    const double radius = require(d, ids.radius);
    const MainArc m = main_arc(f, s, radius);
    if (!(m.in_between > 0.0)) throw GeometryError("region " + std::to_string(k) + ": main arc does not fit");
    out.push_back(line_piece(s.b, m.d, k));
    CurvePiece main;
    main.kind = CurvePiece::Kind::Arc;
    main.region = k;
    main.points = arc_points(m.centre, s.t1, m.sigma, m.sweep, radius, tol);
    main.start_tangent = s.t1;
    main.end_tangent = f.dm;
    out.push_back(std::move(main));
    return out;
  }

  const double lambda = hit_distance(f, s);
  if (!std::isfinite(lambda)) throw GeometryError("region " + std::to_string(k) + ": straight line misses the edge");
  const Vec2 corner = s.b + s.t1 * lambda;
  const double line = require(d, ids.line);
  const Vec2 e1 = s.b + s.t1 * line;
  const Vec2 c1 = e1 + s.t1 * require(d, ids.sub_a);
  const double s_ref = ids.aux_from_centre ? along_main(f, s.centre) : along_main(f, e1);
  const double s_aux = s_ref + require(d, ids.aux);
  const Vec2 e2 = f.m0 + f.dm * s_aux;
  const Vec2 cb = e2 - f.dm * require(d, ids.sub_b);
  (void)corner;
  out.push_back(line_piece(s.b, e1, k));
  std::vector<Vec2> ctrl{e1, c1};
  if (ids.mid_x >= 0) ctrl.push_back(s.centre + Vec2{require(d, ids.mid_x), require(d, ids.mid_y)});
  ctrl.push_back(cb);
  ctrl.push_back(e2);
  out.push_back(bezier_piece(ctrl, k, tol));
  return out;
}

Vec2 transition_end(const std::vector<CurvePiece>& pieces) { return pieces.back().points.back(); }

Vec2 vec_from(const Config& c, const std::string& key) { return c.get_vec2(key); }

Vec2 unit_from(const Config& c, const std::string& key) {
  const Vec2 v = c.get_vec2(key);
  if (norm(v) < 1e-12) throw GeometryError("config key '" + key + "' is a zero direction");
  return normalized(v);
}

double polygon_signed_area(const std::vector<Vec2>& pts) {
  double a = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) a += cross(pts[i], pts[(i + 1) % pts.size()]);
  return 0.5 * a;
}

}  // namespace

// ---------------------------------------------------------------------------

double Contour::signed_area() const { return polygon_signed_area(points); }

double Contour::perimeter() const {
  double len = 0.0;
  const std::size_t n = points.size();
  const std::size_t segs = closed ? n : (n ? n - 1 : 0);
  for (std::size_t i = 0; i < segs; ++i) len += norm(points[(i + 1) % n] - points[i]);
  return len;
}

Box Contour::bounds() const {
  Box b{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
        {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  for (Vec2 p : points) {
    b.min.x = std::min(b.min.x, p.x);
    b.min.y = std::min(b.min.y, p.y);
    b.max.x = std::max(b.max.x, p.x);
    b.max.y = std::max(b.max.y, p.y);
  }
  return b;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = cross(q - p, r - p);
    return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
  };
  auto on_seg = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_seg(a, b, c)) return true;
  if (o2 == 0 && on_seg(a, b, d)) return true;
  if (o3 == 0 && on_seg(c, d, a)) return true;
  if (o4 == 0 && on_seg(c, d, b)) return true;
  return false;
}

std::optional<std::pair<std::size_t, std::size_t>> find_self_intersection(const Contour& c) {
  const std::size_t n = c.points.size();
  if (n < 3) return std::nullopt;
  const std::size_t segs = c.closed ? n : n - 1;
  // Bounding boxes first; the pair test is O(n^2) but cheap per pair.
  std::vector<Box> boxes(segs);
  for (std::size_t i = 0; i < segs; ++i) {
    const Vec2 a = c.points[i], b = c.points[(i + 1) % n];
    boxes[i] = {{std::min(a.x, b.x), std::min(a.y, b.y)}, {std::max(a.x, b.x), std::max(a.y, b.y)}};
  }
  for (std::size_t i = 0; i < segs; ++i) {
    for (std::size_t j = i + 1; j < segs; ++j) {
      const bool adjacent = j == i + 1 || (c.closed && i == 0 && j == segs - 1);
      if (adjacent) continue;
      const Box& bi = boxes[i];
      const Box& bj = boxes[j];
      if (bi.max.x < bj.min.x || bj.max.x < bi.min.x || bi.max.y < bj.min.y || bj.max.y < bi.min.y) continue;
      if (segments_intersect(c.points[i], c.points[(i + 1) % n], c.points[j], c.points[(j + 1) % n]))
        return std::make_pair(i, j);
    }
  }
  return std::nullopt;
}

unsigned RegionChoices::bits() const {
  unsigned b = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (shape[i] == Shape::Spline) b |= 1u << i;
  return b;
}

RegionChoices RegionChoices::from_bits(unsigned bits) {
  if (bits >= 16u) throw GeometryError("parameterisation bits out of range: " + std::to_string(bits));
  RegionChoices c;
  for (std::size_t i = 0; i < 4; ++i) c.shape[i] = (bits >> i) & 1u ? Shape::Spline : Shape::Arc;
  return c;
}

std::string RegionChoices::label() const {
  std::string s;
  for (Shape sh : shape) s += sh == Shape::Arc ? 'A' : 'S';
  return s;
}

std::string param_name(int id) { return "P" + std::to_string(id); }

double BlankDesign::at(int id) const { return require(*this, id); }

std::vector<int> active_parameters(const RegionChoices& choices) {
  std::vector<int> ids{0};
  for (int k = 2; k <= 5; ++k) {
    const RegionIds r = region_ids(k, choices.region(k));
    ids.push_back(r.angle);
    for (int id : dependent_ids(r)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool is_range_independent(int id) {
  switch (id) {
    case 0: case 1: case 3: case 8: case 10: case 15: case 17: case 24: case 26: return true;
    default: return false;
  }
}

std::vector<int> range_independent_parameters(const RegionChoices& choices) {
  std::vector<int> ids{0};
  for (int k = 2; k <= 5; ++k) ids.push_back(region_ids(k, choices.region(k)).angle);
  return ids;
}

std::vector<int> range_dependent_order(const RegionChoices& choices) {
  std::vector<int> ids;
  for (int k = 2; k <= 5; ++k)
    for (int id : dependent_ids(region_ids(k, choices.region(k)))) ids.push_back(id);
  return ids;
}

ParamRange static_range(int id) {
  switch (id) {
    case 0: return {10.0, 70.0};
    case 1: case 3: case 8: case 10: return {50.0, 90.0};
    case 15: case 17: case 24: case 26: return {60.0, 100.0};
    default: throw GeometryError(param_name(id) + " has no static range");
  }
}

ParamRange dependent_range(int id, const BlankDesign& partial, const ReferenceGeometry& ref) {
  const int k = region_of(id);
  if (k == 1) throw GeometryError("P0 has a static range");
  const RegionIds ids = region_ids(k, partial.choices.region(k));
  const TransitionAnchor& t = ref.transition(k);
  if (id == ids.radius) {
    const Frame f = frame_of(t);
    return radius_range(f, small_arc(f, require(partial, ids.angle)));
  }
  return spline_range(id, ids, partial, t);
}

std::vector<Violation> validate_design(const BlankDesign& design, const ReferenceGeometry& ref) {
  std::vector<Violation> out;
  const auto active = active_parameters(design.choices);
  for (const auto& [id, v] : design.params) {
    if (!std::binary_search(active.begin(), active.end(), id))
      out.push_back({id, param_name(id) + " is not active under parameterisation " + design.choices.label()});
    if (!std::isfinite(v)) out.push_back({id, param_name(id) + " is not finite"});
  }
  bool missing = false;
  for (int id : active) {
    if (!design.has(id)) {
      out.push_back({id, "missing parameter " + param_name(id)});
      missing = true;
    }
  }
  if (missing) return out;

  auto unit = [](int id) {
    return (id == 1 || id == 3 || id == 8 || id == 10 || id == 15 || id == 17 || id == 24 || id == 26) ? " deg"
                                                                                                      : " mm";
  };
  auto check = [&](int id, ParamRange r, const char* kind) {
    const double v = design.at(id);
    if (r.empty()) {
      out.push_back({id, param_name(id) + " has an empty range [" + fmt(r.lo) + ", " + fmt(r.hi) + "]"});
      return false;
    }
    // Ranges are recomputed from floating-point geometry; allow rounding.
    const double slack = 1e-9 * std::max(1.0, std::abs(v));
    if (v < r.lo - slack) {
      out.push_back({id, param_name(id) + " below " + kind + fmt(r.lo) + unit(id)});
      return false;
    }
    if (v > r.hi + slack) {
      out.push_back({id, param_name(id) + " above " + kind + fmt(r.hi) + unit(id)});
      return false;
    }
    return true;
  };

  for (int id : range_independent_parameters(design.choices)) check(id, static_range(id), "");
  if (!out.empty()) return out;
  for (int id : range_dependent_order(design.choices)) {
    ParamRange r;
    try {
      r = dependent_range(id, design, ref);
    } catch (const GeometryError& e) {
      out.push_back({id, e.what()});
      continue;
    }
    check(id, r, "bound ");
  }
  return out;
}

std::pair<Vec2, Vec2> region1_edge(const ReferenceGeometry& ref, double p0) {
  const TabAnchor& t = ref.region1;
  auto hit = [&](Vec2 foot, Vec2 dir) {
    const double den = dot(dir, t.normal);
    return foot + dir * ((p0 - dot(foot - t.dashed_point, t.normal)) / den);
  };
  return {hit(t.right_foot, t.right_dir), hit(t.left_foot, t.left_dir)};
}

std::vector<CurvePiece> build_pieces(const BlankDesign& design, const ReferenceGeometry& ref) {
  for (int id : active_parameters(design.choices)) require(design, id);

  std::array<std::vector<CurvePiece>, 4> tr;
  for (int k = 2; k <= 5; ++k) {
    auto pieces = transition_pieces(k, design, ref);
    if (ref.transition(k).reversed) {
      std::reverse(pieces.begin(), pieces.end());
      for (auto& p : pieces) reverse_piece(p);
    }
    tr[static_cast<std::size_t>(k - 2)] = std::move(pieces);
  }
  auto& r2 = tr[0];
  auto& r3 = tr[1];
  auto& r4 = tr[2];
  auto& r5 = tr[3];

  // A region must rejoin its main line before reaching the next fixed vertex.
  auto check_run = [&](int k, Vec2 from, Vec2 to, Vec2 dir) {
    if (dot(to - from, dir) < kFixedClearance)
      throw GeometryError("region " + std::to_string(k) + " runs past the fixed outline");
  };
  const auto [edge_r, edge_l] = region1_edge(ref, design.at(0));
  const TabAnchor& tab = ref.region1;

  std::vector<CurvePiece> out;
  auto push_line = [&](Vec2 a, Vec2 b, int region) {
    if (norm(b - a) > 1e-9) out.push_back(line_piece(a, b, region));
  };
  auto push_all = [&](std::vector<CurvePiece>& v) {
    for (auto& p : v) out.push_back(std::move(p));
  };

  const Vec2 e4 = r4.front().points.front();
  const Vec2 a4 = r4.back().points.back();
  const Vec2 e5 = r5.front().points.front();
  const Vec2 a5 = r5.back().points.back();
  const Vec2 a3 = r3.front().points.front();
  const Vec2 e3 = transition_end(r3);
  const Vec2 a2 = r2.front().points.front();
  const Vec2 e2 = transition_end(r2);

  check_run(4, ref.bottom_left, e4, -ref.transition(4).main_dir);
  check_run(5, a4, e5, -ref.transition(5).main_dir);
  check_run(3, tab.right_foot, e3, -ref.transition(3).main_dir);
  check_run(2, e2, ref.top_left, ref.transition(2).main_dir);

  push_line(ref.bottom_left, e4, 0);
  push_all(r4);
  push_line(a4, e5, 0);
  push_all(r5);
  push_line(a5, ref.bottom_right, 0);
  push_line(ref.bottom_right, ref.top_right, 0);
  push_line(ref.top_right, a3, 0);
  push_all(r3);
  push_line(e3, tab.right_foot, 0);
  push_line(tab.right_foot, edge_r, 1);
  push_line(edge_r, edge_l, 1);
  push_line(edge_l, tab.left_foot, 1);
  push_line(tab.left_foot, a2, 0);
  push_all(r2);
  push_line(e2, ref.top_left, 0);
  push_line(ref.top_left, ref.bottom_left, 0);
  return out;
}

Contour build_contour(const BlankDesign& design, const ReferenceGeometry& ref) {
  const auto pieces = build_pieces(design, ref);
  Contour c;
  for (const auto& p : pieces) {
    for (std::size_t i = 0; i < p.points.size(); ++i) {
      if (!c.points.empty() && norm(p.points[i] - c.points.back()) < 1e-9) continue;
      c.points.push_back(p.points[i]);
      c.region.push_back(static_cast<std::uint8_t>(p.region));
    }
  }
  if (c.points.size() > 1 && norm(c.points.front() - c.points.back()) < 1e-9) {
    c.points.pop_back();
    c.region.pop_back();
  }
  if (auto hit = find_self_intersection(c)) {
    const int ra = c.region[hit->first], rb = c.region[hit->second];
    const int named = ra != 0 ? ra : rb;
    throw GeometryError("outline self-intersects in region " + std::to_string(named) + " (segments " +
                        std::to_string(hit->first) + " and " + std::to_string(hit->second) + ")");
  }
  if (c.signed_area() <= 0.0) throw GeometryError("outline is not counter-clockwise");
  return c;
}

const std::string& default_geometry_config() {
  static const std::string text = detail::kGeometryConfig;
  return text;
}

ReferenceGeometry build_reference(const Config& config) {
  ReferenceGeometry ref;
  try {
    const Vec2 origin = vec_from(config, "domain.origin");
    const Vec2 size = vec_from(config, "domain.size");
    if (size.x <= 0.0 || size.y <= 0.0) throw GeometryError("domain size must be positive");
    ref.bbox = {origin, origin + size};
    ref.bottom_left = vec_from(config, "outline.bottom_left");
    ref.bottom_right = vec_from(config, "outline.bottom_right");
    ref.top_right = vec_from(config, "outline.top_right");
    ref.top_left = vec_from(config, "outline.top_left");
    ref.chord_tolerance = config.get_double("outline.chord_tolerance", 0.5);
    if (!(ref.chord_tolerance > 0.0)) throw GeometryError("chord tolerance must be positive");

    TabAnchor& tab = ref.region1;
    tab.dashed_point = vec_from(config, "region_1.dashed_point");
    tab.normal = unit_from(config, "region_1.normal");
    tab.right_foot = vec_from(config, "region_1.right_foot");
    tab.right_dir = unit_from(config, "region_1.right_dir");
    tab.left_foot = vec_from(config, "region_1.left_foot");
    tab.left_dir = unit_from(config, "region_1.left_dir");
    if (std::abs(dot(tab.right_dir, tab.normal)) < 1e-3 || std::abs(dot(tab.left_dir, tab.normal)) < 1e-3)
      throw GeometryError("parallel anchors, region 1");

    for (int k = 2; k <= 5; ++k) {
      const std::string sec = "region_" + std::to_string(k) + ".";
      TransitionAnchor& t = ref.transitions[static_cast<std::size_t>(k - 2)];
      t.small_point = vec_from(config, sec + "small_point");
      t.small_dir = unit_from(config, sec + "small_dir");
      t.arc_offset = config.get_double(sec + "arc_offset");
      t.small_radius = config.get_double(sec + "small_radius");
      t.main_point = vec_from(config, sec + "main_point");
      t.main_dir = unit_from(config, sec + "main_dir");
      t.reversed = config.get_bool(sec + "reversed");
      if (!(t.small_radius > 0.0)) throw GeometryError("region " + std::to_string(k) + ": small radius must be positive");
      if (std::abs(cross(t.small_dir, t.main_dir)) < 1e-6)
        throw GeometryError("parallel anchors, region " + std::to_string(k));
      if (std::abs(dot(t.arc_start() - t.main_point, perp(t.main_dir))) < 1e-6)
        throw GeometryError("region " + std::to_string(k) + ": small arc starts on the main line");
    }

    BlankDesign& rd = ref.reference_design;
    rd.choices = RegionChoices::from_bits(static_cast<unsigned>(config.get_int("reference.choices", 0)));
    for (int id : active_parameters(rd.choices)) rd.params[id] = config.get_double("reference." + param_name(id));
  } catch (const ConfigError& e) {
    throw GeometryError(e.what());
  }

  // The outline of the reference design must be a valid simple polygon.
  Contour c;
  try {
    c = build_contour(ref.reference_design, ref);
  } catch (const GeometryError& e) {
    throw GeometryError(std::string("invalid reference geometry: ") + e.what());
  }
  for (Vec2 p : c.points)
    if (!ref.bbox.contains(p)) throw GeometryError("reference outline leaves the domain box");
  if (auto v = validate_design(ref.reference_design, ref); !v.empty())
    throw GeometryError("reference design invalid: " + v.front().message);
  return ref;
}

}  // namespace blankopt
