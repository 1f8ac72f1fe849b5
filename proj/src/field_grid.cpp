#include "blankopt/field_grid.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "blankopt/parallel.hpp"

namespace blankopt {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'R', 'D'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

double segment_distance2(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 d = p - (a + ab * t);
  return dot(d, d);
}

template <typename T>
void put(std::vector<char>& buf, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const char* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<char>& buf, std::size_t& pos, const char* field) {
  if (pos + sizeof(T) > buf.size()) throw GridError(std::string("short read (") + field + ")");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void GridSpec::validate() const {
  if (height < 8 || width < 8)
    throw GridError("grid must be at least 8x8, got " + std::to_string(height) + "x" + std::to_string(width));
  if (!(spacing > 0.0)) throw GridError("grid spacing must be positive");
}

GridSpec GridSpec::desk() { return {152, 280, {2.0, 2.0}, 4.0}; }
GridSpec GridSpec::full() { return {610, 1120, {0.5, 0.5}, 1.0}; }

double ScalarGrid::sample(Vec2 p) const {
  const double fc = (p.x - spec.origin.x) / spec.spacing;
  const double fr = (p.y - spec.origin.y) / spec.spacing;
  if (!(fc >= 0.0 && fr >= 0.0 && fc <= spec.width - 1 && fr <= spec.height - 1))
    throw GridError("sample point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside grid");
  const int c0 = std::min(static_cast<int>(fc), spec.width - 2);
  const int r0 = std::min(static_cast<int>(fr), spec.height - 2);
  const double tc = fc - c0, tr = fr - r0;
  const double a = at(r0, c0) * (1.0 - tc) + at(r0, c0 + 1) * tc;
  const double b = at(r0 + 1, c0) * (1.0 - tc) + at(r0 + 1, c0 + 1) * tc;
  return a * (1.0 - tr) + b * tr;
}

ScalarGrid rasterize_sdf(const Contour& contour, const GridSpec& spec) {
  spec.validate();
  if (!contour.closed) throw GridError("cannot rasterize an open contour");
  if (contour.size() < 3) throw GridError("contour has fewer than 3 points");
  const auto& pts = contour.points;
  const std::size_t n = pts.size();
  ScalarGrid g(spec, GridKind::Sdf);
  parallel_for(static_cast<std::size_t>(spec.height), [&](std::size_t row) {
    const int r = static_cast<int>(row);
    const double y = spec.origin.y + r * spec.spacing;
    // Crossings of the scanline with the polygon (half-open rule on y).
    std::vector<double> xs;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = pts[i], b = pts[(i + 1) % n];
      if ((a.y <= y) != (b.y <= y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (int c = 0; c < spec.width; ++c) {
      const Vec2 p = spec.centre(r, c);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) best = std::min(best, segment_distance2(p, pts[i], pts[(i + 1) % n]));
      const double d = std::sqrt(best);
      const auto crossings = std::upper_bound(xs.begin(), xs.end(), p.x) - xs.begin();
      const bool inside = (xs.size() - static_cast<std::size_t>(crossings)) % 2 == 1;
      g.at(r, c) = d == 0.0 ? 0.0f : static_cast<float>(inside ? -d : d);
    }
  });
  return g;
}

std::vector<Contour> extract_all_contours(const ScalarGrid& grid, double iso) {
  const GridSpec& s = grid.spec;
  const int H = s.height, W = s.width;
  auto inside = [&](int r, int c) { return grid.at(r, c) < iso; };
  // Crossing nodes live on cell edges: id 2*(r*W+c) is the edge (r,c)-(r,c+1),
  // id 2*(r*W+c)+1 the edge (r,c)-(r+1,c).
  auto hnode = [&](int r, int c) { return 2L * (static_cast<long>(r) * W + c); };
  auto vnode = [&](int r, int c) { return 2L * (static_cast<long>(r) * W + c) + 1; };
  auto node_point = [&](long id) {
    const long cell = id / 2;
    const int r = static_cast<int>(cell / W), c = static_cast<int>(cell % W);
    const int r2 = (id & 1) ? r + 1 : r, c2 = (id & 1) ? c : c + 1;
    const double a = grid.at(r, c), b = grid.at(r2, c2);
    const double t = (iso - a) / (b - a);
    const Vec2 pa = s.centre(r, c), pb = s.centre(r2, c2);
    return pa + (pb - pa) * t;
  };

  std::unordered_map<long, std::array<long, 2>> adj;
  auto link = [&](long a, long b) {
    for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
      auto it = adj.find(x);
      if (it == adj.end()) adj.emplace(x, std::array<long, 2>{y, -1});
      else it->second[1] = y;
    }
  };

  for (int r = 0; r + 1 < H; ++r) {
    for (int c = 0; c + 1 < W; ++c) {
      // corners: v0 (r,c), v1 (r,c+1), v2 (r+1,c+1), v3 (r+1,c)
      const bool b0 = inside(r, c), b1 = inside(r, c + 1), b2 = inside(r + 1, c + 1), b3 = inside(r + 1, c);
      const long e0 = hnode(r, c), e1 = vnode(r, c + 1), e2 = hnode(r + 1, c), e3 = vnode(r, c);
      std::array<long, 4> crossed{};
      int k = 0;
      if (b0 != b1) crossed[k++] = e0;
      if (b1 != b2) crossed[k++] = e1;
      if (b2 != b3) crossed[k++] = e2;
      if (b3 != b0) crossed[k++] = e3;
      if (k == 2) {
        link(crossed[0], crossed[1]);
      } else if (k == 4) {
        const double centre =
            0.25 * (grid.at(r, c) + grid.at(r, c + 1) + grid.at(r + 1, c + 1) + grid.at(r + 1, c));
        if ((centre < iso) == b0) {
          link(e0, e1);  // cut off v1
          link(e2, e3);  // cut off v3
        } else {
          link(e3, e0);  // cut off v0
          link(e1, e2);  // cut off v2
        }
      }
    }
  }

  std::vector<long> keys;
  keys.reserve(adj.size());
  for (const auto& kv : adj) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());  // deterministic traversal order

  std::unordered_map<long, bool> seen;
  std::vector<Contour> out;
  auto walk = [&](long start) {
    Contour c;
    c.closed = false;
    long prev = -1, cur = start;
    while (true) {
      seen[cur] = true;
      c.points.push_back(node_point(cur));
      const auto& nb = adj.at(cur);
      long next = nb[0] != prev ? nb[0] : nb[1];
      if (nb[0] == nb[1]) next = nb[0] != prev ? nb[0] : -1;
      if (next < 0) break;
      if (next == start) {
        c.closed = true;
        break;
      }
      if (seen.count(next)) break;
      prev = cur;
      cur = next;
    }
    c.region.assign(c.points.size(), 0);
    return c;
  };
  // Open chains start at their degree-one ends.
  for (long k : keys)
    if (adj.at(k)[1] < 0 && !seen.count(k)) out.push_back(walk(k));
  for (long k : keys)
    if (!seen.count(k)) out.push_back(walk(k));
  return out;
}

Contour extract_contour(const ScalarGrid& grid, double iso) {
  auto all = extract_all_contours(grid, iso);
  if (all.empty()) throw GridError("empty level set");
  const Contour* best = nullptr;
  for (const auto& c : all)
    if (c.closed && (!best || c.perimeter() > best->perimeter())) best = &c;
  if (!best) throw GridError("no closed level set");
  Contour out = *best;
  if (out.signed_area() < 0.0) std::reverse(out.points.begin(), out.points.end());
  return out;
}

ScalarGrid flip(const ScalarGrid& grid, FlipAxis axis) {
  ScalarGrid out = grid;
  const int H = grid.spec.height, W = grid.spec.width;
  const bool h = axis != FlipAxis::Vertical, v = axis != FlipAxis::Horizontal;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) out.at(r, c) = grid.at(v ? H - 1 - r : r, h ? W - 1 - c : c);
  return out;
}

void write_grid(const ScalarGrid& grid, const std::filesystem::path& path) {
  if (grid.values.size() != grid.spec.size()) throw GridError("grid value count does not match its spec");
  std::vector<char> buf(kMagic, kMagic + 4);
  put<std::uint16_t>(buf, kVersion);
  put<std::uint8_t>(buf, kDtypeF32);
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(grid.kind));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(grid.spec.height));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(grid.spec.width));
  put<double>(buf, grid.spec.origin.x);
  put<double>(buf, grid.spec.origin.y);
  put<double>(buf, grid.spec.spacing);
  for (float v : grid.values) put<float>(buf, v);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw GridError("cannot open " + path.string() + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw GridError("write failed: " + path.string());
}

ScalarGrid read_grid(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw GridError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw GridError("bad magic");
  pos = 4;
  const auto version = take<std::uint16_t>(buf, pos, "version");
  if (version != kVersion) throw GridError("unsupported version " + std::to_string(version));
  const auto dtype = take<std::uint8_t>(buf, pos, "dtype");
  if (dtype != kDtypeF32) throw GridError("unsupported dtype " + std::to_string(dtype));
  const auto kind = take<std::uint8_t>(buf, pos, "kind");
  if (kind > 1) throw GridError("unsupported kind " + std::to_string(kind));
  ScalarGrid g;
  g.kind = static_cast<GridKind>(kind);
  g.spec.height = static_cast<int>(take<std::uint32_t>(buf, pos, "height"));
  g.spec.width = static_cast<int>(take<std::uint32_t>(buf, pos, "width"));
  g.spec.origin.x = take<double>(buf, pos, "origin_x");
  g.spec.origin.y = take<double>(buf, pos, "origin_y");
  g.spec.spacing = take<double>(buf, pos, "spacing");
  if (g.spec.height <= 0 || g.spec.width <= 0 || !(g.spec.spacing > 0.0))
    throw GridError("invalid header dimensions");
  const std::size_t n = g.spec.size();
  if (buf.size() - pos < n * sizeof(float)) throw GridError("short read");
  g.values.resize(n);
  std::memcpy(g.values.data(), buf.data() + pos, n * sizeof(float));
  return g;
}

void export_csv(const ScalarGrid& grid, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw GridError("cannot open " + path.string() + " for writing");
  f.precision(9);
  for (int r = 0; r < grid.spec.height; ++r) {
    for (int c = 0; c < grid.spec.width; ++c) {
      if (c) f << ',';
      f << grid.at(r, c);
    }
    f << '\n';
  }
}

void export_pgm(const ScalarGrid& grid, const std::filesystem::path& path) {
  const auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double a = *lo, b = *hi;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw GridError("cannot open " + path.string() + " for writing");
  f << "P5\n" << grid.spec.width << ' ' << grid.spec.height << "\n255\n";
  for (int r = grid.spec.height - 1; r >= 0; --r)
    for (int c = 0; c < grid.spec.width; ++c) {
      const double t = b > a ? (grid.at(r, c) - a) / (b - a) : 0.0;
      f.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
    }
}

}  // namespace blankopt
