#pragma once

// Scalar fields on a regular pixel grid: signed-distance rasterisation,
// iso-contour extraction, flips and the FGRD file format.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "blankopt/geometry.hpp"

namespace blankopt {

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pixel (r, c) has its centre at origin + (c, r) * spacing; rows grow with +y.
struct GridSpec {
  int height = 152;
  int width = 280;
  Vec2 origin{2.0, 2.0};
  double spacing = 4.0;

  std::size_t size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  Vec2 centre(int r, int c) const { return {origin.x + c * spacing, origin.y + r * spacing}; }
  void validate() const;
  bool operator==(const GridSpec&) const = default;

  static GridSpec desk();   // 152 x 280 over the 1120 x 608 mm domain
  static GridSpec full();  // 610 x 1120 at 1 mm
};

enum class GridKind : std::uint8_t { Sdf = 0, ThinningField = 1 };

struct ScalarGrid {
  GridSpec spec;
  GridKind kind = GridKind::Sdf;
  std::vector<float> values;

  ScalarGrid() = default;
  ScalarGrid(const GridSpec& s, GridKind k, float fill = 0.0f) : spec(s), kind(k), values(s.size(), fill) {}

  float& at(int r, int c) { return values[static_cast<std::size_t>(r) * spec.width + c]; }
  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * spec.width + c]; }
  // Bilinear interpolation at a point in mm; throws outside the pixel-centre hull.
  double sample(Vec2 p) const;
};

ScalarGrid rasterize_sdf(const Contour& contour, const GridSpec& spec);

// Every iso-polyline of the grid (closed and border-terminated).
std::vector<Contour> extract_all_contours(const ScalarGrid& grid, double iso = 0.0);
// The longest closed iso-polyline, oriented counter-clockwise.
Contour extract_contour(const ScalarGrid& grid, double iso = 0.0);

enum class FlipAxis { Horizontal, Vertical, Both };
ScalarGrid flip(const ScalarGrid& grid, FlipAxis axis);

void write_grid(const ScalarGrid& grid, const std::filesystem::path& path);
ScalarGrid read_grid(const std::filesystem::path& path);

// Plain-text exports for external plotting. The PGM is scaled min..max and
// written with +y up.
void export_csv(const ScalarGrid& grid, const std::filesystem::path& path);
void export_pgm(const ScalarGrid& grid, const std::filesystem::path& path);

}  // namespace blankopt
