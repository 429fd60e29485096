#pragma once

#include <array>
#include <string>

#include "vatlab/data.hpp"
#include "vatlab/nn.hpp"

namespace vatlab {

struct Bounds {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
};

/// Bounding box of N x 2 points, widened by `pad` times its extent on every side.
Bounds padded_bounds(const Tensor& points, double pad = 0.3);

/// p(y = 1 | ·) on a regular lattice over the pre-embedding plane.
struct BoundaryGrid {
  Bounds bounds;
  std::size_t nx = 0, ny = 0;
  std::vector<double> values;  // values[j * nx + i] at (x_at(i), y_at(j))

  double x_at(std::size_t i) const;
  double y_at(std::size_t j) const;
  double at(std::size_t i, std::size_t j) const { return values[j * nx + i]; }
};

/// Evaluates a two-class network on lattice points pushed through `map`.
BoundaryGrid boundary_grid(const MlpNetwork& net, const EmbeddingMap& map, const Bounds& bounds,
                           std::size_t nx = 200, std::size_t ny = 200);

using Point2 = std::array<double, 2>;
using Polyline = std::vector<Point2>;

/// Level set of the lattice by marching squares, joined into polylines. A
/// corner counts as inside when its value exceeds `level`; saddle cells are
/// resolved by the cell-centre average.
std::vector<Polyline> contour_lines(const BoundaryGrid& grid, double level = 0.5);

/// x,y,p1 per lattice point.
std::string boundary_grid_csv(const BoundaryGrid& grid);

struct SvgOptions {
  std::string title;
  double width = 600.0;
  double height = 600.0;
};

/// Shaded probability cells, the contour polylines, and the points as two marker classes.
std::string boundary_svg(const BoundaryGrid& grid, const std::vector<Polyline>& contours,
                         const Tensor& points, std::span<const int> labels,
                         const SvgOptions& options = {});

}  // namespace vatlab
