#include "vatlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace vatlab {
namespace {

/// Lattice edges are keyed so that neighbouring cells agree on crossing ids:
/// horizontal edge (i,j)-(i+1,j) is 2·(j·nx + i), vertical (i,j)-(i,j+1) is 2·(j·nx + i) + 1.
struct Crossing {
  std::size_t edge;
  Point2 at;
};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Bounds padded_bounds(const Tensor& points, double pad) {
  if (points.rank() != 2 || points.cols() != 2 || points.rows() == 0) {
    throw DimensionError("padded_bounds: expected a non-empty N x 2 tensor");
  }
  Bounds b{points(0, 0), points(0, 0), points(0, 1), points(0, 1)};
  for (std::size_t r = 0; r < points.rows(); ++r) {
    b.x_min = std::min(b.x_min, points(r, 0));
    b.x_max = std::max(b.x_max, points(r, 0));
    b.y_min = std::min(b.y_min, points(r, 1));
    b.y_max = std::max(b.y_max, points(r, 1));
  }
  const double wx = std::max(b.x_max - b.x_min, 1e-9);
  const double wy = std::max(b.y_max - b.y_min, 1e-9);
  b.x_min -= pad * wx;
  b.x_max += pad * wx;
  b.y_min -= pad * wy;
  b.y_max += pad * wy;
  return b;
}

double BoundaryGrid::x_at(std::size_t i) const {
  return nx < 2 ? bounds.x_min
                : bounds.x_min + (bounds.x_max - bounds.x_min) * static_cast<double>(i) / static_cast<double>(nx - 1);
}

double BoundaryGrid::y_at(std::size_t j) const {
  return ny < 2 ? bounds.y_min
                : bounds.y_min + (bounds.y_max - bounds.y_min) * static_cast<double>(j) / static_cast<double>(ny - 1);
}

BoundaryGrid boundary_grid(const MlpNetwork& net, const EmbeddingMap& map, const Bounds& bounds,
                           std::size_t nx, std::size_t ny) {
  if (nx < 2 || ny < 2) throw ConfigError("boundary: lattice needs at least 2 x 2 points");
  if (net.output_classes() != 2) throw UsageError("boundary: network must have two classes");
  if (net.input_dim() != map.matrix.cols()) {
    throw UsageError("boundary: network input dimension does not match the embedding");
  }
  BoundaryGrid g{bounds, nx, ny, std::vector<double>(nx * ny)};
  Tensor plane({nx, 2});
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      plane(i, 0) = g.x_at(i);
      plane(i, 1) = g.y_at(j);
    }
    const Tensor p = softmax(predict_logits(net, embed_100d(plane, map)));
    for (std::size_t i = 0; i < nx; ++i) g.values[j * nx + i] = std::clamp(p(i, 1), 0.0, 1.0);
  }
  return g;
}

std::vector<Polyline> contour_lines(const BoundaryGrid& grid, double level) {
  const std::size_t nx = grid.nx, ny = grid.ny;
  auto inside = [&](std::size_t i, std::size_t j) { return grid.at(i, j) > level; };
  auto interp = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
    const double v0 = grid.at(i0, j0), v1 = grid.at(i1, j1);
    const double t = v1 == v0 ? 0.5 : std::clamp((level - v0) / (v1 - v0), 0.0, 1.0);
    return Point2{grid.x_at(i0) + t * (grid.x_at(i1) - grid.x_at(i0)),
                  grid.y_at(j0) + t * (grid.y_at(j1) - grid.y_at(j0))};
  };

  std::vector<std::pair<Crossing, Crossing>> segments;
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      // Corners 0..3 counter-clockwise from (i,j); edges 0 bottom, 1 right, 2 top, 3 left.
      const int mask = (inside(i, j) ? 1 : 0) | (inside(i + 1, j) ? 2 : 0) |
                       (inside(i + 1, j + 1) ? 4 : 0) | (inside(i, j + 1) ? 8 : 0);
      if (mask == 0 || mask == 15) continue;
      auto edge = [&](int e) -> Crossing {
        switch (e) {
          case 0: return {2 * (j * nx + i), interp(i, j, i + 1, j)};
          case 1: return {2 * (j * nx + i + 1) + 1, interp(i + 1, j, i + 1, j + 1)};
          case 2: return {2 * ((j + 1) * nx + i), interp(i, j + 1, i + 1, j + 1)};
          default: return {2 * (j * nx + i) + 1, interp(i, j, i, j + 1)};
        }
      };
      auto add = [&](int a, int b) { segments.push_back({edge(a), edge(b)}); };
      const bool centre_inside =
          (grid.at(i, j) + grid.at(i + 1, j) + grid.at(i + 1, j + 1) + grid.at(i, j + 1)) / 4.0 > level;
      switch (mask) {
        case 1: case 14: add(3, 0); break;
        case 2: case 13: add(0, 1); break;
        case 3: case 12: add(3, 1); break;
        case 4: case 11: add(1, 2); break;
        case 6: case 9: add(0, 2); break;
        case 7: case 8: add(3, 2); break;
        case 5:
          if (centre_inside) { add(3, 2); add(0, 1); } else { add(3, 0); add(1, 2); }
          break;
        case 10:
          if (centre_inside) { add(3, 0); add(1, 2); } else { add(3, 2); add(0, 1); }
          break;
        default: break;
      }
    }
  }

  std::multimap<std::size_t, std::size_t> by_edge;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    by_edge.emplace(segments[s].first.edge, s);
    by_edge.emplace(segments[s].second.edge, s);
  }
  std::vector<bool> used(segments.size(), false);
  auto take_next = [&](std::size_t edge_id, std::size_t from) -> std::ptrdiff_t {
    auto [lo, hi] = by_edge.equal_range(edge_id);
    for (auto it = lo; it != hi; ++it)
      if (it->second != from && !used[it->second]) return static_cast<std::ptrdiff_t>(it->second);
    return -1;
  };

  std::vector<Polyline> lines;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (used[s]) continue;
    used[s] = true;
    std::vector<Crossing> chain{segments[s].first, segments[s].second};
    for (int direction = 0; direction < 2; ++direction) {
      std::size_t current = s;
      while (true) {
        const std::size_t tail = chain.back().edge;
        const std::ptrdiff_t n = take_next(tail, current);
        if (n < 0) break;
        used[static_cast<std::size_t>(n)] = true;
        const auto& seg = segments[static_cast<std::size_t>(n)];
        chain.push_back(seg.first.edge == tail ? seg.second : seg.first);
        current = static_cast<std::size_t>(n);
      }
      std::reverse(chain.begin(), chain.end());
    }
    Polyline line;
    for (const auto& c : chain) line.push_back(c.at);
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string boundary_grid_csv(const BoundaryGrid& grid) {
  std::ostringstream os;
  os.precision(10);
  os << "x,y,p1\n";
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) os << grid.x_at(i) << ',' << grid.y_at(j) << ',' << grid.at(i, j) << '\n';
  return os.str();
}

std::string boundary_svg(const BoundaryGrid& grid, const std::vector<Polyline>& contours,
                         const Tensor& points, std::span<const int> labels,
                         const SvgOptions& options) {
  if (points.rows() != labels.size()) throw DimensionError("boundary_svg: label count differs from points");
  const double header = 30.0;
  const double w = options.width, h = options.height;
  const Bounds& b = grid.bounds;
  auto px = [&](double x) { return (x - b.x_min) / (b.x_max - b.x_min) * w; };
  auto py = [&](double y) { return header + (b.y_max - y) / (b.y_max - b.y_min) * h; };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h + header
     << "\" viewBox=\"0 0 " << w << ' ' << h + header << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h + header << "\" fill=\"white\"/>\n";
  os << "<text x=\"8\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape_xml(options.title)
     << "</text>\n";

  // Coarse shading: one rectangle per block of lattice cells, coloured by mean p(y=1).
  const std::size_t block = std::max<std::size_t>(1, std::max(grid.nx, grid.ny) / 50);
  os << "<g stroke=\"none\">\n";
  for (std::size_t j = 0; j + 1 < grid.ny; j += block) {
    for (std::size_t i = 0; i + 1 < grid.nx; i += block) {
      const std::size_t i1 = std::min(i + block, grid.nx - 1), j1 = std::min(j + block, grid.ny - 1);
      double s = 0.0;
      std::size_t n = 0;
      for (std::size_t jj = j; jj <= j1; ++jj)
        for (std::size_t ii = i; ii <= i1; ++ii, ++n) s += grid.at(ii, jj);
      const double p = s / static_cast<double>(n);
      const int red = static_cast<int>(std::lround(255.0 - 60.0 * (1.0 - p)));
      const int blue = static_cast<int>(std::lround(255.0 - 60.0 * p));
      const int green = static_cast<int>(std::lround(255.0 - 60.0 * std::min(p, 1.0 - p) * 2.0));
      const double x0 = px(grid.x_at(i)), x1 = px(grid.x_at(i1));
      const double y0 = py(grid.y_at(j1)), y1 = py(grid.y_at(j));
      os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << x1 - x0 + 0.5 << "\" height=\""
         << y1 - y0 + 0.5 << "\" fill=\"rgb(" << red << ',' << green << ',' << blue << ")\"/>\n";
    }
  }
  os << "</g>\n";

  for (const auto& line : contours) {
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"2\" points=\"";
    for (const auto& p : line) os << px(p[0]) << ',' << py(p[1]) << ' ';
    os << "\"/>\n";
  }
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const double x = px(points(r, 0)), y = py(points(r, 1));
    if (labels[r] == 1) {
      os << "<circle class=\"label1\" cx=\"" << x << "\" cy=\"" << y
         << "\" r=\"6\" fill=\"none\" stroke=\"crimson\" stroke-width=\"2\"/>\n";
    } else {
      os << "<path class=\"label0\" d=\"M" << x - 5 << ',' << y - 5 << " L" << x + 5 << ',' << y + 5 << " M"
         << x - 5 << ',' << y + 5 << " L" << x + 5 << ',' << y - 5
         << "\" stroke=\"royalblue\" stroke-width=\"2\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vatlab
