#include "vecmap/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace vecmap {

const char* class_name(MapClass c) {
  switch (c) {
    case MapClass::divider: return "divider";
    case MapClass::boundary: return "boundary";
    case MapClass::ped_crossing: return "ped_crossing";
  }
  return "unknown";
}

std::optional<MapClass> class_from_name(const std::string& name) {
  if (name == "divider") return MapClass::divider;
  if (name == "boundary") return MapClass::boundary;
  if (name == "ped_crossing") return MapClass::ped_crossing;
  return std::nullopt;
}

bool MapFrame::consistent() const {
  return grid_h > 0 && grid_w > 0 && cell_size > 0 &&
         std::abs(grid_h * cell_size - x_span()) < 1e-9 &&
         std::abs(grid_w * cell_size - y_span()) < 1e-9;
}

std::pair<int, int> MapFrame::cell_of(double u, double v) const {
  const double uc = std::clamp(u, 0.0, 1.0);
  const double vc = std::clamp(v, 0.0, 1.0);
  int r = static_cast<int>(std::floor(uc * grid_h));
  int c = static_cast<int>(std::floor(vc * grid_w));
  r = std::clamp(r, 0, grid_h - 1);
  c = std::clamp(c, 0, grid_w - 1);
  return {r, c};
}

MapFrame make_toy_frame(int grid_h, int grid_w, double cell_size) {
  MapFrame f;
  f.grid_h = grid_h;
  f.grid_w = grid_w;
  f.cell_size = cell_size;
  f.x_min = -0.5 * grid_h * cell_size;
  f.x_max = 0.5 * grid_h * cell_size;
  f.y_min = -0.5 * grid_w * cell_size;
  f.y_max = 0.5 * grid_w * cell_size;
  return f;
}

GaussianKernel make_gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw Error("kernel size must be odd and positive");
  if (sigma <= 0) throw Error("kernel sigma must be positive");
  GaussianKernel k;
  k.size = size;
  k.sigma = sigma;
  k.weights.resize(size, size);
  const int r = size / 2;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j)
      k.weights(i + r, j + r) = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
  k.weights /= k.weights.sum();
  return k;
}

Polyline resample_polyline(const PointMatrix& raw, int n_p, MapClass cls) {
  if (n_p < 2) throw Error("resample target must have at least 2 points");
  const int n = static_cast<int>(raw.rows());
  if (n < 2) throw Error("zero-length polyline");

  Eigen::VectorXd cum(n);
  cum(0) = 0.0;
  for (int i = 1; i < n; ++i)
    cum(i) = cum(i - 1) + (raw.row(i) - raw.row(i - 1)).norm();
  const double total = cum(n - 1);
  if (total <= 0.0) throw Error("zero-length polyline");

  Polyline out;
  out.cls = cls;
  out.points.resize(n_p, 2);
  out.points.row(0) = raw.row(0);
  out.points.row(n_p - 1) = raw.row(n - 1);
  int seg = 0;
  for (int i = 1; i < n_p - 1; ++i) {
    const double target = total * i / (n_p - 1);
    while (seg < n - 2 && cum(seg + 1) < target) ++seg;
    const double len = cum(seg + 1) - cum(seg);
    const double a = len > 0 ? (target - cum(seg)) / len : 0.0;
    out.points.row(i) = (1.0 - a) * raw.row(seg) + a * raw.row(seg + 1);
  }
  return out;
}

double chamfer_distance(const Polyline& a, const Polyline& b, const MapFrame& frame) {
  if (a.size() == 0 || b.size() == 0) throw Error("chamfer on empty polyline");
  const double sx = frame.x_span();
  const double sy = frame.y_span();
  auto directed = [&](const PointMatrix& p, const PointMatrix& q) {
    double acc = 0.0;
    for (int i = 0; i < p.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < q.rows(); ++j) {
        const double dx = (p(i, 0) - q(j, 0)) * sx;
        const double dy = (p(i, 1) - q(j, 1)) * sy;
        best = std::min(best, dx * dx + dy * dy);
      }
      acc += std::sqrt(best);
    }
    return acc / static_cast<double>(p.rows());
  };
  return 0.5 * (directed(a.points, b.points) + directed(b.points, a.points));
}

std::vector<std::pair<int, int>> bresenham_cells(int r0, int c0, int r1, int c1) {
  std::vector<std::pair<int, int>> cells;
  int dr = std::abs(r1 - r0);
  int dc = std::abs(c1 - c0);
  const int sr = r0 < r1 ? 1 : -1;
  const int sc = c0 < c1 ? 1 : -1;
  int err = dr - dc;
  int r = r0, c = c0;
  while (true) {
    cells.emplace_back(r, c);
    if (r == r1 && c == c1) break;
    const int e2 = 2 * err;
    if (e2 > -dc) {
      err -= dc;
      r += sr;
    }
    if (e2 < dr) {
      err += dr;
      c += sc;
    }
  }
  return cells;
}

void rasterize_polyline_into(const Polyline& p, const MapFrame& frame, RasterGrid& grid,
                             double value, bool accumulate) {
  const int n = p.size();
  if (n == 0) return;
  auto stamp = [&](int r, int c) {
    if (accumulate)
      grid(r, c) += value;
    else
      grid(r, c) = value;
  };
  if (n == 1) {
    auto [r, c] = frame.cell_of(p.points(0, 0), p.points(0, 1));
    stamp(r, c);
    return;
  }
  // Cells shared by consecutive segments are stamped once per polyline.
  RasterGrid seen = RasterGrid::Zero(frame.grid_h, frame.grid_w);
  for (int i = 0; i + 1 < n; ++i) {
    auto [r0, c0] = frame.cell_of(p.points(i, 0), p.points(i, 1));
    auto [r1, c1] = frame.cell_of(p.points(i + 1, 0), p.points(i + 1, 1));
    for (auto [r, c] : bresenham_cells(r0, c0, r1, c1)) {
      if (seen(r, c) == 0.0) {
        seen(r, c) = 1.0;
        stamp(r, c);
      }
    }
  }
}

RasterGrid rasterize_polyline(const Polyline& p, const MapFrame& frame) {
  RasterGrid grid = frame.zero_grid();
  rasterize_polyline_into(p, frame, grid);
  return grid;
}

RasterGrid convolve_smooth(const RasterGrid& r, const GaussianKernel& k) {
  const int h = static_cast<int>(r.rows());
  const int w = static_cast<int>(r.cols());
  const int kr = k.size / 2;
  RasterGrid out = RasterGrid::Zero(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int di = -kr; di <= kr; ++di) {
        const int ii = i + di;
        if (ii < 0 || ii >= h) continue;
        for (int dj = -kr; dj <= kr; ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= w) continue;
          acc += r(ii, jj) * k.weights(di + kr, dj + kr);
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

}  // namespace vecmap
