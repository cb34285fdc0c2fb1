#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vecmap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense value grid, grid_h x grid_w. Row index runs along the longitudinal
// (x) axis starting at x_min, column index along the lateral (y) axis.
using RasterGrid = Eigen::MatrixXd;

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

enum class MapClass : int { divider = 0, boundary = 1, ped_crossing = 2 };
inline constexpr int kNumClasses = 3;

const char* class_name(MapClass c);
std::optional<MapClass> class_from_name(const std::string& name);

// Ego-centred BEV frame. Normalized coordinates map the extent onto the unit
// square: u = (x - x_min) / x_span, v = (y - y_min) / y_span.
struct MapFrame {
  double x_min = -30.0;
  double x_max = 30.0;
  double y_min = -15.0;
  double y_max = 15.0;
  int grid_h = 100;
  int grid_w = 50;
  double cell_size = 0.6;

  double x_span() const { return x_max - x_min; }
  double y_span() const { return y_max - y_min; }
  bool consistent() const;

  Eigen::Vector2d normalize(double x, double y) const {
    return {(x - x_min) / x_span(), (y - y_min) / y_span()};
  }
  Eigen::Vector2d denormalize(double u, double v) const {
    return {x_min + u * x_span(), y_min + v * y_span()};
  }
  // Point-to-cell by floor of the scaled coordinate; coordinates outside
  // [0,1] clamp to the border cell.
  std::pair<int, int> cell_of(double u, double v) const;
  // Center of cell (r, c) in normalized coordinates.
  Eigen::Vector2d cell_center(int r, int c) const {
    return {(r + 0.5) / grid_h, (c + 0.5) / grid_w};
  }
  std::pair<int, int> center_cell() const { return {grid_h / 2, grid_w / 2}; }

  RasterGrid zero_grid() const { return RasterGrid::Zero(grid_h, grid_w); }
};

// Square frame helper for toy grids in tests and tools.
MapFrame make_toy_frame(int grid_h, int grid_w, double cell_size = 0.6);

struct Polyline {
  PointMatrix points;  // n_p x 2, normalized [0,1]^2 for GT
  MapClass cls = MapClass::divider;

  int size() const { return static_cast<int>(points.rows()); }
};

struct VectorMap {
  std::vector<Polyline> elements;
  std::optional<std::vector<double>> scores;  // aligned 1:1 when present

  bool has_scores() const { return scores.has_value(); }
  int size() const { return static_cast<int>(elements.size()); }
};

struct GaussianKernel {
  int size = 5;        // odd
  double sigma = 1.0;  // in cells
  Eigen::MatrixXd weights;  // size x size, sums to 1
};

GaussianKernel make_gaussian_kernel(int size, double sigma);

// Uniform arc-length resampling; endpoints preserved exactly.
Polyline resample_polyline(const PointMatrix& raw, int n_p,
                           MapClass cls = MapClass::divider);

// Symmetric point-set Chamfer distance in world meters.
double chamfer_distance(const Polyline& a, const Polyline& b, const MapFrame& frame);

// Cells on the Bresenham trace between two cells, endpoints included.
std::vector<std::pair<int, int>> bresenham_cells(int r0, int c0, int r1, int c1);

RasterGrid rasterize_polyline(const Polyline& p, const MapFrame& frame);
void rasterize_polyline_into(const Polyline& p, const MapFrame& frame, RasterGrid& grid,
                             double value = 1.0, bool accumulate = false);

// 2-D convolution with zero padding; output shape unchanged.
RasterGrid convolve_smooth(const RasterGrid& r, const GaussianKernel& k);

inline double to_signal(double u) { return 2.0 * u - 1.0; }
inline double from_signal(double z) { return 0.5 * (z + 1.0); }

template <typename Derived>
auto to_signal(const Eigen::MatrixBase<Derived>& m) {
  return (2.0 * m.array() - 1.0).matrix();
}
template <typename Derived>
auto from_signal(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m.array() + 1.0)).matrix();
}

}  // namespace vecmap
