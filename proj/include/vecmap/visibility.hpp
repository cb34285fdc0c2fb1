#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vecmap/geometry.hpp"
#include "vecmap/stats.hpp"

namespace vecmap {

struct VisibilityMask {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> visible;
  std::pair<int, int> ego_cell{0, 0};

  bool at(int r, int c) const { return visible(r, c) != 0; }
};

// Cell-center to cell-center ray tracing over a binary occupancy grid. A cell
// is visible iff no strictly intermediate cell on the exact traversal is
// occupied; occupied cells themselves stay visible. Traversal is integer
// exact; rays through a lattice corner step diagonally, so corner-touching
// cells do not block.
VisibilityMask ray_trace(const RasterGrid& occupancy, std::pair<int, int> ego);

struct SceneVisibilityInput {
  std::uint64_t scene_id = 0;
  const RasterGrid* uncertainty = nullptr;
  const VisibilityMask* mask = nullptr;
  const RasterGrid* drivable = nullptr;
};

struct VisibilityStats {
  struct Row {
    std::uint64_t scene_id = 0;
    double mean_visible = 0.0;
    double mean_invisible = 0.0;
    long n_visible = 0;
    long n_invisible = 0;
    bool used = false;
  };
  std::vector<Row> rows;
  int n_used = 0;
  int n_skipped = 0;
  double grand_mean_visible = 0.0;
  double grand_mean_invisible = 0.0;
  double ratio = 0.0;  // invisible / visible
  double t_stat = 0.0;
  double p_value = 1.0;
  bool paired = true;
};

// Per-scene mean uncertainty over the evaluation universe (visible cells plus
// drivable surface), split by visibility, then a one-sided t-test on
// invisible > visible. Scenes missing either side of the split are skipped
// and counted.
VisibilityStats compare_uncertainty(const std::vector<SceneVisibilityInput>& scenes,
                                    bool paired = true);

}  // namespace vecmap
