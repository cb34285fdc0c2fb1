#pragma once

#include <Eigen/Dense>

namespace vecmap {

// Encoded observation used to condition the denoiser. Features are stored as
// channels x (grid_h * grid_w) with cell index r * grid_w + c.
struct LatentGrid {
  Eigen::MatrixXd features;
  int grid_h = 0;
  int grid_w = 0;

  int channels() const { return static_cast<int>(features.rows()); }
};

}  // namespace vecmap
