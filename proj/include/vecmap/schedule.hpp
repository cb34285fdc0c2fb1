#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace vecmap {

// Cumulative signal-retention table for the cosine schedule,
// alpha_bar[t] for t in [0, T].
struct NoiseSchedule {
  int T = 1000;
  Eigen::VectorXd alpha_bar;

  double at(int t) const;
  // Stable identity for checkpoint/sampler compatibility checks.
  std::uint64_t fingerprint() const;
};

NoiseSchedule build_cosine_schedule(int T);

}  // namespace vecmap
