#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "vecmap/aggregation.hpp"
#include "vecmap/geometry.hpp"

namespace vecmap {

inline constexpr std::array<double, 3> kApThresholds = {0.5, 1.0, 1.5};  // meters

struct ApResult {
  // ap[class][threshold]; absent when the class has no GT instances anywhere.
  std::array<std::array<std::optional<double>, 3>, kNumClasses> ap;
  double mAP = 0.0;

  std::optional<double> class_ap(MapClass c) const;  // mean over thresholds
};

// Greedy score-ordered matching against per-scene GT under a Chamfer
// threshold; all-point PR interpolation.
double average_precision(std::span<const VectorMap> preds, std::span<const VectorMap> gts,
                         MapClass cls, double threshold_m, const MapFrame& frame);

ApResult evaluate_ap(std::span<const VectorMap> preds, std::span<const VectorMap> gts,
                     const MapFrame& frame);

struct RocPoint {
  double b = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // ordered by descending b
  double auc = 0.0;
  long positives = 0;
  long negatives = 0;
};

std::vector<double> default_b_grid(int count = 256);

// Micro-averaged pixel classification: positives are width-1 GT raster cells,
// pooled over classes and scenes. Threshold grid is extended with the exact
// distinct D values on small grids.
RocResult roc_curve(std::span<const ClassProbMap> ds, std::span<const VectorMap> gts,
                    const MapFrame& frame, std::span<const double> b_grid);

// Per-class curve for one class only (same pooling over scenes).
RocResult roc_curve_class(std::span<const ClassProbMap> ds, std::span<const VectorMap> gts,
                          MapClass cls, const MapFrame& frame, std::span<const double> b_grid);

}  // namespace vecmap
