#pragma once

#include <array>
#include <span>

#include "vecmap/geometry.hpp"

namespace vecmap {

// Per-class probability grids D_c in [0, 1].
struct ClassProbMap {
  std::array<RasterGrid, kNumClasses> prob;
  int n_samples = 1;
};

struct UncertaintyMap {
  RasterGrid u;  // non-negative
};

// Score-weighted sum of width-1 rasters for one class; overlaps add.
// Callers filter by score beforehand (see per_sample_probability).
RasterGrid weighted_raster(const VectorMap& sample, MapClass cls, const MapFrame& frame);

// Smooth then clip to [0, 1].
RasterGrid class_probability(const RasterGrid& weighted, const GaussianKernel& kernel);

// Weighted raster + smoothing + clip for all classes of one sample, with the
// score filter applied up front.
ClassProbMap per_sample_probability(const VectorMap& sample, const MapFrame& frame,
                                    const GaussianKernel& kernel, double score_filter);

// Cellwise mean over samples.
ClassProbMap aggregate(std::span<const ClassProbMap> samples);

// Cellwise threshold: 1 iff D_c >= b.
std::array<RasterGrid, kNumClasses> refine(const ClassProbMap& d, double b);

// Sum over classes of the population variance across samples; the single
// sample case is the zero map by convention.
UncertaintyMap uncertainty(std::span<const ClassProbMap> samples);

}  // namespace vecmap
