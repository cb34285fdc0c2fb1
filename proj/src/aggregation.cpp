#include "vecmap/aggregation.hpp"

namespace vecmap {

RasterGrid weighted_raster(const VectorMap& sample, MapClass cls, const MapFrame& frame) {
  if (!sample.has_scores()) throw Error("weighted raster needs prediction scores");
  RasterGrid acc = frame.zero_grid();
  for (int e = 0; e < sample.size(); ++e) {
    const auto& el = sample.elements[static_cast<std::size_t>(e)];
    if (el.cls != cls) continue;
    const double score = (*sample.scores)[static_cast<std::size_t>(e)];
    rasterize_polyline_into(el, frame, acc, score, /*accumulate=*/true);
  }
  return acc;
}

RasterGrid class_probability(const RasterGrid& weighted, const GaussianKernel& kernel) {
  return convolve_smooth(weighted, kernel).cwiseMin(1.0);
}

ClassProbMap per_sample_probability(const VectorMap& sample, const MapFrame& frame,
                                    const GaussianKernel& kernel, double score_filter) {
  if (!sample.has_scores()) throw Error("per-sample probability needs prediction scores");
  VectorMap kept;
  kept.scores.emplace();
  for (int e = 0; e < sample.size(); ++e) {
    const double s = (*sample.scores)[static_cast<std::size_t>(e)];
    if (s <= score_filter) continue;
    kept.elements.push_back(sample.elements[static_cast<std::size_t>(e)]);
    kept.scores->push_back(s);
  }
  ClassProbMap out;
  out.n_samples = 1;
  for (int c = 0; c < kNumClasses; ++c)
    out.prob[static_cast<std::size_t>(c)] =
        class_probability(weighted_raster(kept, static_cast<MapClass>(c), frame), kernel);
  return out;
}

ClassProbMap aggregate(std::span<const ClassProbMap> samples) {
  if (samples.empty()) throw Error("aggregate needs at least one sample");
  ClassProbMap out;
  out.n_samples = static_cast<int>(samples.size());
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& first = samples[0].prob[static_cast<std::size_t>(c)];
    RasterGrid acc = RasterGrid::Zero(first.rows(), first.cols());
    for (const auto& s : samples) {
      const auto& g = s.prob[static_cast<std::size_t>(c)];
      if (g.rows() != acc.rows() || g.cols() != acc.cols())
        throw Error("aggregate shape mismatch");
      acc += g;
    }
    out.prob[static_cast<std::size_t>(c)] = acc / static_cast<double>(samples.size());
  }
  return out;
}

std::array<RasterGrid, kNumClasses> refine(const ClassProbMap& d, double b) {
  if (b < 0.0 || b > 1.0) throw Error("binarization threshold outside [0, 1]");
  std::array<RasterGrid, kNumClasses> out;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& g = d.prob[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(c)] =
        (g.array() >= b).cast<double>().matrix();
  }
  return out;
}

UncertaintyMap uncertainty(std::span<const ClassProbMap> samples) {
  if (samples.empty()) throw Error("uncertainty needs at least one sample");
  const auto& first = samples[0].prob[0];
  UncertaintyMap out;
  out.u = RasterGrid::Zero(first.rows(), first.cols());
  if (samples.size() < 2) return out;  // zero map by convention
  const double n = static_cast<double>(samples.size());
  for (int c = 0; c < kNumClasses; ++c) {
    RasterGrid mean = RasterGrid::Zero(first.rows(), first.cols());
    for (const auto& s : samples) mean += s.prob[static_cast<std::size_t>(c)];
    mean /= n;
    RasterGrid var = RasterGrid::Zero(first.rows(), first.cols());
    for (const auto& s : samples) {
      const RasterGrid d = s.prob[static_cast<std::size_t>(c)] - mean;
      var += d.cwiseProduct(d);
    }
    out.u += var / n;  // population variance
  }
  return out;
}

}  // namespace vecmap
