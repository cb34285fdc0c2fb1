#include "vecmap/scene.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "vecmap/rng.hpp"
#include "vecmap/visibility.hpp"

namespace vecmap {

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
  }
  return "unknown";
}

std::optional<Difficulty> difficulty_from_name(const std::string& name) {
  if (name == "easy") return Difficulty::easy;
  if (name == "medium") return Difficulty::medium;
  if (name == "hard") return Difficulty::hard;
  return std::nullopt;
}

RasterGrid ObservationGrid::channel_grid(int ch) const {
  RasterGrid g(grid_h, grid_w);
  for (int r = 0; r < grid_h; ++r)
    for (int c = 0; c < grid_w; ++c) g(r, c) = channels(ch, r * grid_w + c);
  return g;
}

namespace {

struct DifficultyParams {
  int corridors_min, corridors_max;
  double straight_prob;
  double radius_min, radius_max;  // meters
  int dividers_min, dividers_max;
  int peds_min, peds_max;
  int occluders_min, occluders_max;
};

DifficultyParams params_for(Difficulty d) {
  switch (d) {
    case Difficulty::easy:
      return {1, 1, 0.6, 120.0, 300.0, 0, 2, 0, 1, 0, 2};
    case Difficulty::medium:
      return {1, 2, 0.35, 60.0, 200.0, 0, 3, 0, 2, 1, 4};
    case Difficulty::hard:
      return {2, 3, 0.2, 35.0, 120.0, 1, 3, 0, 2, 2, 6};
  }
  return {1, 1, 0.6, 120.0, 300.0, 0, 2, 0, 1, 0, 2};
}

// World-space chain with per-point unit normals.
struct Chain {
  std::vector<Eigen::Vector2d> pts;
  std::vector<Eigen::Vector2d> normals;
  double half_width = 4.0;
};

Chain make_centerline(Rng& rng, const MapFrame& frame, const DifficultyParams& dp,
                      bool branch, const Eigen::Vector2d& anchor, double base_heading) {
  Chain chain;
  const double span = std::hypot(frame.x_span(), frame.y_span());
  const double length = 1.6 * span;
  const double step = 1.5;
  const int n = static_cast<int>(length / step) + 1;
  chain.half_width = rng.uniform(3.5, 5.5);

  double heading = base_heading;
  if (branch) heading += (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(M_PI / 6, M_PI / 2);
  const bool straight = rng.bernoulli(dp.straight_prob);
  const double radius = rng.uniform(dp.radius_min, dp.radius_max);
  const double curvature = straight ? 0.0 : (rng.bernoulli(0.5) ? 1.0 : -1.0) / radius;

  Eigen::Vector2d p = anchor;
  double h = heading;
  // Walk backwards half the length, then forward the full length.
  for (int i = 0; i < n / 2; ++i) {
    p -= step * Eigen::Vector2d(std::cos(h), std::sin(h));
    h -= curvature * step;
  }
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d dir(std::cos(h), std::sin(h));
    chain.pts.push_back(p);
    chain.normals.emplace_back(-dir.y(), dir.x());
    p += step * dir;
    h += curvature * step;
  }
  return chain;
}

// Offset curve clipped to the frame, normalized, resampled; empty when the
// in-extent run is too short.
std::optional<Polyline> offset_polyline(const Chain& chain, double offset, MapClass cls,
                                        const MapFrame& frame, int n_p) {
  std::vector<Eigen::Vector2d> best, run;
  auto flush = [&]() {
    if (run.size() > best.size()) best = run;
    run.clear();
  };
  for (std::size_t i = 0; i < chain.pts.size(); ++i) {
    const Eigen::Vector2d w = chain.pts[i] + offset * chain.normals[i];
    const bool inside = w.x() >= frame.x_min && w.x() <= frame.x_max &&
                        w.y() >= frame.y_min && w.y() <= frame.y_max;
    if (inside)
      run.push_back(w);
    else
      flush();
  }
  flush();
  if (best.size() < 2) return std::nullopt;
  double len = 0.0;
  for (std::size_t i = 1; i < best.size(); ++i) len += (best[i] - best[i - 1]).norm();
  if (len < 4.0) return std::nullopt;
  PointMatrix raw(static_cast<int>(best.size()), 2);
  for (std::size_t i = 0; i < best.size(); ++i)
    raw.row(static_cast<int>(i)) = frame.normalize(best[i].x(), best[i].y());
  return resample_polyline(raw, n_p, cls);
}

std::optional<Polyline> crossing_polyline(const Chain& chain, std::size_t idx,
                                          const MapFrame& frame, int n_p) {
  const Eigen::Vector2d& c = chain.pts[idx];
  const Eigen::Vector2d& n = chain.normals[idx];
  const double reach = chain.half_width - 0.4;
  const Eigen::Vector2d a = c - reach * n;
  const Eigen::Vector2d b = c + reach * n;
  auto inside = [&](const Eigen::Vector2d& w) {
    return w.x() >= frame.x_min && w.x() <= frame.x_max && w.y() >= frame.y_min &&
           w.y() <= frame.y_max;
  };
  if (!inside(a) || !inside(b)) return std::nullopt;
  PointMatrix raw(2, 2);
  raw.row(0) = frame.normalize(a.x(), a.y());
  raw.row(1) = frame.normalize(b.x(), b.y());
  return resample_polyline(raw, n_p, MapClass::ped_crossing);
}

double distance_to_chain(const Chain& chain, const Eigen::Vector2d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < chain.pts.size(); ++i) {
    const Eigen::Vector2d a = chain.pts[i];
    const Eigen::Vector2d d = chain.pts[i + 1] - a;
    const double len2 = d.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, (p - (a + t * d)).squaredNorm());
  }
  return std::sqrt(best);
}

bool try_generate(std::uint64_t seed, Difficulty difficulty, const MapFrame& frame,
                  const GeneratorOptions& opt, int attempt, Scene& out) {
  const DifficultyParams dp = params_for(difficulty);
  Rng rng(derive_seed(seed, 0x5ce7e, static_cast<std::uint64_t>(attempt)));

  const int n_corridors = static_cast<int>(rng.uniform_int(dp.corridors_min, dp.corridors_max));
  std::vector<Chain> chains;
  const Eigen::Vector2d center(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
  const double base_heading = rng.uniform(-25.0, 25.0) * M_PI / 180.0;
  chains.push_back(make_centerline(rng, frame, dp, false, center, base_heading));
  for (int i = 1; i < n_corridors; ++i) {
    const auto& main = chains.front();
    const std::size_t idx =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(main.pts.size()) - 1));
    chains.push_back(make_centerline(rng, frame, dp, true, main.pts[idx], base_heading));
  }

  VectorMap gt;
  auto add = [&](std::optional<Polyline> p) {
    if (p && gt.size() < opt.max_elements) {
      gt.elements.push_back(std::move(*p));
      return true;
    }
    return false;
  };

  // Boundaries first, then dividers, then crossings; total capped.
  for (const auto& chain : chains) {
    add(offset_polyline(chain, -chain.half_width, MapClass::boundary, frame, opt.n_p));
    add(offset_polyline(chain, chain.half_width, MapClass::boundary, frame, opt.n_p));
  }
  for (const auto& chain : chains) {
    const int n_div = static_cast<int>(rng.uniform_int(dp.dividers_min, dp.dividers_max));
    const double margin = 1.5;
    for (int i = 0; i < n_div; ++i) {
      const double off = rng.uniform(-(chain.half_width - margin), chain.half_width - margin);
      add(offset_polyline(chain, off, MapClass::divider, frame, opt.n_p));
    }
  }
  for (const auto& chain : chains) {
    const int n_ped = static_cast<int>(rng.uniform_int(dp.peds_min, dp.peds_max));
    for (int i = 0; i < n_ped; ++i) {
      const std::size_t lo = chain.pts.size() / 4;
      const std::size_t hi = chain.pts.size() - 1 - chain.pts.size() / 4;
      const std::size_t idx =
          static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo),
                                                   static_cast<std::int64_t>(hi)));
      add(crossing_polyline(chain, idx, frame, opt.n_p));
    }
  }
  if (gt.size() < 2) return false;

  // Drivable surface: cells whose center lies within a corridor band.
  RasterGrid drivable = frame.zero_grid();
  for (int r = 0; r < frame.grid_h; ++r) {
    for (int c = 0; c < frame.grid_w; ++c) {
      const Eigen::Vector2d uv = frame.cell_center(r, c);
      const Eigen::Vector2d w = frame.denormalize(uv.x(), uv.y());
      for (const auto& chain : chains) {
        if (distance_to_chain(chain, w) <= chain.half_width) {
          drivable(r, c) = 1.0;
          break;
        }
      }
    }
  }

  const auto ego = frame.center_cell();

  // Rectangular occluders on or beside the road, never on the ego cell.
  RasterGrid occupancy = frame.zero_grid();
  const int n_occ = opt.occluder_count
                        ? *opt.occluder_count
                        : static_cast<int>(rng.uniform_int(dp.occluders_min, dp.occluders_max));
  std::vector<std::pair<int, int>> road_cells;
  for (int r = 0; r < frame.grid_h; ++r)
    for (int c = 0; c < frame.grid_w; ++c)
      if (drivable(r, c) > 0.5) road_cells.emplace_back(r, c);
  if (road_cells.empty()) return false;
  int placed = 0;
  for (int i = 0; i < n_occ * 8 && placed < n_occ; ++i) {
    const auto [ar, ac] =
        road_cells[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(road_cells.size()) - 1))];
    const int r0 = ar + static_cast<int>(rng.uniform_int(-6, 6));
    const int c0 = ac + static_cast<int>(rng.uniform_int(-6, 6));
    const int rh = static_cast<int>(rng.uniform_int(2, 6));
    const int cw = static_cast<int>(rng.uniform_int(2, 6));
    if (r0 < 0 || c0 < 0 || r0 + rh > frame.grid_h || c0 + cw > frame.grid_w) continue;
    if (ego.first >= r0 - 1 && ego.first < r0 + rh + 1 && ego.second >= c0 - 1 &&
        ego.second < c0 + cw + 1)
      continue;  // keep the ego cell and its ring clear
    occupancy.block(r0, c0, rh, cw).setOnes();
    ++placed;
  }
  if (placed < n_occ) return false;
  if (occupancy(ego.first, ego.second) > 0.5) return false;

  // Dividers must stay on the drivable surface.
  for (const auto& el : gt.elements) {
    if (el.cls != MapClass::divider) continue;
    const RasterGrid cells = rasterize_polyline(el, frame);
    for (int r = 0; r < frame.grid_h; ++r)
      for (int c = 0; c < frame.grid_w; ++c)
        if (cells(r, c) > 0.5 && drivable(r, c) < 0.5) return false;
  }
  for (const auto& el : gt.elements) {
    if (el.size() < 2 || !el.points.allFinite()) return false;
    if (el.points.minCoeff() < 0.0 || el.points.maxCoeff() > 1.0) return false;
    if ((el.points.row(0) - el.points.row(el.size() - 1)).norm() <= 0.0) return false;
  }

  out.gt = std::move(gt);
  out.occupancy = std::move(occupancy);
  out.drivable = std::move(drivable);
  out.ego_cell = ego;
  out.seed = seed;
  out.difficulty = difficulty;
  out.frame = frame;
  return true;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, Difficulty difficulty, const MapFrame& frame,
                     const GeneratorOptions& options) {
  Scene scene;
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    if (try_generate(seed, difficulty, frame, options, attempt, scene)) return scene;
  }
  throw Error("generation failed");
}

ObservationGrid observe(const Scene& scene, std::uint64_t noise_seed,
                        const ObserveOptions& options) {
  const MapFrame& frame = scene.frame;
  const int hw = frame.grid_h * frame.grid_w;
  ObservationGrid obs;
  obs.grid_h = frame.grid_h;
  obs.grid_w = frame.grid_w;
  obs.noise_sigma = options.noise_sigma;
  obs.channels.setZero(kObsChannels, hw);

  const GaussianKernel kernel =
      make_gaussian_kernel(options.evidence_kernel_size, options.evidence_sigma);
  const VisibilityMask vis = ray_trace(scene.occupancy, scene.ego_cell);

  for (int cls = 0; cls < kNumClasses; ++cls) {
    RasterGrid raster = frame.zero_grid();
    for (const auto& el : scene.gt.elements)
      if (static_cast<int>(el.cls) == cls) rasterize_polyline_into(el, frame, raster);
    RasterGrid evidence = convolve_smooth(raster, kernel);
    for (int r = 0; r < frame.grid_h; ++r)
      for (int c = 0; c < frame.grid_w; ++c)
        obs.channels(cls, r * frame.grid_w + c) = vis.at(r, c) ? evidence(r, c) : 0.0;
  }
  if (options.include_occluder_channel) {
    for (int r = 0; r < frame.grid_h; ++r)
      for (int c = 0; c < frame.grid_w; ++c)
        obs.channels(kNumClasses, r * frame.grid_w + c) = scene.occupancy(r, c);
  }

  if (options.noise_sigma > 0.0) {
    Rng rng(derive_seed(noise_seed, 0x0b5e));
    for (int cls = 0; cls < kNumClasses; ++cls)
      for (int i = 0; i < hw; ++i)
        obs.channels(cls, i) += options.noise_sigma * rng.normal();
  }
  obs.channels = obs.channels.cwiseMax(-1.0).cwiseMin(2.0);
  return obs;
}

}  // namespace vecmap
