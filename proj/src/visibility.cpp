#include "vecmap/visibility.hpp"

#include <cmath>
#include <cstdlib>

namespace vecmap {

namespace {

inline bool occupied(const RasterGrid& g, int r, int c) { return g(r, c) > 0.5; }

// Walks every cell whose interior the open segment between the two cell
// centers crosses. All comparisons are exact: with centers at half-integer
// coordinates the crossing parameters are ratios of small integers.
bool segment_clear(const RasterGrid& occ, int r0, int c0, int r1, int c1) {
  const int dr = r1 - r0;
  const int dc = c1 - c0;
  if (dr == 0 && dc == 0) return true;
  const int sr = dr > 0 ? 1 : -1;
  const int sc = dc > 0 ? 1 : -1;
  // Scaled coordinates: centers at odd integers, cell borders at even ones.
  const std::int64_t adr = std::abs(dr), adc = std::abs(dc);
  int r = r0, c = c0;
  std::int64_t steps_r = 0, steps_c = 0;
  while (r != r1 || c != c1) {
    // Param of next row/col border along the ray: t_r = (2*steps_r + 1) / (2*adr)
    // and likewise for columns; compare via cross multiplication.
    const bool has_r = steps_r < adr;
    const bool has_c = steps_c < adc;
    std::int64_t lhs = 0, rhs = 0;
    if (has_r && has_c) {
      lhs = (2 * steps_r + 1) * (2 * adc);
      rhs = (2 * steps_c + 1) * (2 * adr);
    }
    if (has_r && (!has_c || lhs < rhs)) {
      r += sr;
      ++steps_r;
    } else if (has_c && (!has_r || rhs < lhs)) {
      c += sc;
      ++steps_c;
    } else {
      // Exact corner crossing: step diagonally.
      r += sr;
      c += sc;
      ++steps_r;
      ++steps_c;
    }
    if (r == r1 && c == c1) break;
    if (occupied(occ, r, c)) return false;
  }
  return true;
}

}  // namespace

VisibilityMask ray_trace(const RasterGrid& occupancy, std::pair<int, int> ego) {
  const int h = static_cast<int>(occupancy.rows());
  const int w = static_cast<int>(occupancy.cols());
  const auto [er, ec] = ego;
  if (er < 0 || er >= h || ec < 0 || ec >= w) throw Error("ego cell outside grid");
  if (occupied(occupancy, er, ec)) throw Error("ego cell occupied");

  VisibilityMask mask;
  mask.ego_cell = ego;
  mask.visible.setZero(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      mask.visible(r, c) = segment_clear(occupancy, er, ec, r, c) ? 1 : 0;
  return mask;
}

VisibilityStats compare_uncertainty(const std::vector<SceneVisibilityInput>& scenes,
                                    bool paired) {
  if (scenes.size() < 2) throw Error("compare_uncertainty needs at least 2 scenes");
  VisibilityStats out;
  out.paired = paired;
  std::vector<double> means_vis, means_inv, diffs;
  for (const auto& s : scenes) {
    const RasterGrid& u = *s.uncertainty;
    const auto& vis = s.mask->visible;
    const RasterGrid& driv = *s.drivable;
    VisibilityStats::Row row;
    row.scene_id = s.scene_id;
    double sum_vis = 0.0, sum_inv = 0.0;
    for (int r = 0; r < u.rows(); ++r) {
      for (int c = 0; c < u.cols(); ++c) {
        const bool v = vis(r, c) != 0;
        const bool in_universe = v || driv(r, c) > 0.5;
        if (!in_universe) continue;
        if (v) {
          sum_vis += u(r, c);
          ++row.n_visible;
        } else {
          sum_inv += u(r, c);
          ++row.n_invisible;
        }
      }
    }
    row.used = row.n_visible > 0 && row.n_invisible > 0;
    if (row.used) {
      row.mean_visible = sum_vis / row.n_visible;
      row.mean_invisible = sum_inv / row.n_invisible;
      means_vis.push_back(row.mean_visible);
      means_inv.push_back(row.mean_invisible);
      diffs.push_back(row.mean_invisible - row.mean_visible);
      ++out.n_used;
    } else {
      ++out.n_skipped;
    }
    out.rows.push_back(row);
  }
  if (out.n_used < 2) throw Error("no valid scenes");

  out.grand_mean_visible = stats::mean(means_vis);
  out.grand_mean_invisible = stats::mean(means_inv);
  out.ratio = out.grand_mean_visible > 0
                  ? out.grand_mean_invisible / out.grand_mean_visible
                  : std::numeric_limits<double>::quiet_NaN();
  const auto test = paired ? stats::t_test_paired(diffs)
                           : stats::t_test_welch(means_inv, means_vis);
  out.t_stat = test.t;
  out.p_value = test.p;
  return out;
}

}  // namespace vecmap
