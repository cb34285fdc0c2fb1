#include "vecmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vecmap {

std::optional<double> ApResult::class_ap(MapClass c) const {
  const auto& row = ap[static_cast<std::size_t>(static_cast<int>(c))];
  double acc = 0.0;
  int n = 0;
  for (const auto& v : row) {
    if (!v) return std::nullopt;
    acc += *v;
    ++n;
  }
  return acc / n;
}

namespace {

struct ScoredPred {
  double score;
  int scene;
  int element;
};

}  // namespace

double average_precision(std::span<const VectorMap> preds, std::span<const VectorMap> gts,
                         MapClass cls, double threshold_m, const MapFrame& frame) {
  if (preds.size() != gts.size()) throw Error("prediction/GT scene count mismatch");
  const int n_scenes = static_cast<int>(gts.size());

  long total_gt = 0;
  std::vector<std::vector<int>> gt_index(static_cast<std::size_t>(n_scenes));
  for (int s = 0; s < n_scenes; ++s) {
    for (int e = 0; e < gts[static_cast<std::size_t>(s)].size(); ++e)
      if (gts[static_cast<std::size_t>(s)].elements[static_cast<std::size_t>(e)].cls == cls) {
        gt_index[static_cast<std::size_t>(s)].push_back(e);
        ++total_gt;
      }
  }
  if (total_gt == 0) throw Error("AP undefined: no GT instances of class");

  std::vector<ScoredPred> pool;
  for (int s = 0; s < n_scenes; ++s) {
    const auto& pm = preds[static_cast<std::size_t>(s)];
    if (!pm.has_scores()) throw Error("AP needs prediction scores");
    for (int e = 0; e < pm.size(); ++e)
      if (pm.elements[static_cast<std::size_t>(e)].cls == cls)
        pool.push_back({(*pm.scores)[static_cast<std::size_t>(e)], s, e});
  }
  if (pool.empty()) return 0.0;
  std::stable_sort(pool.begin(), pool.end(), [](const ScoredPred& a, const ScoredPred& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.element < b.element;
  });

  std::vector<std::set<int>> matched(static_cast<std::size_t>(n_scenes));
  std::vector<int> tp_flags;
  tp_flags.reserve(pool.size());
  for (const auto& p : pool) {
    const auto& pred_el =
        preds[static_cast<std::size_t>(p.scene)].elements[static_cast<std::size_t>(p.element)];
    double best = std::numeric_limits<double>::infinity();
    int best_gt = -1;
    for (int g : gt_index[static_cast<std::size_t>(p.scene)]) {
      if (matched[static_cast<std::size_t>(p.scene)].count(g)) continue;
      const double d = chamfer_distance(
          pred_el, gts[static_cast<std::size_t>(p.scene)].elements[static_cast<std::size_t>(g)],
          frame);
      if (d < best) {
        best = d;
        best_gt = g;
      }
    }
    if (best_gt >= 0 && best < threshold_m) {
      matched[static_cast<std::size_t>(p.scene)].insert(best_gt);
      tp_flags.push_back(1);
    } else {
      tp_flags.push_back(0);
    }
  }

  // All-point interpolation: area under the monotone precision envelope.
  const int n = static_cast<int>(tp_flags.size());
  std::vector<double> precision(static_cast<std::size_t>(n)), recall(static_cast<std::size_t>(n));
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    tp += tp_flags[static_cast<std::size_t>(i)];
    precision[static_cast<std::size_t>(i)] = static_cast<double>(tp) / (i + 1);
    recall[static_cast<std::size_t>(i)] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }
  for (int i = n - 2; i >= 0; --i)
    precision[static_cast<std::size_t>(i)] =
        std::max(precision[static_cast<std::size_t>(i)], precision[static_cast<std::size_t>(i + 1)]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (int i = 0; i < n; ++i) {
    ap += (recall[static_cast<std::size_t>(i)] - prev_recall) * precision[static_cast<std::size_t>(i)];
    prev_recall = recall[static_cast<std::size_t>(i)];
  }
  return ap;
}

ApResult evaluate_ap(std::span<const VectorMap> preds, std::span<const VectorMap> gts,
                     const MapFrame& frame) {
  ApResult res;
  double acc = 0.0;
  int count = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    for (std::size_t ti = 0; ti < kApThresholds.size(); ++ti) {
      try {
        const double ap =
            average_precision(preds, gts, static_cast<MapClass>(c), kApThresholds[ti], frame);
        res.ap[static_cast<std::size_t>(c)][ti] = ap;
        acc += ap;
        ++count;
      } catch (const Error&) {
        res.ap[static_cast<std::size_t>(c)][ti] = std::nullopt;
      }
    }
  }
  res.mAP = count > 0 ? acc / count : 0.0;
  return res;
}

std::vector<double> default_b_grid(int count) {
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / (count - 1);
  return grid;
}

namespace {

RocResult roc_impl(std::span<const ClassProbMap> ds, std::span<const VectorMap> gts,
                   const MapFrame& frame, std::span<const double> b_grid,
                   std::optional<MapClass> only_class) {
  if (ds.size() != gts.size()) throw Error("prediction/GT scene count mismatch");

  // Pool predicted probabilities split by GT label (width-1 raster, no
  // smoothing), micro-averaged over classes and scenes.
  std::vector<double> pos_vals, neg_vals;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    for (int c = 0; c < kNumClasses; ++c) {
      if (only_class && static_cast<int>(*only_class) != c) continue;
      RasterGrid gt_raster = frame.zero_grid();
      for (const auto& el : gts[s].elements)
        if (static_cast<int>(el.cls) == c) rasterize_polyline_into(el, frame, gt_raster);
      const RasterGrid& d = ds[s].prob[static_cast<std::size_t>(c)];
      for (int r = 0; r < frame.grid_h; ++r)
        for (int cc = 0; cc < frame.grid_w; ++cc)
          (gt_raster(r, cc) > 0.5 ? pos_vals : neg_vals).push_back(d(r, cc));
    }
  }
  if (pos_vals.empty() || neg_vals.empty()) throw Error("degenerate ROC");

  std::vector<double> grid(b_grid.begin(), b_grid.end());
  // Exactness on toy cases: include the distinct predicted values themselves.
  if (pos_vals.size() + neg_vals.size() <= 4096) {
    grid.insert(grid.end(), pos_vals.begin(), pos_vals.end());
    grid.insert(grid.end(), neg_vals.begin(), neg_vals.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::sort(pos_vals.begin(), pos_vals.end());
  std::sort(neg_vals.begin(), neg_vals.end());
  const auto count_ge = [](const std::vector<double>& v, double b) {
    return static_cast<long>(v.end() - std::lower_bound(v.begin(), v.end(), b));
  };

  RocResult res;
  res.positives = static_cast<long>(pos_vals.size());
  res.negatives = static_cast<long>(neg_vals.size());
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    RocPoint p;
    p.b = *it;
    p.tpr = static_cast<double>(count_ge(pos_vals, p.b)) / static_cast<double>(res.positives);
    p.fpr = static_cast<double>(count_ge(neg_vals, p.b)) / static_cast<double>(res.negatives);
    res.points.push_back(p);
  }

  // Trapezoid over FPR with the (0,0) and (1,1) endpoints appended.
  std::vector<std::pair<double, double>> xy;
  xy.emplace_back(0.0, 0.0);
  for (const auto& p : res.points) xy.emplace_back(p.fpr, p.tpr);
  xy.emplace_back(1.0, 1.0);
  std::sort(xy.begin(), xy.end());
  double auc = 0.0;
  for (std::size_t i = 1; i < xy.size(); ++i)
    auc += (xy[i].first - xy[i - 1].first) * 0.5 * (xy[i].second + xy[i - 1].second);
  res.auc = auc;
  return res;
}

}  // namespace

RocResult roc_curve(std::span<const ClassProbMap> ds, std::span<const VectorMap> gts,
                    const MapFrame& frame, std::span<const double> b_grid) {
  return roc_impl(ds, gts, frame, b_grid, std::nullopt);
}

RocResult roc_curve_class(std::span<const ClassProbMap> ds, std::span<const VectorMap> gts,
                          MapClass cls, const MapFrame& frame, std::span<const double> b_grid) {
  return roc_impl(ds, gts, frame, b_grid, cls);
}

}  // namespace vecmap
