#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "vecmap/metrics.hpp"
#include "vecmap/rng.hpp"
#include "vecmap/scene.hpp"

using namespace vecmap;

namespace {

Polyline jitter(const Polyline& p, Rng& rng, double amount) {
  Polyline out = p;
  for (int i = 0; i < out.size(); ++i) {
    out.points(i, 0) += rng.uniform(-amount, amount);
    out.points(i, 1) += rng.uniform(-amount, amount);
  }
  return out;
}

// Independent greedy matcher: distance matrices computed up front, explicit
// precision envelope scan.
double ap_oracle(const std::vector<VectorMap>& preds, const std::vector<VectorMap>& gts,
                 MapClass cls, double thr, const MapFrame& frame) {
  struct Entry {
    double score;
    int scene, el;
  };
  std::vector<Entry> entries;
  long total_gt = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    for (int e = 0; e < preds[s].size(); ++e)
      if (preds[s].elements[static_cast<std::size_t>(e)].cls == cls)
        entries.push_back({(*preds[s].scores)[static_cast<std::size_t>(e)],
                           static_cast<int>(s), e});
    for (const auto& g : gts[s].elements)
      if (g.cls == cls) ++total_gt;
  }
  if (total_gt == 0) throw Error("no gt");
  if (entries.empty()) return 0.0;
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.el < b.el;
  });
  std::map<std::pair<int, int>, bool> taken;
  std::vector<int> is_tp;
  for (const auto& en : entries) {
    const auto& pe = preds[static_cast<std::size_t>(en.scene)].elements[static_cast<std::size_t>(en.el)];
    double best = 1e300;
    int best_g = -1;
    for (int g = 0; g < gts[static_cast<std::size_t>(en.scene)].size(); ++g) {
      const auto& ge = gts[static_cast<std::size_t>(en.scene)].elements[static_cast<std::size_t>(g)];
      if (ge.cls != cls || taken[{en.scene, g}]) continue;
      const double d = chamfer_distance(pe, ge, frame);
      if (d < best) {
        best = d;
        best_g = g;
      }
    }
    const bool tp = best_g >= 0 && best < thr;
    if (tp) taken[{en.scene, best_g}] = true;
    is_tp.push_back(tp ? 1 : 0);
  }
  double ap = 0.0;
  int tp_count = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < is_tp.size(); ++i) {
    tp_count += is_tp[i];
    const double recall = static_cast<double>(tp_count) / static_cast<double>(total_gt);
    if (recall <= prev_recall) continue;
    // precision envelope: best precision at any rank >= i
    double best_prec = 0.0;
    int tp2 = 0;
    for (std::size_t j = 0; j < is_tp.size(); ++j) {
      tp2 += is_tp[j];
      if (j >= i) best_prec = std::max(best_prec, static_cast<double>(tp2) / (static_cast<double>(j) + 1.0));
    }
    ap += (recall - prev_recall) * best_prec;
    prev_recall = recall;
  }
  return ap;
}

// Mann-Whitney AUC with midranks; equals trapezoid AUC over the exact ROC.
double mann_whitney_auc(std::vector<double> pos, std::vector<double> neg) {
  std::vector<std::pair<double, int>> all;  // (value, is_positive)
  for (double v : pos) all.emplace_back(v, 1);
  for (double v : neg) all.emplace_back(v, 0);
  std::sort(all.begin(), all.end());
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum_pos += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  return (rank_sum_pos - p * (p + 1) / 2.0) / (p * n);
}

std::vector<VectorMap> as_scored(const std::vector<VectorMap>& gts, double score) {
  std::vector<VectorMap> out = gts;
  for (auto& vm : out) vm.scores = std::vector<double>(static_cast<std::size_t>(vm.size()), score);
  return out;
}

}  // namespace

TEST_CASE("GT as prediction scores AP = 1 at every threshold") {
  std::vector<VectorMap> gts;
  for (std::uint64_t seed = 60; seed < 66; ++seed)
    gts.push_back(generate_scene(seed, Difficulty::medium).gt);
  const std::vector<VectorMap> preds = as_scored(gts, 1.0);
  const MapFrame frame;
  const ApResult r = evaluate_ap(preds, gts, frame);
  CHECK(r.mAP == doctest::Approx(1.0));
  for (int c = 0; c < kNumClasses; ++c) {
    const auto ap = r.class_ap(static_cast<MapClass>(c));
    if (ap) CHECK(*ap == doctest::Approx(1.0));
  }
}

TEST_CASE("no predictions means zero AP") {
  std::vector<VectorMap> gts{generate_scene(70, Difficulty::medium).gt};
  VectorMap empty;
  empty.scores.emplace();
  const std::vector<VectorMap> preds{empty};
  const MapFrame frame;
  CHECK(average_precision(preds, gts, MapClass::boundary, 1.0, frame) == 0.0);
}

TEST_CASE("AP undefined without GT instances of the class") {
  VectorMap gt;  // only a boundary
  Polyline p;
  p.cls = MapClass::boundary;
  p.points.resize(2, 2);
  p.points << 0.2, 0.5, 0.8, 0.5;
  gt.elements.push_back(p);
  const std::vector<VectorMap> gts{gt};
  const std::vector<VectorMap> preds = as_scored(gts, 1.0);
  const MapFrame frame;
  CHECK_THROWS_AS(average_precision(preds, gts, MapClass::divider, 1.0, frame), Error);
  const ApResult r = evaluate_ap(preds, gts, frame);
  CHECK_FALSE(r.class_ap(MapClass::divider).has_value());
  CHECK(r.class_ap(MapClass::boundary).has_value());
  CHECK(r.mAP == doctest::Approx(1.0));  // mean over defined cells only
}

TEST_CASE("hand-built 3-scene match pattern equals the brute-force matcher") {
  const MapFrame frame;
  Rng rng(808);
  std::vector<VectorMap> gts, preds;
  for (int s = 0; s < 3; ++s) {
    gts.push_back(generate_scene(static_cast<std::uint64_t>(500 + s), Difficulty::medium).gt);
    VectorMap pred;
    pred.scores.emplace();
    for (const auto& el : gts.back().elements) {
      // close copy (likely TP), far copy (FP), random scores
      pred.elements.push_back(jitter(el, rng, 0.005));
      pred.scores->push_back(rng.uniform(0.4, 1.0));
      if (rng.bernoulli(0.5)) {
        pred.elements.push_back(jitter(el, rng, 0.15));
        pred.scores->push_back(rng.uniform(0.1, 0.9));
      }
    }
    preds.push_back(std::move(pred));
  }
  for (double thr : kApThresholds) {
    for (int c = 0; c < kNumClasses; ++c) {
      const auto cls = static_cast<MapClass>(c);
      bool has_gt = false;
      for (const auto& g : gts)
        for (const auto& el : g.elements) has_gt = has_gt || el.cls == cls;
      if (!has_gt) continue;
      const double got = average_precision(preds, gts, cls, thr, frame);
      const double expect = ap_oracle(preds, gts, cls, thr, frame);
      CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("AP is monotone over the threshold ladder and invariant to score scaling") {
  const MapFrame frame;
  Rng rng(31337);
  std::vector<VectorMap> gts, preds;
  for (int s = 0; s < 5; ++s) {
    gts.push_back(generate_scene(static_cast<std::uint64_t>(700 + s), Difficulty::medium).gt);
    VectorMap pred;
    pred.scores.emplace();
    for (const auto& el : gts.back().elements) {
      pred.elements.push_back(jitter(el, rng, rng.uniform(0.0, 0.03)));
      pred.scores->push_back(rng.uniform(0.05, 1.0));
    }
    preds.push_back(std::move(pred));
  }
  const ApResult r = evaluate_ap(preds, gts, frame);
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& row = r.ap[static_cast<std::size_t>(c)];
    if (!row[0]) continue;
    CHECK(*row[0] <= *row[1] + 1e-12);
    CHECK(*row[1] <= *row[2] + 1e-12);
  }

  std::vector<VectorMap> scaled = preds;
  for (auto& vm : scaled)
    for (auto& s : *vm.scores) s *= 0.37;
  for (double thr : kApThresholds)
    CHECK(average_precision(preds, gts, MapClass::boundary, thr, frame) ==
          doctest::Approx(average_precision(scaled, gts, MapClass::boundary, thr, frame))
              .epsilon(1e-12));
}

namespace {

ClassProbMap prob_from_gt(const VectorMap& gt, const MapFrame& frame) {
  ClassProbMap d;
  for (int c = 0; c < kNumClasses; ++c) {
    RasterGrid g = frame.zero_grid();
    for (const auto& el : gt.elements)
      if (static_cast<int>(el.cls) == c) rasterize_polyline_into(el, frame, g);
    d.prob[static_cast<std::size_t>(c)] = g;
  }
  return d;
}

}  // namespace

TEST_CASE("ROC: perfect probabilities give AUC 1, random give 0.5") {
  const MapFrame frame;
  std::vector<VectorMap> gts;
  std::vector<ClassProbMap> perfect, random_d;
  Rng rng(12);
  for (std::uint64_t seed = 80; seed < 90; ++seed) {
    gts.push_back(generate_scene(seed, Difficulty::medium).gt);
    perfect.push_back(prob_from_gt(gts.back(), frame));
    ClassProbMap rd;
    for (auto& g : rd.prob) {
      g.resize(frame.grid_h, frame.grid_w);
      for (int r = 0; r < frame.grid_h; ++r)
        for (int c = 0; c < frame.grid_w; ++c) g(r, c) = rng.uniform();
    }
    random_d.push_back(std::move(rd));
  }
  const auto grid = default_b_grid();
  const RocResult perfect_roc = roc_curve(perfect, gts, frame, grid);
  CHECK(perfect_roc.auc == doctest::Approx(1.0).epsilon(1e-9));
  const RocResult random_roc = roc_curve(random_d, gts, frame, grid);
  CHECK(random_roc.auc == doctest::Approx(0.5).epsilon(0.04));
  CHECK(random_roc.auc >= 0.0);
  CHECK(random_roc.auc <= 1.0);
}

TEST_CASE("ROC points are monotone in b and include both endpoints") {
  const MapFrame frame = make_toy_frame(12, 12);
  Rng rng(9);
  std::vector<VectorMap> gts{generate_scene(91, Difficulty::medium, frame).gt};
  std::vector<ClassProbMap> ds;
  ClassProbMap d;
  for (auto& g : d.prob) {
    g.resize(12, 12);
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 12; ++c) g(r, c) = rng.uniform();
  }
  ds.push_back(std::move(d));
  const auto grid = default_b_grid();
  const RocResult roc = roc_curve(ds, gts, frame, grid);
  // points ordered by descending b: TPR and FPR are non-decreasing along the
  // list, i.e. non-increasing in b
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].b < roc.points[i - 1].b);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
  }
  CHECK(roc.points.back().b == 0.0);
  CHECK(roc.points.back().tpr == 1.0);
  CHECK(roc.points.back().fpr == 1.0);
}

TEST_CASE("ROC AUC equals the Mann-Whitney statistic on small grids") {
  const MapFrame frame = make_toy_frame(10, 10);
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<VectorMap> gts{
        generate_scene(static_cast<std::uint64_t>(200 + trial), Difficulty::medium, frame).gt};
    ClassProbMap d;
    for (auto& g : d.prob) {
      g.resize(10, 10);
      for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) g(r, c) = rng.uniform_int(0, 9) / 9.0;  // force ties
    }
    std::vector<ClassProbMap> ds{d};

    std::vector<double> pos, neg;
    for (int c = 0; c < kNumClasses; ++c) {
      RasterGrid raster = frame.zero_grid();
      for (const auto& el : gts[0].elements)
        if (static_cast<int>(el.cls) == c) rasterize_polyline_into(el, frame, raster);
      for (int r = 0; r < 10; ++r)
        for (int cc = 0; cc < 10; ++cc)
          (raster(r, cc) > 0.5 ? pos : neg)
              .push_back(d.prob[static_cast<std::size_t>(c)](r, cc));
    }
    const auto grid = default_b_grid();
    const RocResult roc = roc_curve(ds, gts, frame, grid);
    CHECK(roc.auc == doctest::Approx(mann_whitney_auc(pos, neg)).epsilon(1e-10));
  }
}

TEST_CASE("degenerate ROC inputs raise") {
  const MapFrame frame = make_toy_frame(6, 6);
  VectorMap empty_gt;
  std::vector<VectorMap> gts{empty_gt};  // no positives anywhere
  ClassProbMap d;
  for (auto& g : d.prob) g = RasterGrid::Constant(6, 6, 0.5);
  std::vector<ClassProbMap> ds{d};
  const auto grid = default_b_grid();
  CHECK_THROWS_WITH_AS(roc_curve(ds, gts, frame, grid), "degenerate ROC", Error);
}

TEST_CASE("micro pooling is the contract and differs from per-scene macro averaging") {
  const MapFrame frame = make_toy_frame(10, 10);
  // Scene A: tiny positive set, perfectly ranked. Scene B: large positive
  // set, inverted ranking. Micro pooling weights B's pixels far more.
  VectorMap gt_a, gt_b;
  Polyline pa;
  pa.cls = MapClass::divider;
  pa.points.resize(2, 2);
  pa.points << 0.05, 0.05, 0.05, 0.25;  // 3 cells
  gt_a.elements.push_back(pa);
  Polyline pb;
  pb.cls = MapClass::divider;
  pb.points.resize(2, 2);
  pb.points << 0.05, 0.05, 0.05, 0.95;  // full row
  gt_b.elements.push_back(pb);

  auto build_d = [&](const VectorMap& gt, bool inverted) {
    ClassProbMap d;
    for (int c = 0; c < kNumClasses; ++c) {
      RasterGrid raster = frame.zero_grid();
      for (const auto& el : gt.elements)
        if (static_cast<int>(el.cls) == c) rasterize_polyline_into(el, frame, raster);
      d.prob[static_cast<std::size_t>(c)] =
          inverted ? (1.0 - raster.array()).matrix() : raster;
    }
    return d;
  };
  std::vector<VectorMap> gts{gt_a, gt_b};
  std::vector<ClassProbMap> ds{build_d(gt_a, false), build_d(gt_b, true)};
  const auto grid = default_b_grid();
  const RocResult micro = roc_curve(ds, gts, frame, grid);

  const std::vector<VectorMap> ga{gt_a}, gb{gt_b};
  const std::vector<ClassProbMap> da{ds[0]}, db{ds[1]};
  const double macro =
      0.5 * (roc_curve(da, ga, frame, grid).auc + roc_curve(db, gb, frame, grid).auc);
  CHECK(std::abs(micro.auc - macro) > 0.05);

  // micro value equals the pooled Mann-Whitney computation
  std::vector<double> pos, neg;
  for (std::size_t s = 0; s < gts.size(); ++s)
    for (int c = 0; c < kNumClasses; ++c) {
      RasterGrid raster = frame.zero_grid();
      for (const auto& el : gts[s].elements)
        if (static_cast<int>(el.cls) == c) rasterize_polyline_into(el, frame, raster);
      for (int r = 0; r < 10; ++r)
        for (int cc = 0; cc < 10; ++cc)
          (raster(r, cc) > 0.5 ? pos : neg)
              .push_back(ds[s].prob[static_cast<std::size_t>(c)](r, cc));
    }
  CHECK(micro.auc == doctest::Approx(mann_whitney_auc(pos, neg)).epsilon(1e-10));
}
