#include <doctest.h>

#include <cmath>

#include "test_oracles.hpp"
#include "vecmap/diffusion.hpp"
#include "vecmap/rng.hpp"
#include "vecmap/scene.hpp"
#include "vecmap/schedule.hpp"

using namespace vecmap;

TEST_CASE("cosine schedule invariants and spot value") {
  const NoiseSchedule s = build_cosine_schedule(1000);
  CHECK(s.alpha_bar(0) == 1.0);
  for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(1000) < 1e-3);
  // independent closed-form evaluation at t = 500
  const double ss = 0.008;
  auto f = [&](double t) {
    const double c = std::cos(((t / 1000.0 + ss) / (1.0 + ss)) * M_PI / 2.0);
    return c * c;
  };
  CHECK(std::abs(s.alpha_bar(500) - f(500) / f(0)) < 1e-12);
  CHECK(std::abs(s.alpha_bar(500) - 0.49384359044063775) < 1e-12);
}

TEST_CASE("schedule fingerprint is stable and distinguishes T") {
  const NoiseSchedule a = build_cosine_schedule(1000);
  const NoiseSchedule b = build_cosine_schedule(1000);
  const NoiseSchedule c = build_cosine_schedule(500);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("forward_q at t=0 is the identity, and is deterministic per seed") {
  const NoiseSchedule s = build_cosine_schedule(1000);
  Rng rng(3);
  PointMatrix x0(12, 2);
  for (int i = 0; i < 12; ++i) { x0(i, 0) = rng.uniform(-1, 1); x0(i, 1) = rng.uniform(-1, 1); }
  const PointMatrix xt0 = forward_q(x0, 0, s, 77);
  CHECK((xt0 - x0).cwiseAbs().maxCoeff() == 0.0);
  const PointMatrix a = forward_q(x0, 700, s, 1234);
  const PointMatrix b = forward_q(x0, 700, s, 1234);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - forward_q(x0, 700, s, 1235)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("forward_q at t=T matches standard normal moments") {
  const NoiseSchedule s = build_cosine_schedule(1000);
  const int draws = 10000;
  PointMatrix x0 = PointMatrix::Constant(draws, 2, 0.4);
  const PointMatrix xt = forward_q(x0, 1000, s, 99);
  const double n = 2.0 * draws;
  const double mean = xt.sum() / n;
  const double var = (xt.array() - mean).square().sum() / n;
  // 3 sigma Monte-Carlo bands: se(mean) ~ 1/sqrt(n), se(var) ~ sqrt(2/n)
  CHECK(std::abs(mean) < 3.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("pad_queries with a full GT set is exact and pads nothing") {
  const int n_p = 6, l = 3;
  VectorMap gt;
  Rng rng(5);
  for (int e = 0; e < l; ++e) {
    Polyline p;
    p.cls = static_cast<MapClass>(e % kNumClasses);
    p.points.resize(n_p, 2);
    for (int i = 0; i < n_p; ++i) { p.points(i, 0) = rng.uniform(); p.points(i, 1) = rng.uniform(); }
    gt.elements.push_back(p);
  }
  const QuerySet qs = pad_queries(gt, l, {}, 17, n_p);
  for (int q = 0; q < l; ++q) {
    CHECK(qs.origin[static_cast<std::size_t>(q)] == QueryOrigin::from_gt);
    CHECK(qs.class_targets[static_cast<std::size_t>(q)] ==
          static_cast<int>(gt.elements[static_cast<std::size_t>(q)].cls));
    const PointMatrix back = from_signal(qs.coords.block(q * n_p, 0, n_p, 2));
    CHECK((back - gt.elements[static_cast<std::size_t>(q)].points).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gaussian padding statistics match the clipped-normal oracle") {
  // Frozen oracle values for clip(N(0.5, 0.25), 0, 1): mean 0.5,
  // std 0.2398615 (analytic, confirmed by an independent Monte Carlo).
  PaddingStrategy strat;
  strat.kind = PaddingKind::gaussian;
  const int n_p = 10;
  VectorMap empty_gt;
  double sum = 0.0, sum2 = 0.0;
  long count = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const PointMatrix p = draw_padding(strat, empty_gt, 0, n_p, derive_seed(123, draw));
    for (int i = 0; i < n_p; ++i)
      for (int d = 0; d < 2; ++d) {
        CHECK(p(i, d) >= 0.0);
        CHECK(p(i, d) <= 1.0);
        sum += p(i, d);
        sum2 += p(i, d) * p(i, d);
        ++count;
      }
  }
  const double mean = sum / count;                      // 2e5 coordinates
  const double stddev = std::sqrt(sum2 / count - mean * mean);
  CHECK(std::abs(mean - 0.5) < 0.005);
  CHECK(std::abs(stddev - 0.2398615) < 0.004);
}

TEST_CASE("zero padding is one constant; repeat cycles the GT; overflow throws") {
  const int n_p = 4;
  VectorMap gt;
  Polyline p;
  p.cls = MapClass::boundary;
  p.points.setConstant(n_p, 2, 0.25);
  gt.elements.push_back(p);

  PaddingStrategy zero{PaddingKind::zero};
  const QuerySet qz = pad_queries(gt, 5, zero, 3, n_p);
  for (int q = 1; q < 5; ++q) {
    CHECK(qz.origin[static_cast<std::size_t>(q)] == QueryOrigin::padded);
    CHECK(qz.class_targets[static_cast<std::size_t>(q)] == kNoObjectClass);
    const PointMatrix back = from_signal(qz.coords.block(q * n_p, 0, n_p, 2));
    CHECK((back.array() - 0.5).abs().maxCoeff() < 1e-12);
  }

  PaddingStrategy rep{PaddingKind::repeat};
  const QuerySet qr = pad_queries(gt, 3, rep, 3, n_p);
  for (int q = 1; q < 3; ++q) {
    const PointMatrix back = from_signal(qr.coords.block(q * n_p, 0, n_p, 2));
    CHECK((back - p.points).cwiseAbs().maxCoeff() < 1e-12);
  }

  VectorMap big;
  for (int i = 0; i < 4; ++i) big.elements.push_back(p);
  CHECK_THROWS_WITH_AS(pad_queries(big, 3, zero, 1, n_p), "query overflow", Error);
}

TEST_CASE("smooth and uniform padding stay inside the unit square") {
  VectorMap empty_gt;
  for (PaddingKind kind : {PaddingKind::smooth, PaddingKind::uniform}) {
    PaddingStrategy s{kind};
    for (int draw = 0; draw < 50; ++draw) {
      const PointMatrix p = draw_padding(s, empty_gt, draw, 10, derive_seed(9, draw));
      CHECK(p.minCoeff() >= 0.0);
      CHECK(p.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("ddim step: deterministic limit and closed-form check") {
  const NoiseSchedule s = build_cosine_schedule(1000);
  Rng rng(31);
  PointMatrix x0(8, 2), xt(8, 2);
  for (int i = 0; i < 8; ++i)
    for (int d = 0; d < 2; ++d) { x0(i, d) = rng.uniform(-1, 1); xt(i, d) = rng.normal(); }

  // eta = 0, t_prev = 0 returns x0_hat exactly
  const PointMatrix out = ddim_step(xt, x0, 600, 0, 0.0, s, 1);
  CHECK((out - x0).cwiseAbs().maxCoeff() < 1e-12);

  // eta = 0 is independent of the noise seed
  const PointMatrix a = ddim_step(xt, x0, 600, 300, 0.0, s, 1);
  const PointMatrix b = ddim_step(xt, x0, 600, 300, 0.0, s, 999);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // scalar hand evaluation of the update formula
  const double ab_t = s.at(600), ab_p = s.at(300), eta = 0.7;
  const PointMatrix c = ddim_step(xt, x0, 600, 300, eta, s, 42);
  Rng noise(42);
  const double sigma = eta * std::sqrt((1 - ab_p) / (1 - ab_t)) * std::sqrt(1 - ab_t / ab_p);
  for (int i = 0; i < 8; ++i)
    for (int d = 0; d < 2; ++d) {
      const double eps_hat = (xt(i, d) - std::sqrt(ab_t) * x0(i, d)) / std::sqrt(1 - ab_t);
      const double expect = std::sqrt(ab_p) * x0(i, d) +
                            std::sqrt(1 - ab_p - sigma * sigma) * eps_hat +
                            sigma * noise.normal();
      CHECK(std::abs(c(i, d) - expect) < 1e-12);
    }

  CHECK_THROWS_WITH_AS(ddim_step(xt, x0, 0, 0, 0.0, s, 1), "invalid step pair", Error);
  CHECK_THROWS_AS(ddim_step(xt, x0, 300, 600, 0.0, s, 1), Error);
}

TEST_CASE("noised state plus exact-x0 eta=0 chain reconstructs x0") {
  const NoiseSchedule s = build_cosine_schedule(1000);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    PointMatrix x0(10, 2);
    for (int i = 0; i < 10; ++i)
      for (int d = 0; d < 2; ++d) x0(i, d) = rng.uniform(-1, 1);
    PointMatrix x = forward_q(x0, 1000, s, derive_seed(50, trial));
    const int k = 8;
    for (int j = 0; j < k; ++j) {
      const int t = static_cast<int>(std::llround(1000.0 * (k - j) / k));
      const int t_prev = static_cast<int>(std::llround(1000.0 * (k - j - 1) / k));
      x = ddim_step(x, x0, t, t_prev, 0.0, s, 0);
    }
    CHECK((x - x0).cwiseAbs().maxCoeff() < 1e-6);
  }
}

namespace {

LatentGrid dummy_latent(const MapFrame& f) {
  LatentGrid g;
  g.grid_h = f.grid_h;
  g.grid_w = f.grid_w;
  g.features = Eigen::MatrixXd::Zero(4, f.grid_h * f.grid_w);
  return g;
}

}  // namespace

TEST_CASE("sample_map with the GT oracle reconstructs GT for k in {1,5,50}") {
  const NoiseSchedule sched = build_cosine_schedule(1000);
  for (int k : {1, 5, 50}) {
    const Scene scene = generate_scene(900 + k, Difficulty::medium);
    const testing::GtOracleDenoiser oracle(scene.gt, 20, 10);
    SamplerConfig cfg;
    cfg.k = k;
    cfg.eta = 0.0;
    const VectorMap out =
        sample_map(oracle, dummy_latent(scene.frame), cfg, sched, 7);
    REQUIRE(out.size() == scene.gt.size());
    for (int e = 0; e < out.size(); ++e) {
      CHECK(out.elements[static_cast<std::size_t>(e)].cls ==
            scene.gt.elements[static_cast<std::size_t>(e)].cls);
      CHECK((out.elements[static_cast<std::size_t>(e)].points -
             scene.gt.elements[static_cast<std::size_t>(e)].points)
                .cwiseAbs()
                .maxCoeff() < 1e-6);
      CHECK((*out.scores)[static_cast<std::size_t>(e)] > 0.99);
    }
  }
}

TEST_CASE("k=1 is a single denoiser call; high tau with confident scores never redraws") {
  const NoiseSchedule sched = build_cosine_schedule(1000);
  const Scene scene = generate_scene(321, Difficulty::easy);
  const testing::GtOracleDenoiser oracle(scene.gt, 20, 10);

  SamplerConfig cfg;
  cfg.k = 1;
  cfg.eta = 0.0;
  SampleStats stats;
  sample_map(oracle, dummy_latent(scene.frame), cfg, sched, 3, &stats);
  CHECK(stats.denoiser_calls == 1);
  CHECK(stats.timesteps == std::vector<int>{1000});
  CHECK(stats.redraws == 0);

  // oracle scores are ~1.0 for GT queries, ~0 for padding: with tau = 0.99
  // only the padded queries restart.
  cfg.k = 5;
  cfg.tau = 0.99;
  SampleStats stats5;
  sample_map(oracle, dummy_latent(scene.frame), cfg, sched, 3, &stats5);
  CHECK(stats5.denoiser_calls == 5);
  CHECK(stats5.redraws == 4 * (20 - scene.gt.size()));
}

TEST_CASE("sample_map is bit-reproducible and eta=0 output ignores the seed given fixed x_T") {
  const NoiseSchedule sched = build_cosine_schedule(1000);
  const Scene scene = generate_scene(555, Difficulty::medium);
  const testing::GtOracleDenoiser oracle(scene.gt, 20, 10);
  const LatentGrid cond = dummy_latent(scene.frame);

  SamplerConfig cfg;
  cfg.eta = 0.5;
  const VectorMap a = sample_map(oracle, cond, cfg, sched, 1111);
  const VectorMap b = sample_map(oracle, cond, cfg, sched, 1111);
  REQUIRE(a.size() == b.size());
  for (int e = 0; e < a.size(); ++e)
    CHECK((a.elements[static_cast<std::size_t>(e)].points -
           b.elements[static_cast<std::size_t>(e)].points)
              .cwiseAbs()
              .maxCoeff() == 0.0);

  cfg.eta = 0.0;
  PointMatrix x_T(20 * 10, 2);
  Rng rng(9);
  for (int i = 0; i < x_T.rows(); ++i)
    for (int d = 0; d < 2; ++d) x_T(i, d) = rng.normal();
  const VectorMap c = sample_map_from(x_T, oracle, cond, cfg, sched, 1);
  const VectorMap d = sample_map_from(x_T, oracle, cond, cfg, sched, 2);
  REQUIRE(c.size() == d.size());
  for (int e = 0; e < c.size(); ++e)
    CHECK((c.elements[static_cast<std::size_t>(e)].points -
           d.elements[static_cast<std::size_t>(e)].points)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(1000), Error);
  cfg = {};
  cfg.eta = 1.5;
  CHECK_THROWS_AS(cfg.validate(1000), Error);
  cfg = {};
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(1000), Error);
  cfg = {};
  CHECK_NOTHROW(cfg.validate(1000));
}
