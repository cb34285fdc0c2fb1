#include <doctest.h>

#include <cmath>
#include <set>

#include "vecmap/geometry.hpp"
#include "vecmap/rng.hpp"

using namespace vecmap;

namespace {

PointMatrix points(std::initializer_list<std::pair<double, double>> pts) {
  PointMatrix m(static_cast<int>(pts.size()), 2);
  int i = 0;
  for (const auto& [x, y] : pts) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

// Independent arc-length walk used as the resampling oracle.
PointMatrix arc_walk(const PointMatrix& raw, int n_p) {
  std::vector<double> cum{0.0};
  for (int i = 1; i < raw.rows(); ++i)
    cum.push_back(cum.back() + (raw.row(i) - raw.row(i - 1)).norm());
  PointMatrix out(n_p, 2);
  for (int i = 0; i < n_p; ++i) {
    const double target = cum.back() * i / (n_p - 1);
    int seg = 0;
    while (seg + 2 < static_cast<int>(cum.size()) && cum[static_cast<std::size_t>(seg + 1)] < target)
      ++seg;
    const double len = cum[static_cast<std::size_t>(seg + 1)] - cum[static_cast<std::size_t>(seg)];
    const double a = len > 0 ? (target - cum[static_cast<std::size_t>(seg)]) / len : 0.0;
    out.row(i) = (1 - a) * raw.row(seg) + a * raw.row(seg + 1);
  }
  return out;
}

// Reference Bresenham used as the rasterization oracle.
std::set<std::pair<int, int>> bresenham_oracle(int r0, int c0, int r1, int c1) {
  std::set<std::pair<int, int>> cells;
  const int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
  const int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
  int err = dr - dc, r = r0, c = c0;
  while (true) {
    cells.insert({r, c});
    if (r == r1 && c == c1) break;
    const int e2 = 2 * err;
    if (e2 > -dc) { err -= dc; r += sr; }
    if (e2 < dr) { err += dr; c += sc; }
  }
  return cells;
}

}  // namespace

TEST_CASE("frame consistency and normalization round trip") {
  MapFrame f;
  CHECK(f.consistent());
  CHECK(f.x_span() == doctest::Approx(60.0));
  CHECK(f.y_span() == doctest::Approx(30.0));

  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(f.x_min, f.x_max);
    const double y = rng.uniform(f.y_min, f.y_max);
    const auto uv = f.normalize(x, y);
    const auto xy = f.denormalize(uv.x(), uv.y());
    CHECK(std::abs(xy.x() - x) < 1e-12);
    CHECK(std::abs(xy.y() - y) < 1e-12);
  }
}

TEST_CASE("cell mapping clamps out-of-range points to the border") {
  MapFrame f;
  CHECK(f.cell_of(0.0, 0.0) == std::pair<int, int>{0, 0});
  CHECK(f.cell_of(1.0, 1.0) == std::pair<int, int>{99, 49});
  CHECK(f.cell_of(-0.3, 0.5) == std::pair<int, int>{0, 25});
  CHECK(f.cell_of(2.0, -1.0) == std::pair<int, int>{99, 0});
}

TEST_CASE("resample straight segment") {
  const auto raw = points({{0, 0}, {0, 1}});
  const Polyline p = resample_polyline(raw, 3);
  CHECK(p.points(0, 0) == 0.0);
  CHECK(p.points(0, 1) == 0.0);
  CHECK(p.points(1, 1) == doctest::Approx(0.5));
  CHECK(p.points(2, 1) == 1.0);
}

TEST_CASE("resample of an already-uniform chain is the identity") {
  const auto raw = points({{0.1, 0.1}, {0.3, 0.1}, {0.5, 0.1}, {0.7, 0.1}});
  const Polyline p = resample_polyline(raw, 4);
  CHECK((p.points - raw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("resample right-angle chain against the arc-length oracle") {
  const auto raw = points({{0, 0}, {1, 0}, {1, 1}});
  const Polyline p = resample_polyline(raw, 5);
  const PointMatrix expect = arc_walk(raw, 5);
  CHECK((p.points - expect).cwiseAbs().maxCoeff() < 1e-12);
  // arc lengths {0, 0.5, 1, 1.5, 2}
  CHECK(p.points(1, 0) == doctest::Approx(0.5));
  CHECK(p.points(1, 1) == doctest::Approx(0.0));
  CHECK(p.points(2, 0) == doctest::Approx(1.0));
  CHECK(p.points(2, 1) == doctest::Approx(0.0));
  CHECK(p.points(3, 0) == doctest::Approx(1.0));
  CHECK(p.points(3, 1) == doctest::Approx(0.5));
}

TEST_CASE("resample random chains against the oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 12));
    PointMatrix raw(n, 2);
    for (int i = 0; i < n; ++i) {
      raw(i, 0) = rng.uniform();
      raw(i, 1) = rng.uniform();
    }
    const int n_p = static_cast<int>(rng.uniform_int(2, 15));
    const Polyline p = resample_polyline(raw, n_p);
    const PointMatrix expect = arc_walk(raw, n_p);
    CHECK((p.points - expect).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((p.points.row(0) - raw.row(0)).norm() == 0.0);
    CHECK((p.points.row(n_p - 1) - raw.row(n - 1)).norm() == 0.0);
  }
}

TEST_CASE("resample rejects degenerate input") {
  CHECK_THROWS_WITH_AS(resample_polyline(points({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}), 4),
                       "zero-length polyline", Error);
  CHECK_THROWS_AS(resample_polyline(points({{0.5, 0.5}}), 4), Error);
}

TEST_CASE("chamfer distance basics") {
  MapFrame f;
  Polyline a;
  a.points = points({{0.2, 0.4}, {0.5, 0.4}, {0.8, 0.4}});
  CHECK(chamfer_distance(a, a, f) == 0.0);

  // Two parallel 2-point lines offset 1.2 m laterally (0.04 in v).
  Polyline b1, b2;
  b1.points = points({{0.3, 0.5}, {0.7, 0.5}});
  b2.points = points({{0.3, 0.54}, {0.7, 0.54}});
  CHECK(chamfer_distance(b1, b2, f) == doctest::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("chamfer distance matches the exhaustive pairwise oracle") {
  MapFrame f;
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    Polyline a, b;
    const int na = static_cast<int>(rng.uniform_int(1, 8));
    const int nb = static_cast<int>(rng.uniform_int(1, 8));
    a.points.resize(na, 2);
    b.points.resize(nb, 2);
    for (int i = 0; i < na; ++i) { a.points(i, 0) = rng.uniform(); a.points(i, 1) = rng.uniform(); }
    for (int i = 0; i < nb; ++i) { b.points(i, 0) = rng.uniform(); b.points(i, 1) = rng.uniform(); }

    // Oracle: full distance matrix in meters.
    auto dist = [&](int i, int j) {
      const double dx = (a.points(i, 0) - b.points(j, 0)) * f.x_span();
      const double dy = (a.points(i, 1) - b.points(j, 1)) * f.y_span();
      return std::hypot(dx, dy);
    };
    double fwd = 0.0, bwd = 0.0;
    for (int i = 0; i < na; ++i) {
      double best = 1e300;
      for (int j = 0; j < nb; ++j) best = std::min(best, dist(i, j));
      fwd += best;
    }
    for (int j = 0; j < nb; ++j) {
      double best = 1e300;
      for (int i = 0; i < na; ++i) best = std::min(best, dist(i, j));
      bwd += best;
    }
    const double expect = 0.5 * (fwd / na + bwd / nb);
    CHECK(chamfer_distance(a, b, f) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(chamfer_distance(a, b, f) == doctest::Approx(chamfer_distance(b, a, f)).epsilon(1e-12));
    CHECK(chamfer_distance(a, b, f) >= 0.0);
  }
}

TEST_CASE("rasterize full-width horizontal line fills one row") {
  MapFrame f;
  Polyline p;
  p.points = points({{0.505, 0.0}, {0.505, 1.0}});
  const RasterGrid g = rasterize_polyline(p, f);
  CHECK(g.sum() == doctest::Approx(f.grid_w));
  CHECK(g.row(50).sum() == doctest::Approx(f.grid_w));
}

TEST_CASE("rasterize degenerate repeated point sets one cell") {
  MapFrame f;
  Polyline p;
  p.points = points({{0.505, 0.505}, {0.505, 0.505}});
  const RasterGrid g = rasterize_polyline(p, f);
  CHECK(g.sum() == doctest::Approx(1.0));
  CHECK(g(50, 25) == 1.0);
}

TEST_CASE("45-degree diagonal covers exactly the diagonal cells") {
  MapFrame f = make_toy_frame(10, 10);
  Polyline p;
  p.points = points({{0.05, 0.05}, {0.95, 0.95}});
  const RasterGrid g = rasterize_polyline(p, f);
  CHECK(g.sum() == doctest::Approx(10.0));
  const auto oracle = bresenham_oracle(0, 0, 9, 9);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) CHECK(g(r, c) == (oracle.count({r, c}) ? 1.0 : 0.0));
}

TEST_CASE("bresenham cells match the reference enumeration on random segments") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int r0 = static_cast<int>(rng.uniform_int(0, 19));
    const int c0 = static_cast<int>(rng.uniform_int(0, 19));
    const int r1 = static_cast<int>(rng.uniform_int(0, 19));
    const int c1 = static_cast<int>(rng.uniform_int(0, 19));
    const auto cells = bresenham_cells(r0, c0, r1, c1);
    const auto expect = bresenham_oracle(r0, c0, r1, c1);
    CHECK(cells.size() == expect.size());
    for (auto& rc : cells) CHECK(expect.count(rc) == 1);
  }
}

TEST_CASE("rasterizing a sub-chain sets a subset of cells") {
  MapFrame f;
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    PointMatrix raw(6, 2);
    for (int i = 0; i < 6; ++i) { raw(i, 0) = rng.uniform(); raw(i, 1) = rng.uniform(); }
    Polyline full, sub;
    full.points = raw;
    sub.points = raw.topRows(4);
    const RasterGrid gf = rasterize_polyline(full, f);
    const RasterGrid gs = rasterize_polyline(sub, f);
    for (int r = 0; r < f.grid_h; ++r)
      for (int c = 0; c < f.grid_w; ++c)
        if (gs(r, c) > 0) CHECK(gf(r, c) > 0);
  }
}

TEST_CASE("gaussian kernel invariants") {
  const GaussianKernel k = make_gaussian_kernel(5, 1.0);
  CHECK(k.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k.weights(2, 2) == doctest::Approx(0.16210282163712664).epsilon(1e-12));
  CHECK(k.weights(2, 2) == k.weights.maxCoeff());
  // symmetric under 90 degree rotation
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(k.weights(i, j) == doctest::Approx(k.weights(j, 4 - i)).epsilon(1e-12));
}

TEST_CASE("convolution: zero grid, impulse response, mass preservation") {
  const GaussianKernel k = make_gaussian_kernel(5, 1.0);
  RasterGrid zero = RasterGrid::Zero(20, 20);
  CHECK(convolve_smooth(zero, k).cwiseAbs().maxCoeff() == 0.0);

  RasterGrid impulse = RasterGrid::Zero(20, 20);
  impulse(10, 10) = 1.0;
  const RasterGrid out = convolve_smooth(impulse, k);
  CHECK(out(10, 10) == doctest::Approx(0.16210282163712664).epsilon(1e-12));
  for (int di = -2; di <= 2; ++di)
    for (int dj = -2; dj <= 2; ++dj)
      CHECK(out(10 + di, 10 + dj) == doctest::Approx(k.weights(di + 2, dj + 2)).epsilon(1e-12));
  CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-9));

  // interior-supported random mass is preserved
  Rng rng(3);
  RasterGrid r = RasterGrid::Zero(30, 30);
  for (int i = 5; i < 25; ++i)
    for (int j = 5; j < 25; ++j) r(i, j) = rng.uniform();
  CHECK(convolve_smooth(r, k).sum() == doctest::Approx(r.sum()).epsilon(1e-9));
}
