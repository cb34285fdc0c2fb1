#include "vecmap/stats.hpp"

#include <cmath>
#include <limits>

#include "vecmap/geometry.hpp"

namespace vecmap::stats {

namespace {

// Lentz continued fraction for the incomplete beta (Numerical Recipes form).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double dof) {
  if (dof <= 0) throw Error("t-test needs positive dof");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = dof / (dof + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
  return t >= 0 ? half_tail : 1.0 - half_tail;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(n - 1);
}

TTestResult t_test_paired(std::span<const double> diffs) {
  const std::size_t n = diffs.size();
  if (n < 2) throw Error("paired t-test needs at least 2 samples");
  TTestResult r;
  r.dof = static_cast<double>(n - 1);
  const double m = mean(diffs);
  const double var = sample_variance(diffs);
  if (var <= 0.0) {
    // Degenerate zero-variance case: direction decides.
    r.t = m > 0   ? std::numeric_limits<double>::infinity()
          : m < 0 ? -std::numeric_limits<double>::infinity()
                  : 0.0;
    r.p = m > 0 ? 0.0 : (m < 0 ? 1.0 : 0.5);
    return r;
  }
  r.t = m / std::sqrt(var / static_cast<double>(n));
  r.p = student_t_sf(r.t, r.dof);
  return r;
}

TTestResult t_test_welch(std::span<const double> a, std::span<const double> b) {
  const std::size_t na = a.size(), nb = b.size();
  if (na < 2 || nb < 2) throw Error("two-sample t-test needs at least 2 samples per group");
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a) / static_cast<double>(na);
  const double vb = sample_variance(b) / static_cast<double>(nb);
  TTestResult r;
  if (va + vb <= 0.0) {
    const double d = ma - mb;
    r.dof = static_cast<double>(na + nb - 2);
    r.t = d > 0   ? std::numeric_limits<double>::infinity()
          : d < 0 ? -std::numeric_limits<double>::infinity()
                  : 0.0;
    r.p = d > 0 ? 0.0 : (d < 0 ? 1.0 : 0.5);
    return r;
  }
  r.t = (ma - mb) / std::sqrt(va + vb);
  const double na1 = static_cast<double>(na - 1), nb1 = static_cast<double>(nb - 1);
  r.dof = (va + vb) * (va + vb) / (va * va / na1 + vb * vb / nb1);
  r.p = student_t_sf(r.t, r.dof);
  return r;
}

}  // namespace vecmap::stats
