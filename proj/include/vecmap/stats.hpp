#pragma once

#include <cstddef>
#include <span>

namespace vecmap::stats {

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation, absolute accuracy ~1e-10 on the t-test range used here.
double incomplete_beta(double a, double b, double x);

// One-sided upper tail P(T > t) of Student's t with dof degrees of freedom.
double student_t_sf(double t, double dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // one-sided, H1: mean > 0 (paired) / mean_a > mean_b (two-sample)
  double dof = 0.0;
};

// Paired one-sided test on per-sample differences, H1: E[d] > 0.
TTestResult t_test_paired(std::span<const double> diffs);

// Welch two-sample one-sided test, H1: E[a] > E[b].
TTestResult t_test_welch(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
double sample_variance(std::span<const double> v);  // divide by n-1

}  // namespace vecmap::stats
