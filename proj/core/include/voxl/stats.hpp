#pragma once

#include <span>

namespace voxl {

// Regularized incomplete beta I_x(a, b) by Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
  double mean_diff = 0.0;
};

// Two-sided paired t-test on d_i = a_i - b_i. Zero-variance differences
// give (t = 0, p = 1) when the mean is 0 and (t = +-inf, p = 0) otherwise.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> xs);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_stddev(std::span<const double> xs);

}  // namespace voxl
