#pragma once

#include <cstddef>
#include <vector>

namespace cavprobe::stats {

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// CDF of Student's t with df degrees of freedom. Finite for all finite x.
double student_t_cdf(double x, std::size_t df);

// Inverse of student_t_cdf in x for prob in (0, 1), by bisection to ~1e-12.
double student_t_quantile(double prob, std::size_t df);

// Standard normal CDF (erf identity); used for large-df cross-checks.
double normal_cdf(double x);

struct TTestOutcome {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample, n-1 denominator
  double t_statistic = 0.0;
  std::size_t degrees_of_freedom = 0;
  double p_two_sided = 1.0;
  bool degenerate = false;  // zero-variance input
};

// Two-sided one-sample t-test of mean(scores) against mu0.
// Zero variance: p = 1 when mean == mu0, otherwise t = +-inf and p = 0,
// both flagged degenerate. Throws TooFewSamples for n < 2.
TTestOutcome one_sample_t_test(const std::vector<double>& scores, double mu0 = 0.5);

// min(1, p * m)
double bonferroni(double p_raw, std::size_t m);

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool degenerate = false;  // zero variance, collapses to a point
};

// mean +- t_{1-alpha/(2m), n-1} * std/sqrt(n)
Interval corrected_ci(const std::vector<double>& scores, double alpha, std::size_t m);

double mean_of(const std::vector<double>& xs);
double sample_stddev(const std::vector<double>& xs);

}  // namespace cavprobe::stats
