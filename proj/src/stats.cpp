#include "cavprobe/stats.hpp"

#include <cmath>
#include <limits>

#include "cavprobe/errors.hpp"

namespace cavprobe::stats {

namespace {

// Continued fraction for the incomplete beta, modified Lentz algorithm.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 500;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double x, std::size_t df) {
  const double v = static_cast<double>(df);
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  if (x == 0.0) return 0.5;
  const double ib = regularized_incomplete_beta(v / 2.0, 0.5, v / (v + x * x));
  return x > 0 ? 1.0 - ib / 2.0 : ib / 2.0;
}

double student_t_quantile(double prob, std::size_t df) {
  if (!(prob > 0.0 && prob < 1.0)) {
    raise(ErrorCode::invalid_config, "quantile probability must lie in (0,1)");
  }
  if (prob == 0.5) return 0.0;
  // Symmetry keeps the bracket on one side.
  if (prob < 0.5) return -student_t_quantile(1.0 - prob, df);
  double lo = 0.0;
  double hi = 1.0;
  while (student_t_cdf(hi, df) < prob) {
    hi *= 2.0;
    if (hi > 1e300) break;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < prob) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-12 * std::max(1.0, std::fabs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_stddev(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

TTestOutcome one_sample_t_test(const std::vector<double>& scores, double mu0) {
  if (scores.size() < 2) {
    raise(ErrorCode::too_few_samples, "t-test needs at least 2 scores, got " + std::to_string(scores.size()));
  }
  TTestOutcome out;
  out.n = scores.size();
  out.degrees_of_freedom = out.n - 1;
  out.mean = mean_of(scores);
  out.stddev = sample_stddev(scores);
  if (out.stddev == 0.0) {
    out.degenerate = true;
    if (out.mean == mu0) {
      out.t_statistic = 0.0;
      out.p_two_sided = 1.0;
    } else {
      out.t_statistic = out.mean > mu0 ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
      out.p_two_sided = 0.0;
    }
    return out;
  }
  out.t_statistic = (out.mean - mu0) / (out.stddev / std::sqrt(static_cast<double>(out.n)));
  out.p_two_sided = 2.0 * (1.0 - student_t_cdf(std::fabs(out.t_statistic), out.degrees_of_freedom));
  if (out.p_two_sided < 0.0) out.p_two_sided = 0.0;
  if (out.p_two_sided > 1.0) out.p_two_sided = 1.0;
  return out;
}

double bonferroni(double p_raw, std::size_t m) {
  const double p = p_raw * static_cast<double>(m);
  return p < 1.0 ? p : 1.0;
}

Interval corrected_ci(const std::vector<double>& scores, double alpha, std::size_t m) {
  if (scores.size() < 2) {
    raise(ErrorCode::too_few_samples, "confidence interval needs at least 2 scores");
  }
  if (m == 0) raise(ErrorCode::invalid_config, "Bonferroni family size must be >= 1");
  const double mean = mean_of(scores);
  const double sd = sample_stddev(scores);
  if (sd == 0.0) {
    return {mean, mean, true};
  }
  const double q = 1.0 - alpha / (2.0 * static_cast<double>(m));
  const double t = student_t_quantile(q, scores.size() - 1);
  const double half = t * sd / std::sqrt(static_cast<double>(scores.size()));
  return {mean - half, mean + half, false};
}

}  // namespace cavprobe::stats
