#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace choicelab::stats {

// ---- distributions --------------------------------------------------------

double normal_cdf(double x);
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
// Inverse in x of I_x(a, b) = p, to 1e-12 or better.
double incomplete_beta_inverse(double a, double b, double p);

double student_t_cdf(double t, double df);
double student_t_quantile(double p, double df);

// ---- effect sizes and pooling --------------------------------------------

struct EffectLabel {
  std::string domain;
  std::string emotion;
  std::string method;
};

struct EffectSize {
  double g = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  EffectLabel label;
};

inline constexpr double kZ95 = 1.96;

// Bias-corrected standardized mean difference of `a` over `b`.
EffectSize hedges_g(std::span<const double> a, std::span<const double> b);

struct MetaSummary {
  double pooled_g = 0.0;
  double pooled_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double tau2 = 0.0;
  double q = 0.0;
  std::size_t k = 0;
  std::vector<double> weights;  // normalized, sum to 1
};

// DerSimonian-Laird random-effects pooling.
MetaSummary random_effects_meta(std::span<const EffectSize> effects);
// Inverse-variance pooling with tau^2 fixed at `tau2` (0 gives fixed-effect).
MetaSummary pooled_with_tau2(std::span<const EffectSize> effects, double tau2);

// ---- intervals and tests --------------------------------------------------

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

Interval clopper_pearson(long k, long n, double confidence = 0.95);

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;         // two-sided
  double p_greater = 0.5;       // one-sided, alternative: statistic > 0
};

TestResult two_proportion_z(long k1, long n1, long k2, long n2);
TestResult welch_t(std::span<const double> a, std::span<const double> b);
TestResult one_sample_t(std::span<const double> values, double mu0 = 0.0);

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);
double spearman_rho(std::span<const double> xs, std::span<const double> ys);

struct OlsLine {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_sd = 0.0;
  double x_mean = 0.0;
  double sxx = 0.0;
  std::size_t n = 0;

  double predict(double x) const { return intercept + slope * x; }
  // Confidence band for the mean response at x.
  Interval band(double x, double confidence = 0.95) const;
};

OlsLine ols_line(std::span<const double> xs, std::span<const double> ys);

double mean(std::span<const double> values);
double sample_variance(std::span<const double> values);

}  // namespace choicelab::stats
