#include "choicelab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "choicelab/error.hpp"

namespace choicelab::stats {
namespace {

Eigen::Map<const Eigen::ArrayXd> as_array(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw Error(ErrorCode::NonConvergence, "incomplete beta continued fraction");
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::Domain, std::string(what) + ": non-finite value");
  }
}

}  // namespace

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::Empty, "mean of empty sample");
  return as_array(values).mean();
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::ShortSample, "variance needs two observations");
  const auto a = as_array(values);
  return (a - a.mean()).square().sum() / static_cast<double>(values.size() - 1);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::Domain, "normal_quantile: p outside [0,1]");
  }
  // Acklam's rational approximation followed by Halley refinement.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
    x -= u / (1 + x * u / 2);
  }
  return x;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw Error(ErrorCode::Domain, "incomplete_beta: shape must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::Domain, "incomplete_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double incomplete_beta_inverse(double a, double b, double p) {
  if (!(a > 0.0 && b > 0.0)) throw Error(ErrorCode::Domain, "incomplete_beta_inverse: bad shape");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::Domain, "incomplete_beta_inverse: p outside [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  // Safeguarded Newton inside a shrinking bracket.
  double lo = 0.0, hi = 1.0;
  double x = a / (a + b);
  const double lbeta = log_beta(a, b);
  for (int it = 0; it < 300; ++it) {
    const double f = incomplete_beta(a, b, x) - p;
    if (f == 0.0) return x;
    (f < 0.0 ? lo : hi) = x;
    const double log_pdf = (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lbeta;
    double next = x - f / std::exp(log_pdf);
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-15 * std::max(x, 1e-300) || hi - lo < 1e-300) return next;
    x = next;
  }
  return x;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::Domain, "student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::Domain, "student_t_quantile: p outside (0,1)");
  if (p == 0.5) return 0.0;
  const double tail = p < 0.5 ? p : 1.0 - p;
  const double x = incomplete_beta_inverse(0.5 * df, 0.5, 2.0 * tail);
  const double t = std::sqrt(df * (1.0 - x) / x);
  return p < 0.5 ? -t : t;
}

EffectSize hedges_g(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::ShortSample, "hedges_g needs n >= 2 per group");
  require_finite(a, "hedges_g");
  require_finite(b, "hedges_g");
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double df = n1 + n2 - 2.0;
  const double pooled_var = ((n1 - 1.0) * sample_variance(a) + (n2 - 1.0) * sample_variance(b)) / df;
  const double sp = std::sqrt(pooled_var);
  const double scale = std::max({std::abs(mean(a)), std::abs(mean(b)), 1.0});
  if (!(sp > 1e-14 * scale)) throw Error(ErrorCode::ZeroVariance, "pooled standard deviation is zero");
  const double d = (mean(a) - mean(b)) / sp;
  const double j = 1.0 - 3.0 / (4.0 * df - 1.0);
  EffectSize out;
  out.g = j * d;
  out.se = std::sqrt((n1 + n2) / (n1 * n2) + out.g * out.g / (2.0 * df));
  out.ci_low = out.g - kZ95 * out.se;
  out.ci_high = out.g + kZ95 * out.se;
  out.n1 = a.size();
  out.n2 = b.size();
  return out;
}

MetaSummary pooled_with_tau2(std::span<const EffectSize> effects, double tau2) {
  if (effects.empty()) throw Error(ErrorCode::Empty, "meta-analysis of zero effects");
  if (!(tau2 >= 0.0)) throw Error(ErrorCode::Domain, "tau2 must be nonnegative");
  const auto k = static_cast<Eigen::Index>(effects.size());
  Eigen::ArrayXd g(k), v(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& e = effects[static_cast<std::size_t>(i)];
    if (!(e.se > 0.0)) throw Error(ErrorCode::Domain, "effect standard errors must be positive");
    g[i] = e.g;
    v[i] = e.se * e.se;
  }
  const Eigen::ArrayXd w = (v + tau2).inverse();
  MetaSummary out;
  out.k = effects.size();
  out.tau2 = tau2;
  out.pooled_g = (w * g).sum() / w.sum();
  out.pooled_se = std::sqrt(1.0 / w.sum());
  out.ci_low = out.pooled_g - kZ95 * out.pooled_se;
  out.ci_high = out.pooled_g + kZ95 * out.pooled_se;
  const Eigen::ArrayXd wf = v.inverse();
  const double g_fixed = (wf * g).sum() / wf.sum();
  out.q = (wf * (g - g_fixed).square()).sum();
  const Eigen::ArrayXd wn = w / w.sum();
  out.weights.assign(wn.data(), wn.data() + wn.size());
  return out;
}

MetaSummary random_effects_meta(std::span<const EffectSize> effects) {
  if (effects.empty()) throw Error(ErrorCode::Empty, "meta-analysis of zero effects");
  const auto fixed = pooled_with_tau2(effects, 0.0);
  double sw = 0.0, sw2 = 0.0;
  for (const auto& e : effects) {
    const double w = 1.0 / (e.se * e.se);
    sw += w;
    sw2 += w * w;
  }
  const double c = sw - sw2 / sw;
  const double dof = static_cast<double>(effects.size()) - 1.0;
  const double tau2 = effects.size() > 1 && c > 0.0 ? std::max(0.0, (fixed.q - dof) / c) : 0.0;
  return pooled_with_tau2(effects, tau2);
}

Interval clopper_pearson(long k, long n, double confidence) {
  if (n < 1 || k < 0 || k > n) throw Error(ErrorCode::Domain, "clopper_pearson: need 0 <= k <= n, n >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::Domain, "confidence outside (0,1)");
  const double alpha = 1.0 - confidence;
  const auto kd = static_cast<double>(k), nd = static_cast<double>(n);
  Interval out;
  out.lower = k == 0 ? 0.0 : incomplete_beta_inverse(kd, nd - kd + 1.0, alpha / 2.0);
  out.upper = k == n ? 1.0 : incomplete_beta_inverse(kd + 1.0, nd - kd, 1.0 - alpha / 2.0);
  return out;
}

TestResult two_proportion_z(long k1, long n1, long k2, long n2) {
  if (n1 < 1 || n2 < 1 || k1 < 0 || k2 < 0 || k1 > n1 || k2 > n2) {
    throw Error(ErrorCode::Domain, "two_proportion_z: invalid counts");
  }
  const double p1 = static_cast<double>(k1) / n1, p2 = static_cast<double>(k2) / n2;
  const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
  TestResult out;
  out.df = std::numeric_limits<double>::infinity();
  if (se == 0.0) return out;  // both proportions 0 or both 1: identical
  out.statistic = (p1 - p2) / se;
  out.p_value = std::erfc(std::abs(out.statistic) / std::sqrt(2.0));
  out.p_greater = 1.0 - normal_cdf(out.statistic);
  return out;
}

TestResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::ShortSample, "welch_t needs n >= 2 per group");
  require_finite(a, "welch_t");
  require_finite(b, "welch_t");
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  if (va + vb == 0.0) throw Error(ErrorCode::ZeroVariance, "welch_t: both samples constant");
  TestResult out;
  out.statistic = (mean(a) - mean(b)) / std::sqrt(va + vb);
  out.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const double upper = 1.0 - student_t_cdf(std::abs(out.statistic), out.df);
  out.p_value = std::min(1.0, 2.0 * upper);
  out.p_greater = 1.0 - student_t_cdf(out.statistic, out.df);
  return out;
}

TestResult one_sample_t(std::span<const double> values, double mu0) {
  if (values.size() < 2) throw Error(ErrorCode::ShortSample, "one_sample_t needs n >= 2");
  require_finite(values, "one_sample_t");
  const double var = sample_variance(values);
  if (var == 0.0) throw Error(ErrorCode::ZeroVariance, "one_sample_t: constant sample");
  const double n = static_cast<double>(values.size());
  TestResult out;
  out.statistic = (mean(values) - mu0) / std::sqrt(var / n);
  out.df = n - 1.0;
  out.p_value = std::min(1.0, 2.0 * (1.0 - student_t_cdf(std::abs(out.statistic), out.df)));
  out.p_greater = 1.0 - student_t_cdf(out.statistic, out.df);
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::Domain, "spearman_rho: length mismatch");
  if (xs.size() < 2) throw Error(ErrorCode::ShortSample, "spearman_rho needs n >= 2");
  require_finite(xs, "spearman_rho");
  require_finite(ys, "spearman_rho");
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  const Eigen::ArrayXd a = as_array(rx) - as_array(rx).mean();
  const Eigen::ArrayXd b = as_array(ry) - as_array(ry).mean();
  const double den = std::sqrt(a.square().sum() * b.square().sum());
  if (den == 0.0) throw Error(ErrorCode::ZeroVariance, "spearman_rho: constant input");
  return std::clamp((a * b).sum() / den, -1.0, 1.0);
}

OlsLine ols_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::Domain, "ols_line: length mismatch");
  if (xs.size() < 3) throw Error(ErrorCode::ShortSample, "ols_line needs n >= 3 for a band");
  require_finite(xs, "ols_line");
  require_finite(ys, "ols_line");
  const auto x = as_array(xs), y = as_array(ys);
  OlsLine out;
  out.n = xs.size();
  out.x_mean = x.mean();
  const double y_mean = y.mean();
  out.sxx = (x - out.x_mean).square().sum();
  if (out.sxx == 0.0) throw Error(ErrorCode::ZeroVariance, "ols_line: constant x");
  out.slope = ((x - out.x_mean) * (y - y_mean)).sum() / out.sxx;
  out.intercept = y_mean - out.slope * out.x_mean;
  const double sse = (y - (out.intercept + out.slope * x)).square().sum();
  out.residual_sd = std::sqrt(sse / static_cast<double>(out.n - 2));
  return out;
}

Interval OlsLine::band(double x, double confidence) const {
  const double tq = student_t_quantile(0.5 + 0.5 * confidence, static_cast<double>(n - 2));
  const double half = tq * residual_sd *
                      std::sqrt(1.0 / static_cast<double>(n) + (x - x_mean) * (x - x_mean) / sxx);
  return {predict(x) - half, predict(x) + half};
}

}  // namespace choicelab::stats
