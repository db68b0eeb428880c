#include <doctest.h>

#include <cmath>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "choicelab/error.hpp"
#include "choicelab/rng.hpp"
#include "choicelab/stats.hpp"

using namespace choicelab;
using namespace choicelab::stats;

namespace {

std::vector<double> draw(CounterRng& rng, int n, double loc, double scale) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = loc + scale * normal_quantile(rng.uniform() * 0.999 + 0.0005);
  return v;
}

double naive_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

double naive_var(const std::vector<double>& v) {
  const double m = naive_mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

}  // namespace

TEST_CASE("distribution functions against boost") {
  for (double a : {0.5, 1.0, 2.5, 11.0})
    for (double b : {0.5, 1.0, 3.0, 20.0})
      for (double x : {0.01, 0.2, 0.5, 0.77, 0.99}) {
        CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-12));
        const double p = x;
        CHECK(std::abs(incomplete_beta_inverse(a, b, p) - boost::math::ibeta_inv(a, b, p)) < 1e-12);
      }
  for (double df : {1.0, 3.5, 10.0, 57.0})
    for (double t : {-4.0, -1.0, 0.0, 0.3, 2.2}) {
      boost::math::students_t dist(df);
      CHECK(student_t_cdf(t, df) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-11));
    }
  boost::math::normal nd;
  for (double p : {1e-6, 0.01, 0.3, 0.5, 0.975})
    CHECK(normal_quantile(p) == doctest::Approx(boost::math::quantile(nd, p)).epsilon(1e-12));
  // Upper tail is limited by the rounding of p itself.
  CHECK(normal_quantile(0.999999) == doctest::Approx(boost::math::quantile(nd, 0.999999)).epsilon(1e-9));
  CHECK(student_t_quantile(0.975, 18.0) ==
        doctest::Approx(boost::math::quantile(boost::math::students_t(18.0), 0.975)).epsilon(1e-11));
}

TEST_CASE("hedges g fixtures") {
  // d = 1 exactly at n1 = n2 = 10.
  std::vector<double> b{-1, 1, -1, 1, -1, 1, -1, 1, -1, 1};
  const double s = std::sqrt(naive_var(b));
  std::vector<double> a = b;
  for (auto& x : a) x += s;
  const auto e = hedges_g(a, b);
  CHECK(e.g == doctest::Approx(1.0 - 3.0 / 71.0).epsilon(1e-12));
  CHECK(e.g == doctest::Approx(0.9577).epsilon(1e-4));
  CHECK(e.ci_low <= e.g);
  CHECK(e.g <= e.ci_high);

  CHECK(hedges_g(b, b).g == 0.0);
  std::vector<double> c{3, 3, 3};
  try {
    hedges_g(c, c);
    FAIL("expected throw");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ZeroVariance);
  }
  CHECK_THROWS_AS(hedges_g(std::vector<double>{1.0}, b), Error);

  CounterRng rng(2024);
  for (int k = 0; k < 25; ++k) {
    const auto x = draw(rng, 5 + k, 0.3 * k, 1.0 + 0.1 * k);
    const auto y = draw(rng, 8 + 2 * k, 0.0, 2.0);
    const double n1 = x.size(), n2 = y.size(), df = n1 + n2 - 2;
    const double sp = std::sqrt(((n1 - 1) * naive_var(x) + (n2 - 1) * naive_var(y)) / df);
    const double g = (1 - 3 / (4 * df - 1)) * (naive_mean(x) - naive_mean(y)) / sp;
    const auto got = hedges_g(x, y);
    CHECK(std::abs(got.g - g) < 1e-9);
    CHECK(std::abs(got.se - std::sqrt((n1 + n2) / (n1 * n2) + g * g / (2 * df))) < 1e-9);
    CHECK(hedges_g(y, x).g == -got.g);

    auto xs = x, ys = y;
    for (auto& v : xs) v = 3.5 * v - 7.0;
    for (auto& v : ys) v = 3.5 * v - 7.0;
    CHECK(std::abs(hedges_g(xs, ys).g - got.g) < 1e-12);
  }
}

TEST_CASE("random effects meta") {
  EffectSize e1, e2;
  e1.g = 0.2;
  e1.se = 0.1;
  e2.g = 0.8;
  e2.se = 0.1;
  std::vector<EffectSize> two{e1, e2};
  const auto m = random_effects_meta(two);
  CHECK(std::abs(m.q - 18.0) < 1e-9);
  CHECK(std::abs(m.tau2 - 0.17) < 1e-9);
  CHECK(std::abs(m.pooled_g - 0.5) < 1e-9);
  CHECK(std::abs(m.pooled_se - 0.3) < 1e-9);
  CHECK(m.weights[0] + m.weights[1] == doctest::Approx(1.0));

  std::vector<EffectSize> one{e1};
  const auto single = random_effects_meta(one);
  CHECK(single.pooled_g == doctest::Approx(0.2));
  CHECK(single.tau2 == 0.0);

  std::vector<EffectSize> same{e1, e1, e1};
  const auto hom = random_effects_meta(same);
  CHECK(hom.q == doctest::Approx(0.0));
  CHECK(hom.tau2 == 0.0);
  CHECK(hom.pooled_g == doctest::Approx(0.2));

  CHECK_THROWS_AS(random_effects_meta(std::vector<EffectSize>{}), Error);

  // Forced tau2 = 0 is inverse-variance pooling.
  std::vector<EffectSize> mixed;
  double sw = 0, swg = 0;
  for (int k = 0; k < 6; ++k) {
    EffectSize e;
    e.g = 0.1 * k - 0.2;
    e.se = 0.05 + 0.03 * k;
    mixed.push_back(e);
    sw += 1 / (e.se * e.se);
    swg += e.g / (e.se * e.se);
  }
  CHECK(std::abs(pooled_with_tau2(mixed, 0.0).pooled_g - swg / sw) < 1e-12);
  CHECK(random_effects_meta(mixed).tau2 >= 0.0);
}

TEST_CASE("clopper pearson") {
  const auto zero = clopper_pearson(0, 10);
  CHECK(zero.lower == 0.0);
  CHECK(std::abs(zero.upper - (1.0 - std::pow(0.025, 0.1))) < 1e-9);
  CHECK(zero.upper == doctest::Approx(0.3085).epsilon(1e-4));
  const auto full = clopper_pearson(10, 10);
  CHECK(full.upper == 1.0);
  CHECK(std::abs(full.lower - std::pow(0.025, 0.1)) < 1e-9);
  const auto half = clopper_pearson(5, 10);
  CHECK(half.lower < 0.5);
  CHECK(half.upper > 0.5);
  CHECK(std::abs(half.lower + half.upper - 1.0) < 1e-12);
  CHECK(std::abs(half.lower - boost::math::ibeta_inv(5.0, 6.0, 0.025)) < 1e-12);
  CHECK_THROWS_AS(clopper_pearson(11, 10), Error);

  for (long n : {1L, 7L, 40L})
    for (long k = 0; k <= n; ++k) {
      const auto ci = clopper_pearson(k, n);
      CHECK(ci.lower <= double(k) / n);
      CHECK(ci.upper >= double(k) / n);
    }

  // Coverage at least nominal.
  CounterRng rng(99);
  for (double p : {0.1, 0.5, 0.9}) {
    int covered = 0;
    const int draws = 10000, n = 30;
    for (int i = 0; i < draws; ++i) {
      long k = 0;
      for (int j = 0; j < n; ++j) k += rng.uniform() < p;
      const auto ci = clopper_pearson(k, n);
      covered += ci.lower <= p && p <= ci.upper;
    }
    CHECK(covered >= 0.95 * draws);
  }
}

TEST_CASE("tests and correlations") {
  const auto z = two_proportion_z(30, 100, 15, 50);
  CHECK(z.statistic == 0.0);
  CHECK(z.p_value == doctest::Approx(1.0));
  const auto z1 = two_proportion_z(40, 100, 25, 100);
  const auto z2 = two_proportion_z(25, 100, 40, 100);
  CHECK(z1.statistic == -z2.statistic);
  CHECK(z1.p_value == doctest::Approx(z2.p_value));

  // Welch against an independent computation with boost's t distribution.
  std::vector<double> a{27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4};
  std::vector<double> b{27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4};
  const double va = naive_var(a) / a.size(), vb = naive_var(b) / b.size();
  const double t = (naive_mean(a) - naive_mean(b)) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
  const double p = 2 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
  const auto w = welch_t(a, b);
  CHECK(std::abs(w.statistic - t) < 1e-9);
  CHECK(std::abs(w.df - df) < 1e-9);
  CHECK(std::abs(w.p_value - p) < 1e-9);
  CHECK(welch_t(b, a).statistic == -w.statistic);
  CHECK(w.p_value >= 0.0);
  CHECK(w.p_value <= 1.0);
  CHECK_THROWS_AS(welch_t(std::vector<double>{1, 1}, std::vector<double>{2, 2}), Error);

  const auto os = one_sample_t(a, 20.0);
  CHECK(os.df == a.size() - 1);
  CHECK(os.p_greater == doctest::Approx(1 - boost::math::cdf(boost::math::students_t(os.df), os.statistic)));

  std::vector<double> xs{1, 2, 3, 4, 5, 6}, ys{2, 4, 8, 16, 32, 64}, rev{6, 5, 4, 3, 2, 1};
  CHECK(spearman_rho(xs, ys) == 1.0);
  CHECK(spearman_rho(xs, rev) == -1.0);
  std::vector<double> tied{1, 2, 2, 3};
  const auto r = average_ranks(tied);
  CHECK(r == std::vector<double>{1, 2.5, 2.5, 4});
  std::vector<double> u{0.3, -1.0, 2.0, 0.1, 5.0}, v{1.0, 0.5, 0.2, 3.0, 2.5};
  std::vector<double> ut = u;
  for (auto& x : ut) x = std::exp(x);
  CHECK(spearman_rho(u, v) == doctest::Approx(spearman_rho(ut, v)));
  const double rho = spearman_rho(u, v);
  CHECK(rho >= -1.0);
  CHECK(rho <= 1.0);

  const auto line = ols_line(xs, std::vector<double>{1.1, 2.9, 5.2, 7.1, 8.8, 11.0});
  CHECK(line.slope == doctest::Approx(34.55 / 17.5).epsilon(1e-12));
  const auto band = line.band(3.5);
  CHECK(band.lower < line.predict(3.5));
  CHECK(band.upper > line.predict(3.5));
  CHECK(line.band(6.0).upper - line.band(6.0).lower > band.upper - band.lower);
}
