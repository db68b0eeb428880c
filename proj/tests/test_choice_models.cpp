#include <doctest.h>

#include <cmath>
#include <vector>

#include "choicelab/choice_models.hpp"
#include "choicelab/rng.hpp"

using namespace choicelab;
using namespace choicelab::models;

namespace {

// Risk grid: sure amounts x probabilities x EV offsets.
std::vector<GainLottery<double>> risk_grid() {
  std::vector<GainLottery<double>> out;
  for (double s : {10.0, 20.0, 50.0, 100.0})
    for (double p : {0.30, 0.35, 0.40, 0.45, 0.55, 0.60, 0.65, 0.70})
      for (double d : {-0.15, -0.125, -0.10, -0.075, -0.05, 0.05, 0.075, 0.10, 0.125, 0.15})
        out.push_back({p, std::floor(s * (1.0 + d) / p + 0.5), s});
  return out;
}

std::vector<LotteryObservation> simulate(const ProspectParams<double>& params, int reps,
                                         std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<LotteryObservation> out;
  for (const auto& lot : risk_grid()) {
    const double pr = risky_choice_prob(lot, params);
    for (int r = 0; r < reps; ++r) out.push_back({lot, rng.uniform() < pr});
  }
  return out;
}

}  // namespace

TEST_CASE("power utility") {
  CHECK(power_utility(100.0, 1.0) == 100.0);
  CHECK(power_utility(0.0, 0.8) == 0.0);
  CHECK(power_utility(100.0, 0.8) == doctest::Approx(std::pow(10.0, 1.6)).epsilon(1e-14));
  CHECK(power_utility(100.0, 0.8) == doctest::Approx(39.810717055349725).epsilon(1e-14));
  CHECK_THROWS_AS(power_utility(-1.0, 0.8), Error);
  CHECK_THROWS_AS(power_utility(1.0, 0.0), Error);
}

TEST_CASE("prelec weight") {
  CHECK(prelec_weight(0.5, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(prelec_weight(1.0, 0.65, 2.3) == 1.0);
  CHECK(prelec_weight(0.0, 0.65, 2.3) == 0.0);
  CHECK(prelec_weight(0.5, 0.65, 1.0) == doctest::Approx(std::exp(-std::pow(std::log(2.0), 0.65))));
  CHECK(prelec_weight(0.5, 0.65, 1.0) == doctest::Approx(0.45483).epsilon(1e-4));
  CHECK_THROWS_AS(prelec_weight(1.2, 1.0, 1.0), Error);
  CHECK_THROWS_AS(prelec_weight(0.5, -1.0, 1.0), Error);

  for (int i = 1; i <= 1000; ++i) {
    const double p = i / 1000.0;
    REQUIRE(std::abs(prelec_weight(p, 1.0, 1.0) - p) < 1e-12);
  }
  for (double a : {0.3, 0.65, 1.0, 2.0})
    for (double b : {0.5, 1.0, 2.3}) {
      double prev = 0.0;
      for (int i = 0; i <= 1000; ++i) {
        const double w = prelec_weight(i / 1000.0, a, b);
        REQUIRE(w >= prev);
        prev = w;
      }
    }
}

TEST_CASE("eigen array overloads agree with scalar versions") {
  Eigen::ArrayXd p = Eigen::ArrayXd::LinSpaced(11, 0.0, 1.0);
  const Eigen::ArrayXd w = prelec_weight(p, 0.65, 1.2);
  const Eigen::ArrayXd u = power_utility(p * 100.0, 0.8);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    CHECK(w[i] == prelec_weight(p[i], 0.65, 1.2));
    CHECK(u[i] == doctest::Approx(power_utility(p[i] * 100.0, 0.8)));
  }
}

TEST_CASE("risky choice probability") {
  ProspectParams<double> params;
  params.tau = 0.2;
  CHECK(risky_choice_prob(GainLottery<double>{0.55, 100, 50}, params) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(risky_choice_prob(GainLottery<double>{0.5, 100, 50}, params) == doctest::Approx(0.5));
  params.tau = 0.0;
  params.b = 0.7;
  CHECK(risky_choice_prob(GainLottery<double>{0.3, 90, 20}, params) == doctest::Approx(logistic(0.7)));

  ProspectParams<double> pt{0.8, 0.65, 1.2, 0.3, -0.2};
  for (double g = 10; g < 200; g += 5) {
    CHECK(risky_choice_prob(GainLottery<double>{0.4, g + 5, 20}, pt) >=
          risky_choice_prob(GainLottery<double>{0.4, g, 20}, pt));
    CHECK(risky_choice_prob(GainLottery<double>{0.4, 100, g + 5}, pt) <=
          risky_choice_prob(GainLottery<double>{0.4, 100, g}, pt));
  }
}

TEST_CASE("risk logit recovery and errors") {
  ProspectParams<double> truth;
  truth.tau = 0.5;
  std::vector<RiskObservation> obs;
  for (const auto& t : simulate(truth, 20, 42)) obs.push_back({t.lottery.delta_ev(), t.chose_risky});
  const auto fit = fit_risk_logit(obs);
  CHECK(fit.tau == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::abs(fit.b) < 0.1);
  CHECK(fit.diag.converged);

  std::vector<RiskObservation> all_risky;
  for (double d : {-2.0, -1.0, 1.0, 2.0}) all_risky.push_back({d, true});
  CHECK_THROWS_AS(fit_risk_logit(all_risky), Error);
  try {
    fit_risk_logit(all_risky);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Separation);
  }

  // Mirror-symmetric data: b must vanish.
  std::vector<RiskObservation> sym;
  for (double d : {1.0, 2.0, 3.0}) {
    for (int k = 0; k < 10; ++k) {
      const bool hit = k < 5 + static_cast<int>(d);
      sym.push_back({d, hit});
      sym.push_back({-d, !hit});
    }
  }
  CHECK(std::abs(fit_risk_logit(sym).b) < 1e-6);
}

TEST_CASE("risk logit tightens with sample size") {
  ProspectParams<double> truth;
  truth.tau = 0.5;
  auto err = [&](int reps) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      std::vector<RiskObservation> obs;
      for (const auto& t : simulate(truth, reps, seed)) obs.push_back({t.lottery.delta_ev(), t.chose_risky});
      total += std::abs(fit_risk_logit(obs).tau - 0.5);
    }
    return total / 8.0;
  };
  CHECK(err(40) < err(10));
}

TEST_CASE("risk logit likelihood beats random probes") {
  ProspectParams<double> truth;
  truth.tau = 0.5;
  truth.b = 0.3;
  const auto sim = simulate(truth, 5, 9);
  std::vector<RiskObservation> obs;
  for (const auto& t : sim) obs.push_back({t.lottery.delta_ev(), t.chose_risky});
  const auto fit = fit_risk_logit(obs);
  auto ll = [&](double tau, double b) {
    double s = 0.0;
    for (const auto& o : obs) {
      const double pr = logistic(tau * o.delta_ev + b);
      s += o.chose_risky ? std::log(pr) : std::log1p(-pr);
    }
    return s;
  };
  CHECK(ll(fit.tau, fit.b) == doctest::Approx(fit.diag.log_likelihood).epsilon(1e-9));
  CounterRng probe(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(ll(fit.tau, fit.b) >= ll(4.0 * probe.uniform(), 4.0 * probe.uniform() - 2.0));
  }
}

TEST_CASE("prelec from certainty equivalents") {
  const std::vector<double> ps{0.05, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.95};

  std::vector<CePoint> linear;
  for (double p : ps) linear.push_back({p, p * 100.0, 100.0});
  const auto lin = fit_prelec_from_ce(linear, 1.0);
  CHECK(lin.alpha == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(lin.beta_w == doctest::Approx(1.0).epsilon(1e-4));

  std::vector<CePoint> pts;
  for (double p : ps) pts.push_back({p, prelec_weight(p, 0.65, 1.2) * 100.0, 100.0});
  const auto fit = fit_prelec_from_ce(pts, 1.0);
  CHECK(std::abs(fit.alpha - 0.65) < 1e-3);
  CHECK(std::abs(fit.beta_w - 1.2) < 1e-3);

  // Curved utility: ce solves ce^rho = w(p) G^rho.
  std::vector<CePoint> curved;
  for (double p : ps) curved.push_back({p, 50.0 * std::pow(prelec_weight(p, 0.7, 0.9), 1.0 / 0.8), 50.0});
  const auto cf = fit_prelec_from_ce(curved, 0.8);
  CHECK(std::abs(cf.alpha - 0.7) < 1e-3);
  CHECK(std::abs(cf.beta_w - 0.9) < 1e-3);

  auto with_certain = pts;
  with_certain.push_back({1.0, 100.0, 100.0});
  CHECK(fit_prelec_from_ce(with_certain, 1.0).outliers.empty());
  with_certain.back().ce = 70.0;
  const auto flagged = fit_prelec_from_ce(with_certain, 1.0);
  REQUIRE(flagged.outliers.size() == 1);
  CHECK(flagged.outliers[0] == pts.size());

  std::vector<CePoint> two{{0.3, 20, 100}, {0.6, 50, 100}};
  try {
    fit_prelec_from_ce(two, 1.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientPoints);
  }
}

TEST_CASE("utility curvature recovery") {
  for (double rho : {1.0, 0.8}) {
    ProspectParams<double> truth;
    truth.rho = rho;
    truth.tau = 1.0;
    const auto fit = fit_utility_curvature(simulate(truth, 20, 77));
    CHECK(fit.rho == doctest::Approx(rho).epsilon(0.0625));
    CHECK(std::abs(fit.rho - rho) < 0.05);
  }

  // One lottery only: curvature is not identified.
  std::vector<LotteryObservation> flat;
  for (int k = 0; k < 20; ++k) flat.push_back({{0.5, 40, 18}, k % 3 == 0});
  for (int k = 0; k < 20; ++k) flat.push_back({{0.5, 40, 22}, k % 4 == 0});
  const auto fit = fit_utility_curvature(flat);
  CHECK((fit.unidentified || fit.at_boundary));
  CHECK_FALSE(fit.diag.warnings.empty());
}

TEST_CASE("joint fit reaches at least the two-stage likelihood") {
  ProspectParams<double> truth{0.9, 0.7, 1.1, 0.8, 0.1};
  const auto sim = simulate(truth, 10, 5);
  const auto joint = fit_prospect_joint(sim);
  CHECK(log_likelihood(sim, joint.params) >= log_likelihood(sim, truth) - 1e-6);
}

TEST_CASE("loss logit") {
  std::vector<GambleObservation> sharp, reject_all;
  for (int g = 5; g <= 14; ++g)
    for (int l = 5; l <= 14; ++l) {
      sharp.push_back({{double(g), double(l)}, g > 1.5 * l});
      reject_all.push_back({{double(g), double(l)}, false});
    }
  const auto fit = fit_loss_logit(sharp);
  CHECK(fit.separated);
  CHECK(fit.params.lambda >= 1.4);
  CHECK(fit.params.lambda <= 1.6);
  CHECK(std::abs(fit.params.beta0 / *fit.params.beta_gain) <= 0.5);

  const auto proxy = fit_loss_logit(reject_all);
  CHECK(proxy.params.lambda_is_proxy);
  CHECK(proxy.params.lambda == doctest::Approx(2.94).epsilon(1e-15));
  CHECK_FALSE(proxy.params.beta_gain.has_value());
  CHECK_FALSE(proxy.params.frontier_gain(5.0).has_value());

  LossLogitParams direct{0.0, 1.0, -1.0, 1.0, false};
  CHECK(-*direct.beta_loss / *direct.beta_gain == 1.0);

  // Noisy agent: frontier is the P = 0.5 locus.
  CounterRng rng(3);
  std::vector<GambleObservation> noisy;
  for (int rep = 0; rep < 10; ++rep)
    for (int g = 5; g <= 14; ++g)
      for (int l = 5; l <= 14; ++l)
        noisy.push_back({{double(g), double(l)}, rng.uniform() < logistic(0.8 * g - 1.6 * l + 0.5)});
  const auto nf = fit_loss_logit(noisy);
  CHECK_FALSE(nf.separated);
  CHECK(nf.params.lambda == doctest::Approx(-*nf.params.beta_loss / *nf.params.beta_gain));
  for (double l = 5; l <= 14; l += 0.5) {
    const double g = *nf.params.frontier_gain(l);
    CHECK(std::abs(accept_prob({g, l}, nf.params) - 0.5) < 1e-9);
  }
}

TEST_CASE("temporal surface") {
  const TemporalParams truth{-1.0, -0.02, 8.0};
  CounterRng rng(11);
  std::vector<TemporalObservation> obs;
  const double amounts[][2] = {{6, 7}, {10, 12}, {14, 17}, {20, 25}, {28, 35}, {34, 45}, {40, 57}};
  const double delays[][2] = {{0, 14}, {0, 28}, {0, 42}, {14, 28}, {14, 42}, {28, 42}};
  for (int rep = 0; rep < 200; ++rep)
    for (auto& a : amounts)
      for (auto& d : delays) {
        IntertemporalPair pair{a[0], d[0], a[1], d[1]};
        obs.push_back({pair, rng.uniform() < later_prob(pair, truth)});
      }
  const auto fit = fit_temporal_surface(obs);
  CHECK(fit.params.b0 == doctest::Approx(-1.0).epsilon(0.1));
  CHECK(fit.params.bd == doctest::Approx(-0.02).epsilon(0.1));
  CHECK(fit.params.bp == doctest::Approx(8.0).epsilon(0.1));
  REQUIRE(fit.contours.size() == 3);
  const auto& mid = fit.contours[1];
  CHECK(mid.level == 0.5);
  for (std::size_t i = 0; i < mid.delay.size(); ++i) {
    const double d = mid.delay[i];
    CHECK(std::abs(mid.premium[i] - (-fit.params.b0 - fit.params.bd * d) / fit.params.bp) < 1e-6);
  }
  CHECK(iso_premium(truth, 0.5, 10.0) == doctest::Approx((1 + 0.02 * 10.0) / 8.0));

  auto all_later = obs;
  for (auto& o : all_later) o.chose_later = true;
  CHECK_THROWS_AS(fit_temporal_surface(all_later), Error);
  try {
    iso_premium({0.0, 0.1, 0.0}, 0.5, 3.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateContour);
  }
}

TEST_CASE("certainty equivalent ladder") {
  std::vector<LadderRung> mono{{10, 0, 5}, {20, 0, 5}, {30, 5, 5}, {40, 5, 5}};
  auto ce = extract_certainty_equivalent(mono);
  CHECK(ce.method == CeMethod::Midpoint);
  CHECK(ce.ce == 25.0);

  std::vector<LadderRung> noisy{{10, 0, 10}, {20, 2, 10}, {30, 5, 10}, {40, 8, 10}, {50, 10, 10}};
  ce = extract_certainty_equivalent(noisy);
  CHECK(ce.method == CeMethod::LogisticCrossing);
  CHECK(ce.ce == doctest::Approx(30.0).epsilon(1e-6));
}
