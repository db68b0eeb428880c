#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "choicelab/error.hpp"

namespace choicelab::models {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Risky option pays `gain` with probability `p` (else 0); safe option pays `sure`.
template <typename Scalar = double>
struct GainLottery {
  Scalar p{};
  Scalar gain{};
  Scalar sure{};

  Scalar delta_ev() const { return p * gain - sure; }
};

// 50/50 gamble: win `gain` or lose `loss` (both positive magnitudes).
struct MixedGamble {
  double gain = 0.0;
  double loss = 0.0;
};

struct IntertemporalPair {
  double sooner_amount = 0.0;
  double sooner_delay = 0.0;  // days
  double later_amount = 0.0;
  double later_delay = 0.0;   // days

  double delay() const { return later_delay - sooner_delay; }
  double premium() const { return later_amount / sooner_amount - 1.0; }
};

template <typename Scalar = double>
struct ProspectParams {
  Scalar rho{1};     // utility curvature
  Scalar alpha{1};   // Prelec curvature
  Scalar beta_w{1};  // Prelec elevation
  Scalar tau{1};     // choice sensitivity
  Scalar b{0};       // choice bias
};

struct LossLogitParams {
  double beta0 = 0.0;
  std::optional<double> beta_gain;
  std::optional<double> beta_loss;
  double lambda = 1.0;
  bool lambda_is_proxy = false;

  // Gain on the 50% acceptance frontier at a given loss; absent for proxies.
  std::optional<double> frontier_gain(double loss) const {
    if (lambda_is_proxy || !beta_gain || !beta_loss) return std::nullopt;
    return (-beta0 - *beta_loss * loss) / *beta_gain;
  }
};

struct TemporalParams {
  double b0 = 0.0;
  double bd = 0.0;  // per day of delay
  double bp = 0.0;  // per unit of premium r
};

struct CePoint {
  double p = 0.0;
  double ce = 0.0;
  double gain = 0.0;
};

// ---------------------------------------------------------------------------
// Model evaluation
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar logistic(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  using std::log;
  return log(p / (Scalar(1) - p));
}

template <typename Scalar>
Scalar power_utility(Scalar x, Scalar rho) {
  using std::pow;
  if (!(x >= Scalar(0))) throw Error(ErrorCode::Domain, "power_utility: negative amount");
  if (!(rho > Scalar(0))) throw Error(ErrorCode::Domain, "power_utility: exponent must be positive");
  return pow(x, rho);
}

// Prelec weight exp(-beta (-ln p)^alpha); p = 0 maps to 0 by continuity.
template <typename Scalar>
Scalar prelec_weight(Scalar p, Scalar alpha, Scalar beta) {
  using std::exp;
  using std::log;
  using std::pow;
  if (!(p >= Scalar(0) && p <= Scalar(1))) {
    throw Error(ErrorCode::Domain, "prelec_weight: p outside [0,1]");
  }
  if (!(alpha > Scalar(0)) || !(beta > Scalar(0))) {
    throw Error(ErrorCode::Domain, "prelec_weight: alpha and beta must be positive");
  }
  if (p == Scalar(0)) return Scalar(0);
  if (p == Scalar(1)) return Scalar(1);
  return exp(-beta * pow(-log(p), alpha));
}

template <typename Derived>
auto power_utility(const Eigen::ArrayBase<Derived>& x, typename Derived::Scalar rho) {
  if (!(rho > 0)) throw Error(ErrorCode::Domain, "power_utility: exponent must be positive");
  if ((x < 0).any()) throw Error(ErrorCode::Domain, "power_utility: negative amount");
  return x.derived().pow(rho);
}

template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> prelec_weight(
    const Eigen::ArrayBase<Derived>& p, typename Derived::Scalar alpha,
    typename Derived::Scalar beta) {
  Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> w(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) w[i] = prelec_weight(p[i], alpha, beta);
  return w;
}

template <typename Scalar>
Scalar subjective_value_difference(const GainLottery<Scalar>& lot,
                                   const ProspectParams<Scalar>& params) {
  return prelec_weight(lot.p, params.alpha, params.beta_w) * power_utility(lot.gain, params.rho) -
         power_utility(lot.sure, params.rho);
}

template <typename Scalar>
Scalar risky_choice_prob(const GainLottery<Scalar>& lot, const ProspectParams<Scalar>& params) {
  return logistic(params.tau * subjective_value_difference(lot, params) + params.b);
}

inline double accept_prob(const MixedGamble& gamble, const LossLogitParams& params) {
  return logistic(params.beta0 + params.beta_gain.value_or(0.0) * gamble.gain +
                  params.beta_loss.value_or(0.0) * gamble.loss);
}

inline double later_prob(const IntertemporalPair& pair, const TemporalParams& params) {
  return logistic(params.b0 + params.bd * pair.delay() + params.bp * pair.premium());
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct FitDiagnostics {
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t n = 0;
  std::vector<std::string> warnings;
};

struct RiskObservation {
  double delta_ev = 0.0;
  bool chose_risky = false;
};

struct RiskLogitFit {
  double tau = 0.0;
  double b = 0.0;
  double se_tau = 0.0;
  double se_b = 0.0;
  FitDiagnostics diag;
};

RiskLogitFit fit_risk_logit(std::span<const RiskObservation> trials);

struct PrelecOptions {
  int starts = 8;
  std::uint64_t seed = 0x5eed;
  double alpha_lo = 0.05, alpha_hi = 5.0;
  double beta_lo = 0.05, beta_hi = 10.0;
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
  // Relative tolerance on ce = G for points at p = 1.
  double certain_tolerance = 0.05;
};

struct PrelecFit {
  double alpha = 1.0;
  double beta_w = 1.0;
  double residual_ss = 0.0;  // in log-weight space
  std::size_t points_used = 0;
  std::vector<std::size_t> outliers;  // input indices flagged and excluded
  FitDiagnostics diag;
};

PrelecFit fit_prelec_from_ce(std::span<const CePoint> points, double rho,
                             const PrelecOptions& options = {});

struct LotteryObservation {
  GainLottery<double> lottery;
  bool chose_risky = false;
};

struct CurvatureFit {
  double rho = 1.0;
  double tau = 0.0;
  double b = 0.0;
  bool at_boundary = false;
  bool unidentified = false;
  FitDiagnostics diag;
};

struct CurvatureOptions {
  double rho_lo = 0.05, rho_hi = 5.0;
  int grid_points = 61;
};

// rho, tau, b by maximum likelihood with linear probability weighting.
CurvatureFit fit_utility_curvature(std::span<const LotteryObservation> trials,
                                   const CurvatureOptions& options = {});

// Non-default joint mode: rho, alpha, beta_w, tau, b together.
struct JointFit {
  ProspectParams<double> params;
  FitDiagnostics diag;
};

JointFit fit_prospect_joint(std::span<const LotteryObservation> trials, std::uint64_t seed = 0x5eed,
                            int starts = 8);

double log_likelihood(std::span<const LotteryObservation> trials,
                      const ProspectParams<double>& params);

struct GambleObservation {
  MixedGamble gamble;
  bool accepted = false;
};

struct LossLogitFit {
  LossLogitParams params;
  // Classes perfectly separated: coefficients are the unit-norm hard-margin
  // direction, not a finite-sample MLE.
  bool separated = false;
  FitDiagnostics diag;
};

LossLogitFit fit_loss_logit(std::span<const GambleObservation> trials);

struct TemporalObservation {
  IntertemporalPair pair;
  bool chose_later = false;
};

struct ContourLine {
  double level = 0.5;
  std::vector<double> delay;
  std::vector<double> premium;
};

struct TemporalFit {
  TemporalParams params;
  FitDiagnostics diag;
  std::vector<ContourLine> contours;
};

TemporalFit fit_temporal_surface(std::span<const TemporalObservation> trials,
                                 std::span<const double> contour_levels = {});

// Premium r on the iso-probability line at `level` for delay d.
double iso_premium(const TemporalParams& params, double level, double delay);

std::vector<ContourLine> iso_contours(const TemporalParams& params,
                                      std::span<const double> levels,
                                      std::span<const double> delays);

// One rung of a certainty-equivalent ladder: how often the sure amount won.
struct LadderRung {
  double sure = 0.0;
  int chose_sure = 0;
  int total = 0;
};

enum class CeMethod { Midpoint, LogisticCrossing };

struct CeEstimate {
  double ce = 0.0;
  CeMethod method = CeMethod::Midpoint;
};

// Sure amount at which the agent is indifferent along a ladder of ascending
// sure amounts for one (G, p) lottery.
CeEstimate extract_certainty_equivalent(std::span<const LadderRung> rungs);

}  // namespace choicelab::models
