#include "choicelab/choice_models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "choicelab/logistic.hpp"
#include "choicelab/rng.hpp"

namespace choicelab::models {
namespace {

FitDiagnostics diagnostics_from(const LogisticFit& fit, std::size_t n) {
  FitDiagnostics d;
  d.log_likelihood = fit.log_likelihood;
  d.gradient_norm = fit.gradient_norm;
  d.iterations = fit.iterations;
  d.converged = fit.converged;
  d.n = n;
  return d;
}

std::size_t distinct_count(std::span<const double> values) {
  return std::set<double>(values.begin(), values.end()).size();
}

// ---- certainty-equivalent helpers ----------------------------------------

struct PrelecData {
  Eigen::ArrayXd x;       // -ln p
  Eigen::ArrayXd target;  // ln of observed weight
};

double prelec_sse(const PrelecData& data, double alpha, double beta) {
  const Eigen::ArrayXd r = -beta * data.x.pow(alpha) - data.target;
  return r.square().sum();
}

struct LmResult {
  double alpha, beta, sse, grad_norm;
  int iterations;
  bool converged;
};

// Levenberg-Marquardt with projection onto the box.
LmResult prelec_lm(const PrelecData& data, double alpha, double beta, const PrelecOptions& opt) {
  double lambda = 1e-3;
  double sse = prelec_sse(data, alpha, beta);
  LmResult out{alpha, beta, sse, std::numeric_limits<double>::infinity(), 0, false};
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::ArrayXd xa = data.x.pow(alpha);
    const Eigen::ArrayXd r = -beta * xa - data.target;
    Eigen::MatrixXd jac(data.x.size(), 2);
    jac.col(0) = (-beta * xa * data.x.log()).matrix();
    jac.col(1) = (-xa).matrix();
    const Eigen::Vector2d grad = jac.transpose() * r.matrix();

    // Projected gradient: drop components pushing against an active bound.
    Eigen::Vector2d pg = grad;
    if ((alpha <= opt.alpha_lo && pg[0] > 0) || (alpha >= opt.alpha_hi && pg[0] < 0)) pg[0] = 0;
    if ((beta <= opt.beta_lo && pg[1] > 0) || (beta >= opt.beta_hi && pg[1] < 0)) pg[1] = 0;
    out.grad_norm = pg.norm();
    out.iterations = it;
    if (out.grad_norm < opt.gradient_tolerance) {
      out.converged = true;
      break;
    }
    const Eigen::Matrix2d jtj = jac.transpose() * jac;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::Matrix2d a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Vector2d step = a.ldlt().solve(-grad);
      const double na = std::clamp(alpha + step[0], opt.alpha_lo, opt.alpha_hi);
      const double nb = std::clamp(beta + step[1], opt.beta_lo, opt.beta_hi);
      const double nsse = prelec_sse(data, na, nb);
      if (nsse < sse) {
        const bool tiny = std::abs(na - alpha) + std::abs(nb - beta) < 1e-15;
        alpha = na;
        beta = nb;
        sse = nsse;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = !tiny;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No decrease is representable: stationary to machine precision.
      out.converged = out.grad_norm < 1e-6;
      out.iterations = it + 1;
      break;
    }
    out.iterations = it + 1;
  }
  out.alpha = alpha;
  out.beta = beta;
  out.sse = sse;
  return out;
}

// ---- quasi-Newton for the joint fit -------------------------------------

template <typename F>
Eigen::VectorXd numeric_gradient(F&& f, const Eigen::VectorXd& u) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(u[i]));
    Eigen::VectorXd up = u, dn = u;
    up[i] += h;
    dn[i] -= h;
    const double fu = f(up), fd = f(dn);
    if (std::isfinite(fu) && std::isfinite(fd)) {
      g[i] = (fu - fd) / (2.0 * h);
    } else {
      const double f0 = f(u);
      g[i] = std::isfinite(fu) ? (fu - f0) / h : std::isfinite(fd) ? (f0 - fd) / h : 0.0;
    }
  }
  return g;
}

struct BfgsResult {
  Eigen::VectorXd u;
  double value;
  double grad_norm;
  int iterations;
  bool converged;
};

template <typename F>
BfgsResult bfgs(F&& f, Eigen::VectorXd u, int max_iterations, double tol) {
  const auto n = u.size();
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  double fx = f(u);
  Eigen::VectorXd g = numeric_gradient(f, u);
  BfgsResult out{u, fx, g.norm(), 0, false};
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it;
    if (g.norm() < tol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd dir = -hinv * g;
    if (dir.dot(g) >= 0) {
      hinv.setIdentity();
      dir = -g;
    }
    double step = 1.0;
    double f_new = fx;
    Eigen::VectorXd u_new = u;
    bool moved = false;
    for (int ls = 0; ls < 50; ++ls) {
      u_new = u + step * dir;
      f_new = f(u_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * g.dot(dir)) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    const Eigen::VectorXd g_new = numeric_gradient(f, u_new);
    const Eigen::VectorXd s = u_new - u;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
      hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    const bool stalled = std::abs(fx - f_new) < 1e-14 * std::max(1.0, std::abs(fx));
    u = u_new;
    fx = f_new;
    g = g_new;
    out.iterations = it + 1;
    if (stalled) break;
  }
  out.u = u;
  out.value = fx;
  out.grad_norm = g.norm();
  out.converged = out.converged || out.grad_norm < 1e-4;
  return out;
}

// Profile log-likelihood of (tau, b) at fixed rho with w(p) = p.
struct Profile {
  double ll;
  LogisticFit fit;
};

Profile curvature_profile(std::span<const LotteryObservation> trials, double rho) {
  const auto n = static_cast<Eigen::Index>(trials.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& lot = trials[static_cast<std::size_t>(i)].lottery;
    x(i, 0) = 1.0;
    x(i, 1) = lot.p * std::pow(lot.gain, rho) - std::pow(lot.sure, rho);
    y[i] = trials[static_cast<std::size_t>(i)].chose_risky ? 1.0 : 0.0;
  }
  auto fit = fit_logistic(x, y, Eigen::VectorXd::Ones(n));
  return {fit.log_likelihood, std::move(fit)};
}

bool curvature_separable(std::span<const LotteryObservation> trials, double rho) {
  const auto n = static_cast<Eigen::Index>(trials.size());
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& lot = trials[static_cast<std::size_t>(i)].lottery;
    x(i, 0) = lot.p * std::pow(lot.gain, rho) - std::pow(lot.sure, rho);
    y[i] = trials[static_cast<std::size_t>(i)].chose_risky ? 1.0 : 0.0;
  }
  return is_linearly_separable(x, y, Eigen::VectorXd::Ones(n));
}

}  // namespace

// ---------------------------------------------------------------------------

RiskLogitFit fit_risk_logit(std::span<const RiskObservation> trials) {
  const auto n = static_cast<Eigen::Index>(trials.size());
  std::vector<double> evs;
  evs.reserve(trials.size());
  for (const auto& t : trials) evs.push_back(t.delta_ev);
  if (distinct_count(evs) < 2) {
    throw Error(ErrorCode::InsufficientPoints, "risk logit needs at least two distinct EV gaps");
  }
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = trials[static_cast<std::size_t>(i)].delta_ev;
    y[i] = trials[static_cast<std::size_t>(i)].chose_risky ? 1.0 : 0.0;
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (is_linearly_separable(x.rightCols(1), y, w)) {
    throw Error(ErrorCode::Separation, "risky choices are perfectly separated by EV gap");
  }
  const auto fit = fit_logistic(x, y, w);
  if (!fit.converged) throw Error(ErrorCode::NonConvergence, "risk logit did not converge");
  RiskLogitFit out;
  out.b = fit.coef[0];
  out.tau = fit.coef[1];
  out.se_b = std::sqrt(fit.covariance(0, 0));
  out.se_tau = std::sqrt(fit.covariance(1, 1));
  out.diag = diagnostics_from(fit, trials.size());
  if (out.tau < 0.0 || out.tau > 100.0) out.diag.warnings.push_back("BOUNDARY: tau outside [0, 100]");
  return out;
}

PrelecFit fit_prelec_from_ce(std::span<const CePoint> points, double rho,
                             const PrelecOptions& options) {
  if (!(rho > 0.0)) throw Error(ErrorCode::Domain, "rho must be positive");
  PrelecFit out;
  std::vector<double> xs, targets, ps;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    if (!(pt.p > 0.0 && pt.p <= 1.0) || !(pt.gain > 0.0) || !(pt.ce >= 0.0)) {
      throw Error(ErrorCode::Domain, "certainty-equivalent point outside its domain");
    }
    if (pt.p == 1.0) {
      // w(1) = 1 regardless of (alpha, beta): only a consistency check.
      if (std::abs(pt.ce - pt.gain) > options.certain_tolerance * pt.gain) out.outliers.push_back(i);
      continue;
    }
    if (pt.ce <= 0.0) {
      out.outliers.push_back(i);
      continue;
    }
    xs.push_back(-std::log(pt.p));
    targets.push_back(rho * (std::log(pt.ce) - std::log(pt.gain)));
    ps.push_back(pt.p);
  }
  if (xs.size() < 3 || distinct_count(ps) < 3) {
    throw Error(ErrorCode::InsufficientPoints, "Prelec fit needs three points with distinct p < 1");
  }
  PrelecData data{Eigen::Map<Eigen::ArrayXd>(xs.data(), static_cast<Eigen::Index>(xs.size())),
                  Eigen::Map<Eigen::ArrayXd>(targets.data(), static_cast<Eigen::Index>(targets.size()))};

  // First start: ordinary least squares on ln(-ln w) = ln beta + alpha ln(-ln p),
  // using points whose observed weight lies strictly inside (0, 1).
  std::vector<std::array<double, 2>> starts;
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (Eigen::Index i = 0; i < data.x.size(); ++i) {
      if (data.target[i] >= 0.0) continue;
      const double lx = std::log(data.x[i]);
      const double ly = std::log(-data.target[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++m;
    }
    const double den = m * sxx - sx * sx;
    if (m >= 2 && std::abs(den) > 1e-12) {
      const double a = (m * sxy - sx * sy) / den;
      const double lb = (sy - a * sx) / m;
      starts.push_back({std::clamp(a, options.alpha_lo, options.alpha_hi),
                        std::clamp(std::exp(lb), options.beta_lo, options.beta_hi)});
    }
  }
  starts.push_back({1.0, 1.0});
  CounterRng rng(options.seed, "prelec-multistart");
  while (static_cast<int>(starts.size()) < std::max(options.starts, 1)) {
    const double a = std::exp(std::log(options.alpha_lo) +
                              rng.uniform() * (std::log(options.alpha_hi) - std::log(options.alpha_lo)));
    const double b = std::exp(std::log(options.beta_lo) +
                              rng.uniform() * (std::log(options.beta_hi) - std::log(options.beta_lo)));
    starts.push_back({a, b});
  }

  LmResult best{1.0, 1.0, std::numeric_limits<double>::infinity(), 0.0, 0, false};
  for (const auto& s : starts) {
    const auto r = prelec_lm(data, s[0], s[1], options);
    if (r.sse < best.sse) best = r;
  }
  if (!best.converged) {
    throw Error(ErrorCode::NonConvergence,
                "Prelec least squares did not converge; residual SS = " + std::to_string(best.sse));
  }
  out.alpha = best.alpha;
  out.beta_w = best.beta;
  out.residual_ss = best.sse;
  out.points_used = xs.size();
  out.diag.converged = true;
  out.diag.gradient_norm = best.grad_norm;
  out.diag.iterations = best.iterations;
  out.diag.n = xs.size();
  out.diag.log_likelihood = -0.5 * best.sse;
  if (best.alpha <= options.alpha_lo || best.alpha >= options.alpha_hi ||
      best.beta <= options.beta_lo || best.beta >= options.beta_hi) {
    out.diag.warnings.push_back("BOUNDARY: Prelec parameter pinned to its search bound");
  }
  if (!out.outliers.empty()) {
    out.diag.warnings.push_back("OUTLIER: " + std::to_string(out.outliers.size()) +
                                " point(s) excluded");
  }
  return out;
}

CurvatureFit fit_utility_curvature(std::span<const LotteryObservation> trials,
                                   const CurvatureOptions& options) {
  bool any_risky = false, any_safe = false;
  std::vector<double> evs;
  for (const auto& t : trials) {
    (t.chose_risky ? any_risky : any_safe) = true;
    evs.push_back(t.lottery.delta_ev());
  }
  if (!any_risky || !any_safe) throw Error(ErrorCode::Separation, "single outcome class");
  if (distinct_count(evs) < 2) {
    throw Error(ErrorCode::InsufficientPoints, "curvature fit needs at least two distinct lotteries");
  }

  // Profile likelihood over a log-spaced rho grid, then golden-section polish.
  const int m = std::max(options.grid_points, 5);
  const double llo = std::log(options.rho_lo), lhi = std::log(options.rho_hi);
  std::vector<double> grid(static_cast<std::size_t>(m)), prof(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double rho = std::exp(llo + (lhi - llo) * i / (m - 1));
    grid[static_cast<std::size_t>(i)] = rho;
    if (curvature_separable(trials, rho)) {
      throw Error(ErrorCode::Separation,
                  "choices perfectly separated by utility difference at rho = " + std::to_string(rho));
    }
    prof[static_cast<std::size_t>(i)] = curvature_profile(trials, rho).ll;
  }
  const auto best_it = std::max_element(prof.begin(), prof.end());
  const auto k = static_cast<int>(best_it - prof.begin());
  const double spread = *best_it - *std::min_element(prof.begin(), prof.end());

  double lo = std::log(grid[static_cast<std::size_t>(std::max(k - 1, 0))]);
  double hi = std::log(grid[static_cast<std::size_t>(std::min(k + 1, m - 1))]);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto neg = [&](double lr) { return -curvature_profile(trials, std::exp(lr)).ll; };
  double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
  double fa = neg(a), fb = neg(b);
  for (int it = 0; it < 100 && hi - lo > 1e-10; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = neg(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = neg(b);
    }
  }
  double rho = std::exp(0.5 * (lo + hi));
  Profile best = curvature_profile(trials, rho);
  if (best.ll < *best_it) {
    rho = grid[static_cast<std::size_t>(k)];
    best = curvature_profile(trials, rho);
  }

  CurvatureFit out;
  out.rho = rho;
  out.b = best.fit.coef[0];
  out.tau = best.fit.coef[1];
  out.diag = diagnostics_from(best.fit, trials.size());
  const double rel = 1e-6;
  out.at_boundary = rho <= options.rho_lo * (1 + rel) || rho >= options.rho_hi * (1 - rel);
  out.unidentified = spread < 1e-6 * std::max(1.0, std::abs(*best_it));
  if (out.at_boundary) out.diag.warnings.push_back("BOUNDARY: rho pinned to its search bound");
  if (out.unidentified) {
    out.diag.warnings.push_back("UNIDENTIFIED: profile likelihood flat in rho (no stake variation)");
  }
  if (out.tau < 0.0 || out.tau > 100.0) out.diag.warnings.push_back("BOUNDARY: tau outside [0, 100]");
  return out;
}

double log_likelihood(std::span<const LotteryObservation> trials,
                      const ProspectParams<double>& params) {
  double ll = 0.0;
  for (const auto& t : trials) {
    const double z = params.tau * subjective_value_difference(t.lottery, params) + params.b;
    // log sigma(z) and log(1 - sigma(z)) without cancellation.
    const double sp = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    ll += t.chose_risky ? z - sp : -sp;
  }
  return ll;
}

JointFit fit_prospect_joint(std::span<const LotteryObservation> trials, std::uint64_t seed,
                            int starts) {
  bool any_risky = false, any_safe = false;
  for (const auto& t : trials) (t.chose_risky ? any_risky : any_safe) = true;
  if (!any_risky || !any_safe) throw Error(ErrorCode::Separation, "single outcome class");

  // Log scale for the positive parameters; b stays linear. Outside the
  // bounds the objective is infinite so the line search backs off.
  Eigen::VectorXd lo(5), hi(5);
  lo << std::log(0.05), std::log(0.05), std::log(0.05), std::log(1e-6), -20.0;
  hi << std::log(5.0), std::log(5.0), std::log(10.0), std::log(100.0), 20.0;
  auto unpack = [](const Eigen::VectorXd& u) {
    return ProspectParams<double>{std::exp(u[0]), std::exp(u[1]), std::exp(u[2]), std::exp(u[3]), u[4]};
  };
  auto objective = [&](const Eigen::VectorXd& u) {
    if ((u.array() < lo.array()).any() || (u.array() > hi.array()).any()) {
      return std::numeric_limits<double>::infinity();
    }
    return -log_likelihood(trials, unpack(u));
  };
  auto pack = [](const ProspectParams<double>& p) {
    Eigen::VectorXd u(5);
    u << std::log(p.rho), std::log(p.alpha), std::log(p.beta_w), std::log(std::max(p.tau, 1e-6)), p.b;
    return u;
  };

  std::vector<Eigen::VectorXd> seeds;
  try {
    const auto stage = fit_utility_curvature(trials);
    seeds.push_back(pack({stage.rho, 1.0, 1.0, stage.tau, stage.b}));
  } catch (const Error&) {
    // no two-stage start available
  }
  seeds.push_back(pack({1.0, 1.0, 1.0, 1.0, 0.0}));
  CounterRng rng(seed, "prospect-joint");
  while (static_cast<int>(seeds.size()) < std::max(starts, 1)) {
    Eigen::VectorXd u(5);
    for (int j = 0; j < 5; ++j) u[j] = lo[j] + (hi[j] - lo[j]) * (0.05 + 0.9 * rng.uniform());
    seeds.push_back(u);
  }

  BfgsResult best{Eigen::VectorXd::Zero(5), std::numeric_limits<double>::infinity(), 0, 0, false};
  for (const auto& u0 : seeds) {
    if (!std::isfinite(objective(u0))) continue;
    const auto r = bfgs(objective, u0, 400, 1e-6);
    if (r.value < best.value) best = r;
  }
  if (!std::isfinite(best.value)) throw Error(ErrorCode::NonConvergence, "joint fit found no finite start");
  JointFit out;
  out.params = unpack(best.u);
  out.diag.log_likelihood = -best.value;
  out.diag.gradient_norm = best.grad_norm;
  out.diag.iterations = best.iterations;
  out.diag.converged = best.converged;
  out.diag.n = trials.size();
  return out;
}

LossLogitFit fit_loss_logit(std::span<const GambleObservation> trials) {
  if (trials.empty()) throw Error(ErrorCode::Empty, "no mixed-gamble observations");
  const auto n = static_cast<Eigen::Index>(trials.size());
  LossLogitFit out;
  out.diag.n = trials.size();

  bool any_accept = false, any_reject = false;
  double max_ratio_rejected = 0.0;
  double min_ratio_accepted = std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    const double ratio = t.gamble.gain / t.gamble.loss;
    if (t.accepted) {
      any_accept = true;
      min_ratio_accepted = std::min(min_ratio_accepted, ratio);
    } else {
      any_reject = true;
      max_ratio_rejected = std::max(max_ratio_rejected, ratio);
    }
  }
  if (!any_accept) {
    // Universal rejection: frontier lies beyond every offered ratio.
    out.params.lambda = 1.05 * max_ratio_rejected;
    out.params.lambda_is_proxy = true;
    out.diag.warnings.push_back("PROXY: all gambles rejected; lambda = 1.05 * max(G/L)");
    return out;
  }
  if (!any_reject) {
    out.params.lambda = min_ratio_accepted / 1.05;
    out.params.lambda_is_proxy = true;
    out.diag.warnings.push_back("PROXY: all gambles accepted; lambda = min(G/L) / 1.05");
    return out;
  }

  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = trials[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    x(i, 1) = t.gamble.gain;
    x(i, 2) = t.gamble.loss;
    y[i] = t.accepted ? 1.0 : 0.0;
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd coef;
  if (is_linearly_separable(x.rightCols(2), y, w)) {
    const auto sep = max_margin_separator(x.rightCols(2), y);
    coef = sep.coef;
    out.separated = true;
    out.diag.converged = true;
    out.diag.warnings.push_back("SEPARATED: coefficients are the max-margin direction (unit norm)");
    out.diag.log_likelihood = 0.0;
  } else {
    const auto fit = fit_logistic(x, y, w);
    if (!fit.converged) throw Error(ErrorCode::NonConvergence, "loss logit did not converge");
    coef = fit.coef;
    out.diag = diagnostics_from(fit, trials.size());
  }
  out.params.beta0 = coef[0];
  out.params.beta_gain = coef[1];
  out.params.beta_loss = coef[2];
  out.params.lambda = -coef[2] / coef[1];
  if (!(coef[1] > 0.0)) {
    out.diag.warnings.push_back("NONMONOTONE: beta_gain <= 0, lambda not interpretable");
  }
  return out;
}

double iso_premium(const TemporalParams& params, double level, double delay) {
  const double scale = std::max({1.0, std::abs(params.b0), std::abs(params.bd)});
  if (std::abs(params.bp) < 1e-9 * scale) {
    throw Error(ErrorCode::DegenerateContour, "premium coefficient is zero; contours undefined");
  }
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::Domain, "contour level outside (0,1)");
  return (logit(level) - params.b0 - params.bd * delay) / params.bp;
}

std::vector<ContourLine> iso_contours(const TemporalParams& params, std::span<const double> levels,
                                      std::span<const double> delays) {
  std::vector<ContourLine> lines;
  for (double level : levels) {
    ContourLine line;
    line.level = level;
    for (double d : delays) {
      line.delay.push_back(d);
      line.premium.push_back(iso_premium(params, level, d));
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

TemporalFit fit_temporal_surface(std::span<const TemporalObservation> trials,
                                 std::span<const double> contour_levels) {
  const auto n = static_cast<Eigen::Index>(trials.size());
  std::vector<double> ds, rs;
  for (const auto& t : trials) {
    ds.push_back(t.pair.delay());
    rs.push_back(t.pair.premium());
  }
  if (distinct_count(ds) < 2 || distinct_count(rs) < 2) {
    throw Error(ErrorCode::InsufficientPoints, "temporal surface needs two distinct delays and premia");
  }
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = ds[static_cast<std::size_t>(i)];
    x(i, 2) = rs[static_cast<std::size_t>(i)];
    y[i] = trials[static_cast<std::size_t>(i)].chose_later ? 1.0 : 0.0;
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (is_linearly_separable(x.rightCols(2), y, w)) {
    throw Error(ErrorCode::Separation, "later/sooner choices perfectly separated");
  }
  const auto fit = fit_logistic(x, y, w);
  if (!fit.converged) throw Error(ErrorCode::NonConvergence, "temporal logit did not converge");

  TemporalFit out;
  out.params = {fit.coef[0], fit.coef[1], fit.coef[2]};
  out.diag = diagnostics_from(fit, trials.size());
  static constexpr std::array<double, 3> kDefaultLevels{0.25, 0.50, 0.75};
  const std::span<const double> levels =
      contour_levels.empty() ? std::span<const double>(kDefaultLevels) : contour_levels;
  const double dmax = *std::max_element(ds.begin(), ds.end());
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(dmax * i / 50.0);
  out.contours = iso_contours(out.params, levels, grid);
  return out;
}

CeEstimate extract_certainty_equivalent(std::span<const LadderRung> rungs) {
  if (rungs.size() < 2) throw Error(ErrorCode::InsufficientPoints, "ladder needs two rungs");
  for (std::size_t i = 0; i < rungs.size(); ++i) {
    if (rungs[i].total <= 0 || rungs[i].chose_sure < 0 || rungs[i].chose_sure > rungs[i].total) {
      throw Error(ErrorCode::Domain, "ladder rung counts invalid");
    }
    if (i > 0 && !(rungs[i].sure > rungs[i - 1].sure)) {
      throw Error(ErrorCode::Domain, "ladder sure amounts must ascend");
    }
  }

  // Monotone ladder: unanimous rungs switching once from lottery to sure.
  bool unanimous = true;
  for (const auto& r : rungs) unanimous &= (r.chose_sure == 0 || r.chose_sure == r.total);
  if (unanimous) {
    int switches = 0;
    for (std::size_t i = 1; i < rungs.size(); ++i) {
      switches += (rungs[i].chose_sure > 0) != (rungs[i - 1].chose_sure > 0);
    }
    const bool ascending_switch = switches <= 1 && (switches == 0 || rungs.back().chose_sure > 0);
    if (ascending_switch) {
      // Smallest accepted sure amount vs largest rejected one.
      std::size_t first_sure = rungs.size();
      for (std::size_t i = 0; i < rungs.size(); ++i) {
        if (rungs[i].chose_sure > 0) {
          first_sure = i;
          break;
        }
      }
      if (first_sure == 0) return {rungs.front().sure, CeMethod::Midpoint};  // at or below rung 1
      if (first_sure == rungs.size()) return {rungs.back().sure, CeMethod::Midpoint};
      return {0.5 * (rungs[first_sure - 1].sure + rungs[first_sure].sure), CeMethod::Midpoint};
    }
  }

  const auto m = static_cast<Eigen::Index>(rungs.size());
  Eigen::MatrixXd x(m, 2);
  Eigen::VectorXd y(m), w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& r = rungs[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    x(i, 1) = r.sure;
    y[i] = static_cast<double>(r.chose_sure) / r.total;
    w[i] = r.total;
  }
  if (is_linearly_separable(x.rightCols(1), y, w)) {
    throw Error(ErrorCode::Separation, "non-monotone ladder is separated; crossing undefined");
  }
  const auto fit = fit_logistic(x, y, w);
  if (!fit.converged || !(fit.coef[1] > 0.0)) {
    throw Error(ErrorCode::NonConvergence, "ladder logistic has no increasing crossing");
  }
  return {-fit.coef[0] / fit.coef[1], CeMethod::LogisticCrossing};
}

}  // namespace choicelab::models
