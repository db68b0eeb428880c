#include "choicelab/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "choicelab/error.hpp"

namespace choicelab::models {
namespace {

double softplus(double eta) { return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))); }

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

void check_shapes(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                  const Eigen::VectorXd& weights) {
  if (design.rows() != response.size() || design.rows() != weights.size()) {
    throw Error(ErrorCode::Domain, "design, response and weights disagree in length");
  }
  if (design.rows() == 0) throw Error(ErrorCode::Empty, "no observations");
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    if (!(response[i] >= 0.0 && response[i] <= 1.0) || !(weights[i] >= 0.0)) {
      throw Error(ErrorCode::Domain, "response must be in [0,1] with nonnegative weights");
    }
  }
}

// Unique feature points with accumulated success/failure mass.
struct Point {
  std::vector<double> x;
  bool has_success = false;
  bool has_failure = false;
};

std::vector<Point> unique_points(const Eigen::MatrixXd& features, const Eigen::VectorXd& response,
                                 const Eigen::VectorXd& weights) {
  std::map<std::vector<double>, Point> table;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (weights[i] <= 0.0) continue;
    std::vector<double> key(features.cols());
    for (Eigen::Index j = 0; j < features.cols(); ++j) key[j] = features(i, j);
    auto& pt = table[key];
    pt.x = key;
    if (response[i] > 0.0) pt.has_success = true;
    if (response[i] < 1.0) pt.has_failure = true;
  }
  std::vector<Point> out;
  out.reserve(table.size());
  for (auto& [key, pt] : table) out.push_back(std::move(pt));
  return out;
}

// Does the oriented score s(x) = n.x - c weakly separate the classes with at
// least one point strictly off the boundary?
template <typename Score>
bool weakly_separates(const std::vector<Point>& pts, Score score, double eps) {
  bool strict = false;
  for (const auto& pt : pts) {
    const double s = score(pt.x);
    if (pt.has_success && s < -eps) return false;
    if (pt.has_failure && s > eps) return false;
    if (std::abs(s) > eps) strict = true;
  }
  return strict;
}

double feature_scale(const std::vector<Point>& pts) {
  double scale = 1.0;
  for (const auto& pt : pts)
    for (double v : pt.x) scale = std::max(scale, std::abs(v));
  return scale;
}

bool separable_1d(const std::vector<Point>& pts, double eps) {
  // Candidate thresholds are the data values themselves.
  for (const auto& anchor : pts) {
    const double c = anchor.x[0];
    for (double sign : {1.0, -1.0}) {
      if (weakly_separates(pts, [&](const std::vector<double>& x) { return sign * (x[0] - c); },
                           eps)) {
        return true;
      }
    }
  }
  return false;
}

bool separable_2d(const std::vector<Point>& pts, double eps) {
  // A weakly separating line can be rotated about data points until it
  // passes through two of them, so lines through point pairs are exhaustive
  // unless every point is collinear (then the 1-D test along the line).
  bool any_pair = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double dx = pts[j].x[0] - pts[i].x[0];
      const double dy = pts[j].x[1] - pts[i].x[1];
      const double nx = -dy, ny = dx;
      const double c = nx * pts[i].x[0] + ny * pts[i].x[1];
      for (double sign : {1.0, -1.0}) {
        auto score = [&](const std::vector<double>& x) { return sign * (nx * x[0] + ny * x[1] - c); };
        if (weakly_separates(pts, score, eps)) return true;
      }
      any_pair = true;
    }
  }
  if (!any_pair) return false;
  // Collinear fallback: project onto the direction of the first pair.
  const double dx = pts[1].x[0] - pts[0].x[0];
  const double dy = pts[1].x[1] - pts[0].x[1];
  for (const auto& pt : pts) {
    const double cross = dx * (pt.x[1] - pts[0].x[1]) - dy * (pt.x[0] - pts[0].x[0]);
    if (std::abs(cross) > eps) return false;
  }
  std::vector<Point> projected = pts;
  for (auto& pt : projected) pt.x = {dx * pt.x[0] + dy * pt.x[1]};
  return separable_1d(projected, eps * (std::abs(dx) + std::abs(dy) + 1.0));
}

}  // namespace

double logistic_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                               const Eigen::VectorXd& weights, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eta = design * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += weights[i] * (response[i] * eta[i] - softplus(eta[i]));
  }
  return ll;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                         const Eigen::VectorXd& weights, const LogisticOptions& options) {
  check_shapes(design, response, weights);
  const Eigen::Index k = design.cols();

  // Column scaling for conditioning; coefficients are mapped back at the end.
  Eigen::VectorXd scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double m = design.col(j).cwiseAbs().maxCoeff();
    scale[j] = m > 0.0 ? m : 1.0;
  }
  const Eigen::MatrixXd z = design * scale.cwiseInverse().asDiagonal();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double ll = logistic_log_likelihood(z, response, weights, beta);
  const double total_weight = weights.sum();

  LogisticFit fit;
  Eigen::MatrixXd hessian(k, k);
  Eigen::VectorXd grad(k);
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd eta = z * beta;
    Eigen::VectorXd resid(eta.size()), curv(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double p = sigmoid(eta[i]);
      resid[i] = weights[i] * (response[i] - p);
      curv[i] = weights[i] * p * (1.0 - p);
    }
    grad = z.transpose() * resid;
    hessian = z.transpose() * curv.asDiagonal() * z;
    fit.iterations = it;
    fit.gradient_norm = (grad.array() / scale.array()).matrix().norm();
    if (fit.gradient_norm < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
      break;  // singular information: leave converged = false
    }
    Eigen::VectorXd step = ldlt.solve(grad);
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      const Eigen::VectorXd trial = beta + step;
      const double ll_trial = logistic_log_likelihood(z, response, weights, trial);
      if (ll_trial >= ll - 1e-13 * std::max(1.0, std::abs(ll))) {
        improved = ll_trial > ll || step.norm() < 1e-14 * (1.0 + beta.norm());
        beta = trial;
        ll = std::max(ll, ll_trial);
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      // Numerical floor: no further ascent available in double precision.
      fit.converged = fit.gradient_norm < 1e-6 * std::max(1.0, total_weight);
      fit.iterations = it + 1;
      break;
    }
    fit.iterations = it + 1;
  }

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
  fit.coef = scale.cwiseInverse().asDiagonal() * beta;
  const Eigen::MatrixXd cov_z = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  fit.covariance = scale.cwiseInverse().asDiagonal() * cov_z * scale.cwiseInverse().asDiagonal();
  fit.log_likelihood = logistic_log_likelihood(design, response, weights, fit.coef);
  return fit;
}

bool is_linearly_separable(const Eigen::MatrixXd& features, const Eigen::VectorXd& response,
                           const Eigen::VectorXd& weights) {
  check_shapes(features, response, weights);
  const auto pts = unique_points(features, response, weights);
  bool any_success = false, any_failure = false;
  for (const auto& pt : pts) {
    any_success |= pt.has_success;
    any_failure |= pt.has_failure;
  }
  if (!any_success || !any_failure) return true;  // single class
  const double scale = feature_scale(pts);
  switch (features.cols()) {
    case 1: return separable_1d(pts, 1e-12 * scale);
    case 2: return separable_2d(pts, 1e-12 * scale * scale);
    default: throw Error(ErrorCode::Domain, "separation test supports one or two features");
  }
}

MarginSeparator max_margin_separator(const Eigen::MatrixXd& features,
                                     const Eigen::VectorXd& response) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(response.size());
  const auto pts = unique_points(features, response, ones);
  std::vector<const Point*> pos, neg;
  for (const auto& pt : pts) {
    if (pt.has_success && pt.has_failure) {
      throw Error(ErrorCode::Separation, "classes overlap at a design point (quasi-complete)");
    }
    (pt.has_success ? pos : neg).push_back(&pt);
  }
  if (pos.empty() || neg.empty()) throw Error(ErrorCode::Separation, "single outcome class");

  const auto d = features.cols();
  auto gap = [&](const Eigen::VectorXd& normal, double* lo_pos, double* hi_neg) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto* p : pos) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) s += normal[j] * p->x[j];
      lo = std::min(lo, s);
    }
    for (const auto* p : neg) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) s += normal[j] * p->x[j];
      hi = std::max(hi, s);
    }
    if (lo_pos) *lo_pos = lo;
    if (hi_neg) *hi_neg = hi;
    return 0.5 * (lo - hi);
  };

  Eigen::VectorXd normal(d);
  if (d == 1) {
    normal << 1.0;
    if (gap(normal, nullptr, nullptr) <= 0.0) normal << -1.0;
  } else if (d == 2) {
    auto dir = [](double theta) {
      Eigen::VectorXd n(2);
      n << std::cos(theta), std::sin(theta);
      return n;
    };
    // The margin is a minimum of sinusoids in the angle: concave on the arc
    // where it is positive. Locate that arc from a coarse scan, then refine.
    constexpr int kScan = 3600;
    double best_theta = 0.0, best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < kScan; ++i) {
      const double theta = 2.0 * std::numbers::pi * i / kScan;
      const double m = gap(dir(theta), nullptr, nullptr);
      if (m > best) {
        best = m;
        best_theta = theta;
      }
    }
    if (best <= 0.0) {
      throw Error(ErrorCode::Separation, "classes touch; no positive-margin separator");
    }
    double lo = best_theta - 2.0 * std::numbers::pi / kScan;
    double hi = best_theta + 2.0 * std::numbers::pi / kScan;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double a = hi - inv_phi * (hi - lo);
      const double b = lo + inv_phi * (hi - lo);
      if (gap(dir(a), nullptr, nullptr) < gap(dir(b), nullptr, nullptr)) {
        lo = a;
      } else {
        hi = b;
      }
    }
    normal = dir(0.5 * (lo + hi));
  } else {
    throw Error(ErrorCode::Domain, "max-margin separator supports one or two features");
  }

  double lo_pos = 0.0, hi_neg = 0.0;
  const double margin = gap(normal, &lo_pos, &hi_neg);
  if (margin <= 0.0) throw Error(ErrorCode::Separation, "classes touch; no positive-margin separator");
  MarginSeparator out;
  out.margin = margin;
  out.coef.resize(d + 1);
  out.coef[0] = -0.5 * (lo_pos + hi_neg);
  out.coef.tail(d) = normal;
  return out;
}

}  // namespace choicelab::models
