#pragma once

#include <Eigen/Dense>

namespace choicelab::models {

// Binomial logistic regression by Newton-Raphson with step halving.
// `design` rows are observations (include an intercept column if wanted);
// `response` holds success proportions in [0,1] and `weights` the trial
// counts behind each row, so aggregated and per-trial data fit identically.
struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd covariance;  // inverse observed information
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct LogisticOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
};

LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                         const Eigen::VectorXd& weights, const LogisticOptions& options = {});

double logistic_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                               const Eigen::VectorXd& weights, const Eigen::VectorXd& coef);

// Exact test for complete or quasi-complete linear separation of the two
// outcome classes (the condition under which the MLE does not exist).
// Supports one or two feature columns (no intercept column).
bool is_linearly_separable(const Eigen::MatrixXd& features, const Eigen::VectorXd& response,
                           const Eigen::VectorXd& weights);

// Hard-margin separating line for completely separated data in one or two
// features: returns (intercept, normal...) with unit-norm normal, oriented
// so that positive scores predict success. Limit direction of the
// vanishing-ridge logistic fit. Throws Separation when the classes touch
// (quasi-complete separation) and Domain when they are not separable.
struct MarginSeparator {
  Eigen::VectorXd coef;  // [intercept, normal_1, ..., normal_d]
  double margin = 0.0;   // half-width of the empty band
};

MarginSeparator max_margin_separator(const Eigen::MatrixXd& features,
                                     const Eigen::VectorXd& response);

}  // namespace choicelab::models
