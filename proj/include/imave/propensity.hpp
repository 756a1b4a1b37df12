#pragma once

#include <Eigen/Dense>

#include "imave/dataset.hpp"

namespace imave {

// Propensity of the positively-coded arm, pi_+(x) = P(T = +1 | X = x),
// either a fitted logistic model or a constant fallback.
struct PropensityModel {
  enum class Kind { Logistic, Constant };
  Kind kind = Kind::Constant;
  Eigen::VectorXd beta;   // [intercept, slopes]; Logistic only
  double constant = 0.5;  // Constant only
  bool separation_detected = false;
  int iterations = 0;

  // pi_+ for each row of X, clipped to [0.01, 0.99].
  Eigen::VectorXd predict_plus(const Eigen::MatrixXd& X) const;

  // Propensity of each row's observed arm (binary only).
  Eigen::VectorXd predict_observed(const Dataset& ds) const;
};

// Logistic MLE of P(T = +1 | X) via iteratively reweighted least squares on
// the design [1, X]; stops when the max-abs coefficient step drops below
// 1e-8 or after 100 iterations. If the coefficient norm exceeds 1e3
// (quasi-separation), returns the constant-rate fallback with
// separation_detected set. Binary datasets only (NotBinary otherwise).
PropensityModel estimate_propensity(const Dataset& ds);

namespace detail {

// One IRLS update from beta: beta + (D'WD)^{-1} D'(y - mu) with
// mu = logistic(D beta) and W = diag(mu(1-mu)) floored at 1e-10. Equals the
// weighted least squares of the working response on D; exposed so the solve
// can be checked against an independent dense oracle.
Eigen::VectorXd irls_step(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta);

}  // namespace detail

}  // namespace imave
