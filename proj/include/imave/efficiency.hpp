#pragma once

#include <Eigen/Dense>

#include "imave/dataset.hpp"
#include "imave/fit.hpp"

namespace imave {

// Nadaraya-Watson estimate of the contrast g on the fitted index scale:
// ghat(x) = sum_i w_i Y_i K_h(B'(X_i - x)) / sum_i K_h(B'(X_i - x)) with
// w_i = T_i / pi_i. Queries with an empty kernel neighborhood fall back to
// the nearest training projection (flagged per query).
struct GEstimate {
  IndexMatrix B;
  double h = 0.0;
  KernelFamily family = KernelFamily::Epanechnikov;
  Eigen::MatrixXd train_Z;   // n x d projected training predictors
  Eigen::VectorXd train_wy;  // w_i Y_i
  mutable std::int64_t fallbacks = 0;

  double eval(const Eigen::VectorXd& x_projected) const;
  // Rows of X projected through B, evaluated in parallel-safe slots.
  Eigen::VectorXd eval_batch(const Eigen::MatrixXd& X, int threads = 0) const;
};

// Main-effect estimate eta*(x) on the full predictor scale, smoothing
// plug-in residuals with a p-dimensional kernel. Same fallback rule.
struct EtaStarEstimate {
  double h = 0.0;
  KernelFamily family = KernelFamily::Epanechnikov;
  Eigen::MatrixXd train_X;
  Eigen::VectorXd train_eps;
  mutable std::int64_t fallbacks = 0;

  double eval(const Eigen::VectorXd& x) const;
  Eigen::VectorXd eval_batch(const Eigen::MatrixXd& X, int threads = 0) const;
};

// Builds the contrast smoother from a fitted index. Default bandwidth
// 2.34 * n^{-1/(d+4)} * (average sd of the projected columns); override via
// h. Binary datasets with propensities only.
GEstimate predict_g(const Dataset& ds, const FitResult& fit,
                    std::optional<double> h = std::nullopt,
                    KernelFamily family = KernelFamily::Epanechnikov);

// Plug-in residuals eps_i = Y_i - T_i ghat(B'X_i) / 2.
Eigen::VectorXd residuals(const Dataset& ds, const GEstimate& ghat,
                          int threads = 0);

// Smooths residuals into eta*(x); default bandwidth
// 2.34 * n^{-1/(p+4)} * (average sd of the predictor columns).
EtaStarEstimate estimate_eta_star(const Dataset& ds,
                                  const Eigen::VectorXd& eps,
                                  std::optional<double> h = std::nullopt,
                                  KernelFamily family =
                                      KernelFamily::Epanechnikov);

struct Imave2Result {
  FitResult stage1;  // eta = 0 fit
  FitResult fit;     // final fit with eta = eta*
  Eigen::VectorXd eta_star;  // eta* at the sample points
  std::int64_t smoother_fallbacks = 0;
};

// Two-stage efficient pipeline: stage-1 fit with eta = 0, contrast smoother,
// plug-in residuals, p-dimensional residual smoother, then a full re-fit
// (including the initial estimator) with eta = eta*.
Imave2Result imave2_fit(const Dataset& ds, int d, const FitConfig& cfg = {});

}  // namespace imave
