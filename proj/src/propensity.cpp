#include "imave/propensity.hpp"

#include <cmath>

#include "imave/error.hpp"

namespace imave {

namespace {

double clip_unit(double v) { return std::min(0.99, std::max(0.01, v)); }

}  // namespace

Eigen::VectorXd PropensityModel::predict_plus(const Eigen::MatrixXd& X) const {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd out(n);
  if (kind == Kind::Constant) {
    out.setConstant(clip_unit(constant));
    return out;
  }
  if (beta.size() != X.cols() + 1)
    fail(ErrorCode::InvalidDimension, "propensity model dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lin = beta(0) + X.row(i).dot(beta.tail(X.cols()));
    out(i) = clip_unit(1.0 / (1.0 + std::exp(-lin)));
  }
  return out;
}

Eigen::VectorXd PropensityModel::predict_observed(const Dataset& ds) const {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "observed-arm prediction is binary-only");
  Eigen::VectorXd plus = predict_plus(ds.X());
  Eigen::VectorXd out(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    out(i) = ds.T()(i) == 1 ? plus(i) : 1.0 - plus(i);
  return out;
}

namespace detail {

Eigen::VectorXd irls_step(const Eigen::MatrixXd& D, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta) {
  const Eigen::Index n = D.rows();
  Eigen::VectorXd mu(n), wgt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = 1.0 / (1.0 + std::exp(-D.row(i).dot(beta)));
    mu(i) = e;
    wgt(i) = std::max(e * (1.0 - e), 1e-10);
  }
  const Eigen::MatrixXd H = D.transpose() * wgt.asDiagonal() * D;
  const Eigen::VectorXd grad = D.transpose() * (y - mu);
  return beta + H.ldlt().solve(grad).eval();
}

}  // namespace detail

PropensityModel estimate_propensity(const Dataset& ds) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "propensity estimation is binary-only");
  const Eigen::Index n = ds.n();
  const int p = ds.p();

  // IRLS on the design [1, X] for P(T = +1 | X).
  Eigen::MatrixXd D(n, p + 1);
  D.col(0).setOnes();
  D.rightCols(p) = ds.X();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = ds.T()(i) == 1 ? 1.0 : 0.0;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  PropensityModel model;
  model.kind = PropensityModel::Kind::Logistic;

  for (int iter = 1; iter <= 100; ++iter) {
    const Eigen::VectorXd next = detail::irls_step(D, y, beta);
    const double step = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    model.iterations = iter;
    if (!beta.allFinite() || beta.norm() > 1e3) {
      PropensityModel fallback;
      fallback.kind = PropensityModel::Kind::Constant;
      fallback.constant = clip_unit(y.mean());
      fallback.separation_detected = true;
      fallback.iterations = iter;
      return fallback;
    }
    if (step < 1e-8) break;
  }
  model.beta = beta;
  return model;
}

}  // namespace imave
