#include "imave/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "imave/error.hpp"

namespace imave {

ContrastSpec ContrastSpec::default_binary() {
  Eigen::MatrixXd omega(1, 2);
  omega << 1.0, -1.0;
  return validated(omega);
}

ContrastSpec ContrastSpec::validated(const Eigen::MatrixXd& omega) {
  if (omega.rows() < 1 || omega.cols() != omega.rows() + 1)
    fail(ErrorCode::InvalidArgument,
         "contrast matrix must be (K-1) x K with K >= 2");
  if (!omega.allFinite())
    fail(ErrorCode::NonFiniteValue, "contrast matrix has non-finite entries");
  for (Eigen::Index r = 0; r < omega.rows(); ++r) {
    if (std::abs(omega.row(r).sum()) > 1e-12)
      fail(ErrorCode::InvalidArgument,
           "contrast rows must sum to zero (row " + std::to_string(r) + ")");
  }
  const Eigen::MatrixXd gram = omega * omega.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.eigenvalues()(0) <= 1e-10)
    fail(ErrorCode::RankDeficient,
         "contrast matrix has numerically dependent rows");
  ContrastSpec spec;
  spec.omega = omega;
  return spec;
}

Eigen::MatrixXd ContrastSpec::arm_coefficients() const {
  const Eigen::MatrixXd gram = omega * omega.transpose();
  return gram.ldlt().solve(omega);
}

Eigen::VectorXd contrast_weights(const ContrastSpec& spec, int arm,
                                 double pi) {
  if (arm < 1 || arm > spec.arms())
    fail(ErrorCode::InvalidLevel,
         "arm index " + std::to_string(arm) + " outside 1.." +
             std::to_string(spec.arms()));
  if (!(pi > 0.0) || !(pi < 1.0))
    fail(ErrorCode::PropensityOutOfRange, "propensity must lie in (0, 1)");
  return spec.omega.col(arm - 1) / pi;
}

namespace {

void check_propensity(const Eigen::VectorXd& pi, Eigen::Index n) {
  if (pi.size() == 0) return;
  if (pi.size() != n)
    fail(ErrorCode::InvalidArgument, "propensity length mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(pi(i)))
      fail(ErrorCode::NonFiniteValue, "propensity has non-finite entries");
    if (!(pi(i) > 0.0) || !(pi(i) < 1.0))
      fail(ErrorCode::PropensityOutOfRange,
           "propensity outside (0, 1) at row " + std::to_string(i));
  }
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd X, Eigen::VectorXd Y,
                 std::vector<std::string> treatment_labels,
                 Eigen::VectorXd pi) {
  const Eigen::Index n = X.rows();
  if (n < 2) fail(ErrorCode::InvalidArgument, "need at least two rows");
  if (X.cols() < 1) fail(ErrorCode::InvalidArgument, "need at least one predictor");
  if (Y.size() != n || static_cast<Eigen::Index>(treatment_labels.size()) != n)
    fail(ErrorCode::InvalidArgument, "X, Y, T row counts differ");
  if (!X.allFinite() || !Y.allFinite())
    fail(ErrorCode::NonFiniteValue, "X or Y has non-finite entries");
  check_propensity(pi, n);

  std::set<std::string> distinct(treatment_labels.begin(),
                                 treatment_labels.end());
  if (distinct.size() < 2)
    fail(ErrorCode::DegenerateTreatment,
         "treatment has fewer than two observed arms");
  labels_.assign(distinct.begin(), distinct.end());
  arms_ = static_cast<int>(labels_.size());

  std::map<std::string, int> code;
  if (arms_ == 2) {
    code[labels_[0]] = -1;  // first sorted label is the reference arm
    code[labels_[1]] = +1;
  } else {
    for (int k = 0; k < arms_; ++k) code[labels_[k]] = k + 1;
  }
  T_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) T_(i) = code[treatment_labels[i]];

  X_ = std::move(X);
  Y_ = std::move(Y);
  pi_ = std::move(pi);
}

const Eigen::VectorXd& Dataset::pi() const {
  if (!has_propensity())
    fail(ErrorCode::InvalidArgument,
         "propensities not set; supply pi or estimate it first");
  return pi_;
}

int Dataset::arm_of(std::int64_t i) const {
  const int t = T_(i);
  if (arms_ == 2) return t == 1 ? 1 : 2;
  return t;
}

const std::string& Dataset::label_of_code(int t) const {
  if (arms_ == 2) {
    if (t == -1) return labels_[0];
    if (t == 1) return labels_[1];
    fail(ErrorCode::InvalidLevel, "binary codes are -1/+1");
  }
  if (t < 1 || t > arms_) fail(ErrorCode::InvalidLevel, "arm code out of range");
  return labels_[t - 1];
}

Dataset Dataset::with_propensity(Eigen::VectorXd pi) const {
  check_propensity(pi, n());
  if (pi.size() != n())
    fail(ErrorCode::InvalidArgument, "propensity length mismatch");
  Dataset out = *this;
  out.pi_ = std::move(pi);
  return out;
}

Dataset Dataset::subset(const std::vector<std::int64_t>& rows) const {
  if (rows.size() < 2)
    fail(ErrorCode::InvalidArgument, "subset needs at least two rows");
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(m, p());
  Eigen::VectorXd Y(m);
  Eigen::VectorXd pi(has_propensity() ? m : 0);
  std::vector<std::string> labels(m);
  std::set<int> seen;
  for (Eigen::Index k = 0; k < m; ++k) {
    const std::int64_t i = rows[k];
    if (i < 0 || i >= n())
      fail(ErrorCode::InvalidArgument, "subset row index out of range");
    X.row(k) = X_.row(i);
    Y(k) = Y_(i);
    if (pi.size() > 0) pi(k) = pi_(i);
    labels[k] = label_of_code(T_(i));
    seen.insert(T_(i));
  }
  if (seen.size() != static_cast<std::size_t>(arms_))
    fail(ErrorCode::DegenerateTreatment, "subset loses a treatment arm");
  return Dataset(std::move(X), std::move(Y), std::move(labels),
                 std::move(pi));
}

}  // namespace imave
