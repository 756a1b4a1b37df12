#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace imave {

// Contrast matrix Omega ((K-1) x K) defining the estimand for K arms.
// Rows sum to zero and Omega * Omega' is invertible. K = 2 defaults to
// Omega = (1, -1), the treatment-minus-control contrast.
struct ContrastSpec {
  Eigen::MatrixXd omega;

  int arms() const { return static_cast<int>(omega.cols()); }
  int contrasts() const { return static_cast<int>(omega.rows()); }

  static ContrastSpec default_binary();
  static ContrastSpec validated(const Eigen::MatrixXd& omega);

  // Per-arm regression coefficients c_t = (Omega Omega')^{-1} Omega_{.t};
  // for the default binary contrast these are exactly +-1/2.
  Eigen::MatrixXd arm_coefficients() const;  // (K-1) x K
};

// Immutable modeling frame. Treatments are recoded internally: binary data
// uses {-1, +1} (second sorted label maps to +1) and K > 2 uses {1..K} in
// sorted label order. pi holds the propensity of each row's observed arm and
// may be empty until filled from a known design or an estimate.
class Dataset {
 public:
  // Throws on non-finite values, fewer than two distinct arms, size
  // mismatches, or propensities outside (0, 1).
  Dataset(Eigen::MatrixXd X, Eigen::VectorXd Y,
          std::vector<std::string> treatment_labels,
          Eigen::VectorXd pi = Eigen::VectorXd());

  std::int64_t n() const { return X_.rows(); }
  int p() const { return static_cast<int>(X_.cols()); }
  int arms() const { return arms_; }
  bool binary() const { return arms_ == 2; }
  bool has_propensity() const { return pi_.size() == n(); }

  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::VectorXd& Y() const { return Y_; }
  const Eigen::VectorXi& T() const { return T_; }
  const Eigen::VectorXd& pi() const;

  // 1-based arm index of row i (binary: +1 -> 1, -1 -> 2).
  int arm_of(std::int64_t i) const;

  // Original label for an internal code.
  const std::string& label_of_code(int code) const;
  // Distinct labels in sorted order.
  const std::vector<std::string>& labels() const { return labels_; }

  // Copy with the propensity vector replaced (validated).
  Dataset with_propensity(Eigen::VectorXd pi) const;

  // Row subset (indices into [0, n)); keeps pi when present. Throws
  // DegenerateTreatment if the subset loses an arm.
  Dataset subset(const std::vector<std::int64_t>& rows) const;

 private:
  Dataset() = default;
  Eigen::MatrixXd X_;
  Eigen::VectorXd Y_;
  Eigen::VectorXi T_;
  Eigen::VectorXd pi_;
  int arms_ = 0;
  std::vector<std::string> labels_;  // distinct labels, sorted ascending
};

// Per-row weight vector w_T = Omega_{.T} / pi for one row's arm and
// propensity; binary gives T/pi as a length-1 vector.
Eigen::VectorXd contrast_weights(const ContrastSpec& spec, int arm, double pi);

}  // namespace imave
