#pragma once

#include <Eigen/Dense>
#include <optional>

#include "imave/dataset.hpp"

namespace imave {

// Spearman rank correlation: Pearson correlation of average ranks (ties get
// the mean of their positions). Throws ConstantInput when either side has a
// single distinct value. Sizes must match and be >= 2.
double rank_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Kendall tau-b; alternative rank metric behind a flag (O(n^2), fine for
// n <= 1e4).
double kendall_tau(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Fraction of rows where sign(pred) == sign(truth), with sign(0) = +1.
double classification_rate(const Eigen::VectorXd& pred,
                           const Eigen::VectorXd& truth);

// Mean outcome difference between arms among the rows a rule sends to each
// arm. A side with an empty arm cell yields a missing value (EmptyCell is
// reported, not thrown).
struct BenefitMetrics {
  // Each delta is mean Y at the recommended arm minus mean Y at the other
  // arm, within the rows the rule sends to that side; a helpful rule makes
  // both positive.
  std::optional<double> delta_plus;   // rule = +1 rows: mean Y(T=+1) - mean Y(T=-1)
  std::optional<double> delta_minus;  // rule = -1 rows: mean Y(T=-1) - mean Y(T=+1)
  std::optional<double> se_plus;
  std::optional<double> se_minus;
  double frac_plus = 0.0;   // fraction of rows the rule sends to +1
  double frac_minus = 0.0;
};

// rule holds +-1 per row; binary datasets only.
BenefitMetrics benefit_metrics(const Dataset& ds, const Eigen::VectorXi& rule);

}  // namespace imave
