#include "imave/simulation.hpp"

#include <cmath>

#include "imave/error.hpp"
#include "imave/rng.hpp"

namespace imave {

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

int default_p(GShape s) { return s == GShape::TwoIndexGaussian ? 10 : 4; }

int index_count(GShape s) { return s == GShape::TwoIndexGaussian ? 2 : 1; }

// Generating directions on the raw (unnormalized) scale the contrast is
// defined with.
Eigen::MatrixXd raw_directions(GShape s, int p) {
  Eigen::MatrixXd B(p, index_count(s));
  B.col(0).setOnes();
  if (s == GShape::TwoIndexGaussian) {
    for (int r = 0; r < p; ++r) B(r, 1) = (r % 2 == 0) ? 1.0 : -1.0;
  }
  return B;
}

}  // namespace

GShape gshape_from_string(const std::string& name) {
  if (name == "linear") return GShape::Linear;
  if (name == "logistic") return GShape::Logistic;
  if (name == "gaussian") return GShape::Gaussian;
  if (name == "twoindex") return GShape::TwoIndexGaussian;
  fail(ErrorCode::InvalidArgument, "unknown scenario: " + name);
}

std::string gshape_to_string(GShape s) {
  switch (s) {
    case GShape::Linear: return "linear";
    case GShape::Logistic: return "logistic";
    case GShape::Gaussian: return "gaussian";
    case GShape::TwoIndexGaussian: return "twoindex";
  }
  return "unknown";
}

Eigen::VectorXd true_contrast(const ScenarioSpec& spec,
                              const Eigen::MatrixXd& X) {
  const int p = static_cast<int>(X.cols());
  const Eigen::MatrixXd B = raw_directions(spec.g_shape, p);
  const Eigen::VectorXd u1 = X * B.col(0);
  Eigen::VectorXd g(X.rows());
  switch (spec.g_shape) {
    case GShape::Linear:
      g = spec.tau * u1;
      break;
    case GShape::Logistic:
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        g(i) = spec.tau * (1.0 / (1.0 + std::exp(-u1(i))) - 0.5);
      break;
    case GShape::Gaussian:
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        g(i) = spec.tau * (std_normal_cdf(u1(i)) - 0.5);
      break;
    case GShape::TwoIndexGaussian: {
      const Eigen::VectorXd u2 = X * B.col(1);
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        g(i) = spec.tau * (std_normal_cdf(u1(i)) - 0.5) +
               spec.tau * (std_normal_cdf(u2(i)) - 0.5);
      break;
    }
  }
  return g;
}

GeneratedData generate_data(const ScenarioSpec& spec) {
  if (spec.n < 2) fail(ErrorCode::InvalidArgument, "need n >= 2");
  if (spec.sigma < 0.0) fail(ErrorCode::InvalidArgument, "sigma must be >= 0");
  const int p = spec.p > 0 ? spec.p : default_p(spec.g_shape);
  if (spec.g_shape == GShape::TwoIndexGaussian && p < 2)
    fail(ErrorCode::InvalidDimension, "two-index scenario needs p >= 2");

  Rng rng(derive_seed(spec.seed, {0xdadaULL}));
  Eigen::MatrixXd X(spec.n, p);
  for (int i = 0; i < spec.n; ++i)
    for (int c = 0; c < p; ++c) X(i, c) = rng.normal();

  Eigen::VectorXd prop_coeffs = spec.prop_coeffs;
  if (spec.propensity == PropensityDesign::LogisticAssign &&
      prop_coeffs.size() == 0) {
    prop_coeffs.resize(p);
    for (int c = 0; c < p; ++c)
      prop_coeffs(c) = (c % 2 == 0) ? 0.2 : -0.2;
  }
  if (prop_coeffs.size() != 0 && prop_coeffs.size() != p)
    fail(ErrorCode::InvalidArgument, "propensity coefficient length mismatch");

  std::vector<std::string> labels(spec.n);
  Eigen::VectorXd pi_observed(spec.n);
  Eigen::VectorXi tsign(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    double p_plus = 0.5;
    if (spec.propensity == PropensityDesign::LogisticAssign)
      p_plus = 1.0 / (1.0 + std::exp(-prop_coeffs.dot(X.row(i))));
    const int t = rng.sign_bernoulli(p_plus);
    tsign(i) = t;
    labels[i] = t == 1 ? "1" : "-1";
    pi_observed(i) = t == 1 ? p_plus : 1.0 - p_plus;
  }

  const Eigen::MatrixXd B_raw = raw_directions(spec.g_shape, p);
  const Eigen::VectorXd g_true = true_contrast(spec, X);
  const Eigen::VectorXd u1 = X * B_raw.col(0);
  const Eigen::VectorXd main_eff = (spec.gamma * u1.array()).square();

  Eigen::VectorXd Y(spec.n);
  for (int i = 0; i < spec.n; ++i)
    Y(i) = main_eff(i) + 0.5 * tsign(i) * g_true(i) +
           spec.sigma * rng.normal();

  Dataset ds(std::move(X), std::move(Y), std::move(labels),
             std::move(pi_observed));
  return GeneratedData{std::move(ds), g_true, main_eff,
                       grassmann_normalize(B_raw), B_raw};
}

}  // namespace imave
