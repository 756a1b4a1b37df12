#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include "imave/dataset.hpp"
#include "imave/grassmann.hpp"

namespace imave {

// Contrast shapes for synthetic benchmarks. Single-index shapes use
// u = beta'X with beta = (1,..,1) in p = 4 by default; TwoIndexGaussian uses
// p = 10 with a sum of two probit-style indices.
enum class GShape { Linear, Logistic, Gaussian, TwoIndexGaussian };

GShape gshape_from_string(const std::string& name);
std::string gshape_to_string(GShape s);

enum class PropensityDesign { Balanced, LogisticAssign };

struct ScenarioSpec {
  GShape g_shape = GShape::Linear;
  int n = 500;
  int p = 0;           // 0: shape default (4, or 10 for TwoIndexGaussian)
  double tau = 7.0;    // contrast amplitude
  double gamma = 1.0;  // main-effect scale; 0 disables the main effect
  double sigma = 0.6;  // noise sd; 0 disables noise
  PropensityDesign propensity = PropensityDesign::Balanced;
  // LogisticAssign: P(T=+1|X) = logistic(coeffs'X); default
  // (0.2, -0.2, 0.2, -0.2, ...) cycled to length p, no intercept.
  Eigen::VectorXd prop_coeffs;
  std::uint64_t seed = 0;
};

struct GeneratedData {
  Dataset ds;                // pi filled with the true propensities
  Eigen::VectorXd g_true;    // contrast at each row
  Eigen::VectorXd main_eff;  // main effect at each row
  IndexMatrix B0;            // orthonormalized true index matrix
  Eigen::MatrixXd B_raw;     // generating directions (p x d, unnormalized)
};

// Y = (gamma * b1'X)^2 + T * g(X) / 2 + sigma * N(0,1), X ~ N(0, I_p).
// Identical output for a given spec across platforms (own RNG).
GeneratedData generate_data(const ScenarioSpec& spec);

// True contrast values for external rows (e.g. a test grid).
Eigen::VectorXd true_contrast(const ScenarioSpec& spec,
                              const Eigen::MatrixXd& X);

}  // namespace imave
