#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/grassmann.hpp"
#include "imave/kernels.hpp"

namespace imave {

// Main-effect handling inside the alternating fit.
struct EtaMode {
  enum class Kind {
    Zero,           // eta = 0 (the basic estimator)
    SongPi,         // eta_i = (1 - 2 pi_+(X_i)) * g_i, refreshed per
                    // iteration from the previous iteration's local fits
    Fixed,          // user-supplied values, held fixed
    EstimatedStar,  // values from the efficient two-stage pipeline
  };
  Kind kind = Kind::Zero;
  Eigen::VectorXd values;  // Fixed / EstimatedStar

  static EtaMode zero() { return {Kind::Zero, {}}; }
  static EtaMode song_pi() { return {Kind::SongPi, {}}; }
  static EtaMode fixed(Eigen::VectorXd v) {
    return {Kind::Fixed, std::move(v)};
  }
  static EtaMode estimated_star(Eigen::VectorXd v) {
    return {Kind::EstimatedStar, std::move(v)};
  }
};

std::string eta_mode_name(EtaMode::Kind kind);

struct FitConfig {
  int max_iter = 50;
  double tol = 1e-6;  // Frobenius distance between canonicalized iterates
  KernelFamily kernel = KernelFamily::Epanechnikov;
  // Bandwidth-schedule overrides; defaults are data-driven (see
  // BandwidthSchedule::defaults).
  std::optional<double> c1, c3, rh, rh_prime;
  double ridge = 1e-8;  // scale of the conditioning fallback, lambda*tr/dim
  std::uint64_t seed = 0;
  int threads = 0;  // 0: IMAVE_THREADS env, then hardware
  bool standardize = false;
  // Smoother bandwidth overrides for the two-stage pipeline.
  std::optional<double> h_g, h_eta;
  bool disable_fast_paths = false;  // force the generic engine path (tests)
};

// Local linear approximation of the contrast at one anchor: value a and
// gradient b in the projected coordinates.
struct LocalFit {
  double a = 0.0;
  Eigen::VectorXd b;
  bool degenerate = false;  // fell back to nearest-anchor / ridge rescue
};

struct FitResult {
  IndexMatrix B;
  int d = 0;
  EtaMode eta;
  std::vector<LocalFit> local_fits;     // at the final B, one per sample row
  std::vector<double> loss_trace;       // approximating loss after each update
  std::vector<double> loss_pre_trace;   // same quadratic at the pre-update B
  std::vector<double> h_trace;          // bandwidth used at each iteration
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  std::string eta_mode_label;           // for serialization
};

// ---- Reference building blocks (dense; also the test oracle targets) ----

// Pairwise kernel weights w_ij = K_h(B'(X_i - X_j)); column j holds the
// weights of anchor j. Dense n x n; intended for small-n diagnostics/tests.
Eigen::MatrixXd kernel_weights(const Dataset& ds, const Eigen::MatrixXd& B,
                               KernelFamily family, double h);

// Weighted local-linear fit at anchor j: minimizes over (a, b)
//   sum_i w_i / pi_i * (Y_i - eta_i - c_i * (a + b'(B'X_i - B'X_j)))^2
// with c_i = T_i / 2. Gram regularized by +lambda*tr/dim*I when its
// condition number exceeds 1e12. Throws AllWeightsZero when no weight is
// positive.
LocalFit local_linear_fit(const Dataset& ds, const Eigen::MatrixXd& B,
                          std::int64_t j, const Eigen::VectorXd& eta,
                          const Eigen::VectorXd& w, double ridge = 1e-8);

// Global update of B given local fits: solves the weighted least squares in
// vec(B) with design rows c_i * (b_j (x) (X_i - X_j)), offsets c_i * a_j,
// responses Y_i - eta_i, and weights w_ij / pi_i. Dense reference version.
Eigen::MatrixXd update_B(const Dataset& ds, const std::vector<LocalFit>& fits,
                         const Eigen::MatrixXd& W, const Eigen::VectorXd& eta,
                         double ridge = 1e-8);

// Sample loss (1/n) sum_i (Y_i - T_i g_i / 2 - eta_i)^2 / pi_i.
double loss_eval(const Dataset& ds, const Eigen::VectorXd& g_values,
                 const Eigen::VectorXd& eta);

// Eta values for modes that do not depend on fit state (Zero/Fixed/
// EstimatedStar) or for SongPi given contrast values and pi_+.
Eigen::VectorXd resolve_eta(const Dataset& ds, const EtaMode& eta);
Eigen::VectorXd song_pi_eta(const Eigen::VectorXd& pi_plus,
                            const Eigen::VectorXd& g_values);

// ---- Estimators ----

// Index-free start: alternates the single-index expansion around zero
// (uniform-weight pass, then five kernel-reweighted passes); for d > 1 the
// remaining directions are top eigenvectors of the density-weighted gradient
// outer-product matrix deflated of the first column.
IndexMatrix initial_estimator(const Dataset& ds, int d, const EtaMode& eta,
                              const FitConfig& cfg = {});

// Full alternating fit. Requires propensities on ds.
FitResult imave_fit(const Dataset& ds, int d, const EtaMode& eta,
                    const FitConfig& cfg = {});

}  // namespace imave
