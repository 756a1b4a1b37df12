#pragma once

// Shared alternating-WLS engine behind imave_fit and multiarm_fit. One code
// path for every K: per-row coefficient vectors c_i (q = K-1) carry the
// contrast, and q = 1 with c_i = T_i/2 is the binary case.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/fit.hpp"
#include "imave/kernels.hpp"

namespace imave::detail {

struct EngineEta {
  EtaMode::Kind kind = EtaMode::Kind::Zero;
  Eigen::VectorXd values;   // current eta_i; zeros unless Fixed/EstimatedStar
  Eigen::VectorXd pi_plus;  // P(T=+1|X_i); SongPi refresh only (binary)
};

struct LocalFitQ {
  Eigen::VectorXd a;  // q
  Eigen::MatrixXd G;  // q x d Jacobian
  bool degenerate = false;
};

struct EngineOutput {
  Eigen::MatrixXd B;          // p x d, orthonormal, canonical signs
  Eigen::MatrixXd g_values;   // n x q contrast at each row (final anchors)
  std::vector<LocalFitQ> local_fits;
  std::vector<double> loss_trace;      // approximating loss at each update
  std::vector<double> loss_pre_trace;  // same quadratic at the pre-update B
  std::vector<double> h_trace;
  int iterations = 0;
  bool converged = false;
};

struct EngineInput {
  const Dataset* ds = nullptr;
  Eigen::MatrixXd C;        // n x q: c_i = (Omega Omega')^{-1} Omega_{.arm(i)}
  Eigen::VectorXd inv_pi;   // 1 / pi_i
  Eigen::MatrixXd B0;       // p x d orthonormal start
  BandwidthSchedule sched;
  EngineEta eta;
  KernelFamily kernel = KernelFamily::Epanechnikov;
  int max_iter = 50;
  double tol = 1e-6;
  double ridge = 1e-8;
  int workers = 1;
  bool all_pairs = false;  // disable the sorted-window d=1 neighbor path
};

EngineOutput run_engine(const EngineInput& in);

// Condition-guarded symmetric solve: adds ridge*trace/dim to the diagonal
// when cond(A) > 1e12 (or A is numerically singular). Returns whether the
// ridge fired.
bool guarded_solve(Eigen::MatrixXd A, const Eigen::VectorXd& b, double ridge,
                   Eigen::VectorXd* out);

// Average column sd of X * B; bandwidth scale for schedules.
double projected_sd_scale(const Eigen::MatrixXd& X, const Eigen::MatrixXd& B);

// Builds C (n x q) from the dataset arms and a contrast.
Eigen::MatrixXd arm_coefficient_rows(const Dataset& ds,
                                     const ContrastSpec& spec);

// q-dimensional initial estimator; eta must be pre-resolved to values.
Eigen::MatrixXd initial_direction_matrix(const Dataset& ds,
                                         const Eigen::MatrixXd& C,
                                         const Eigen::VectorXd& inv_pi,
                                         const Eigen::VectorXd& eta_values,
                                         int d, KernelFamily kernel,
                                         double ridge);

// The two closed-form solves inside the initial estimator, exposed so each
// can be checked against an independent dense least-squares oracle.
// beta step: responses yc_i on design (c_i'J) * X_i, weights wts_i / pi_i.
Eigen::VectorXd initial_beta_step(const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& C,
                                  const Eigen::VectorXd& inv_pi,
                                  const Eigen::VectorXd& yc,
                                  const Eigen::VectorXd& J,
                                  const Eigen::VectorXd& wts, double ridge);
// J step: responses yc_i on design (beta'X_i) * c_i, same weights.
Eigen::VectorXd initial_j_step(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& C,
                               const Eigen::VectorXd& inv_pi,
                               const Eigen::VectorXd& yc,
                               const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& wts, double ridge);
// Gradient step at anchor row j: responses yc_i on design
// (c_i'J) * [1, (X_i - X_j)'], weights wts_i / pi_i. Returns the (1+p)
// coefficient vector; tail(p) is the local contrast gradient at X_j.
Eigen::VectorXd initial_opg_step(const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& C,
                                 const Eigen::VectorXd& inv_pi,
                                 const Eigen::VectorXd& yc,
                                 const Eigen::VectorXd& J,
                                 const Eigen::VectorXd& wts,
                                 Eigen::Index anchor, double ridge);

// Complete engine input for a fit: coefficients, eta state, initial B, and
// the bandwidth schedule with overrides applied. Shared by the binary and
// multi-arm entry points so K = 2 runs identical arithmetic through both.
EngineInput build_engine_input(const Dataset& ds, const ContrastSpec& spec,
                               int d, const EtaMode& eta,
                               const FitConfig& cfg);

}  // namespace imave::detail
