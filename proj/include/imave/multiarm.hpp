#pragma once

#include <Eigen/Dense>

#include "imave/dataset.hpp"
#include "imave/fit.hpp"

namespace imave {

// Fit of the vector contrast g = Omega m under a general contrast matrix,
// sharing one index space across the K-1 contrast coordinates.
struct MultiArmModel {
  ContrastSpec spec;
  IndexMatrix B;
  Eigen::MatrixXd g_values;  // n x (K-1): fitted contrast at each sample row
  std::vector<double> loss_trace;
  std::vector<double> h_trace;
  int iterations = 0;
  bool converged = false;
  int d = 0;
};

// Same alternating scheme as the binary fit with per-arm coefficients
// c_t = (Omega Omega')^{-1} Omega_{.t}. With K = 2 and the default contrast
// this runs the identical engine path as imave_fit (c = +-1/2). Requires
// propensities of the observed arm on ds. SongPi eta is binary-only.
MultiArmModel multiarm_fit(const Dataset& ds, const ContrastSpec& spec, int d,
                           const EtaMode& eta = EtaMode::zero(),
                           const FitConfig& cfg = {});

}  // namespace imave
