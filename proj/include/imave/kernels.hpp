#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace imave {

enum class KernelFamily {
  Epanechnikov,  // c_d (1 - |u|^2)_+
  Quadratic,     // c_d (1 - |u|^2)^2_+   (biweight)
  Gaussian,      // (2*pi)^{-d/2} exp(-|u|^2 / 2); unbounded support
};

KernelFamily kernel_family_from_string(const std::string& name);
std::string kernel_family_to_string(KernelFamily family);

// Spherically symmetric kernel on R^d, normalized to integrate to one.
struct KernelSpec {
  KernelFamily family = KernelFamily::Epanechnikov;
  int dim = 1;

  KernelSpec() = default;
  KernelSpec(KernelFamily f, int d);

  // Normalizing constant c_d for the family at this dimension.
  double norm_constant() const { return norm_; }

  // K(u) as a function of |u|^2, including the normalizing constant.
  double profile(double r2) const;

  // Finite support radius in |u|, or +inf for Gaussian.
  double support_radius() const;

  // K_h(u) = h^{-d} K(u / h). Throws NonPositiveBandwidth for h <= 0.
  double eval(const Eigen::VectorXd& u, double h) const;

 private:
  double norm_ = 0.0;
};

// Deterministic bandwidth sequence: h_1 = max(c1 * n^{-rh}, floor) and
// h_t = max(shrink * h_{t-1}, floor) with shrink = n^{-rh/2} and
// floor = c3 * n^{-rh_prime}.
struct BandwidthSchedule {
  double c1 = 0.0;
  double c3 = 0.0;
  double rh = 0.0;        // in (0, 1/(p0 + 6)], p0 = max(p, 3)
  double rh_prime = 0.0;  // in (0, 1/(d + 3)]
  std::int64_t n = 0;

  // Defaults: rates at their upper bounds, c1 = c3 = 2.34 * sd_scale where
  // sd_scale is the average column sd of the projected predictors.
  static BandwidthSchedule defaults(std::int64_t n, int p, int d,
                                    double sd_scale);

  double floor_value() const;
  double shrink_factor() const;

  // h_t for t >= 1. Validates the rate ranges; throws InvalidArgument.
  double at(int t) const;
};

}  // namespace imave
