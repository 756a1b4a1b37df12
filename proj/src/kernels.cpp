#include "imave/kernels.hpp"

#include <cmath>
#include <limits>

#include "imave/error.hpp"

namespace imave {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Volume of the unit ball in R^d.
double unit_ball_volume(int d) {
  return std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

double normalizer(KernelFamily family, int d) {
  const double vd = unit_ball_volume(d);
  switch (family) {
    case KernelFamily::Epanechnikov:
      // int_{|u|<1} (1-|u|^2) du = V_d * 2/(d+2)
      return (d + 2.0) / (2.0 * vd);
    case KernelFamily::Quadratic: {
      // int_{|u|<1} (1-|u|^2)^2 du = d*V_d * (1/d - 2/(d+2) + 1/(d+4))
      const double shell =
          d * vd * (1.0 / d - 2.0 / (d + 2.0) + 1.0 / (d + 4.0));
      return 1.0 / shell;
    }
    case KernelFamily::Gaussian:
      return std::pow(2.0 * kPi, -0.5 * d);
  }
  fail(ErrorCode::InvalidArgument, "unknown kernel family");
}

}  // namespace

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "epanechnikov") return KernelFamily::Epanechnikov;
  if (name == "quadratic") return KernelFamily::Quadratic;
  if (name == "gaussian") return KernelFamily::Gaussian;
  fail(ErrorCode::InvalidArgument, "unknown kernel family: " + name);
}

std::string kernel_family_to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Epanechnikov: return "epanechnikov";
    case KernelFamily::Quadratic: return "quadratic";
    case KernelFamily::Gaussian: return "gaussian";
  }
  return "unknown";
}

KernelSpec::KernelSpec(KernelFamily f, int d) : family(f), dim(d) {
  if (d < 1)
    fail(ErrorCode::InvalidDimension, "kernel dimension must be >= 1");
  norm_ = normalizer(f, d);
}

double KernelSpec::profile(double r2) const {
  switch (family) {
    case KernelFamily::Epanechnikov:
      return r2 >= 1.0 ? 0.0 : norm_ * (1.0 - r2);
    case KernelFamily::Quadratic: {
      if (r2 >= 1.0) return 0.0;
      const double t = 1.0 - r2;
      return norm_ * t * t;
    }
    case KernelFamily::Gaussian:
      return norm_ * std::exp(-0.5 * r2);
  }
  return 0.0;
}

double KernelSpec::support_radius() const {
  return family == KernelFamily::Gaussian
             ? std::numeric_limits<double>::infinity()
             : 1.0;
}

double KernelSpec::eval(const Eigen::VectorXd& u, double h) const {
  if (!(h > 0.0))
    fail(ErrorCode::NonPositiveBandwidth, "bandwidth must be positive");
  if (u.size() != dim)
    fail(ErrorCode::InvalidDimension, "kernel argument dimension mismatch");
  const double r2 = u.squaredNorm() / (h * h);
  return profile(r2) / std::pow(h, dim);
}

BandwidthSchedule BandwidthSchedule::defaults(std::int64_t n, int p, int d,
                                              double sd_scale) {
  if (n < 2) fail(ErrorCode::InvalidArgument, "schedule needs n >= 2");
  if (d < 1 || p < 1)
    fail(ErrorCode::InvalidDimension, "schedule needs p, d >= 1");
  if (!(sd_scale > 0.0))
    fail(ErrorCode::ConstantInput, "projected predictors have zero spread");
  const int p0 = std::max(p, 3);
  BandwidthSchedule s;
  s.n = n;
  s.rh = 1.0 / (p0 + 6.0);
  s.rh_prime = 1.0 / (d + 3.0);
  s.c1 = 2.34 * sd_scale;
  s.c3 = s.c1;
  return s;
}

double BandwidthSchedule::floor_value() const {
  return c3 * std::pow(static_cast<double>(n), -rh_prime);
}

double BandwidthSchedule::shrink_factor() const {
  return std::pow(static_cast<double>(n), -0.5 * rh);
}

double BandwidthSchedule::at(int t) const {
  if (t < 1) fail(ErrorCode::InvalidArgument, "bandwidth index starts at 1");
  if (!(rh > 0.0) || !(rh_prime > 0.0))
    fail(ErrorCode::InvalidArgument, "bandwidth rates must be positive");
  if (!(c1 > 0.0) || !(c3 > 0.0))
    fail(ErrorCode::NonPositiveBandwidth, "bandwidth constants must be positive");
  const double lo = floor_value();
  double h = std::max(c1 * std::pow(static_cast<double>(n), -rh), lo);
  const double r = shrink_factor();
  for (int k = 2; k <= t; ++k) h = std::max(r * h, lo);
  return h;
}

}  // namespace imave
