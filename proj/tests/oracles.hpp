#pragma once

// Independent reference implementations the tests check the library against.
// Everything here is deliberately brute force (SVD least squares, tensor-grid
// quadrature, rank-by-counting, group-by loops) and shares no code with src/.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/kernels.hpp"
#include "imave/rng.hpp"

namespace oracle {

// argmin_theta sum_i w_i (y_i - Phi.row(i) * theta)^2, solved by thin SVD of
// the sqrt(w)-scaled design (minimum-norm solution when rank deficient).
inline Eigen::VectorXd wls_solve(const Eigen::MatrixXd& Phi,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w) {
  Eigen::MatrixXd A = Phi;
  Eigen::VectorXd b = y;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double s = std::sqrt(w(i));
    A.row(i) *= s;
    b(i) *= s;
  }
  return A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
}

// Tensor-grid trapezoid integral of K_h over a box covering the support
// ([-1.02h, 1.02h]^d for compact kernels, [-8h, 8h]^d for Gaussian).
inline double kernel_integral(imave::KernelFamily family, int d, double h,
                              int points_per_axis) {
  const imave::KernelSpec spec(family, d);
  const double radius = spec.support_radius();
  const double half = std::isfinite(radius) ? 1.02 * radius * h : 8.0 * h;
  const int m = points_per_axis;
  const double step = 2.0 * half / (m - 1);
  std::vector<int> idx(d, 0);
  Eigen::VectorXd u(d);
  double total = 0.0;
  for (;;) {
    double wt = 1.0;
    for (int k = 0; k < d; ++k) {
      u(k) = -half + idx[k] * step;
      if (idx[k] == 0 || idx[k] == m - 1) wt *= 0.5;
    }
    total += wt * spec.eval(u, h);
    int k = 0;
    while (k < d && ++idx[k] == m) idx[k++] = 0;
    if (k == d) break;
  }
  return total * std::pow(step, d);
}

// Average ranks by counting: rank_i = #\{v_j < v_i\} + (#\{v_j == v_i\} + 1)/2.
inline std::vector<double> midranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> r(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::int64_t less = 0, equal = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (v(j) < v(i)) ++less;
      else if (v(j) == v(i)) ++equal;
    }
    r[static_cast<std::size_t>(i)] = static_cast<double>(less) +
                                     0.5 * static_cast<double>(equal + 1);
  }
  return r;
}

// Spearman correlation: Pearson of the midranks, accumulated in long double.
inline double spearman_brute(const Eigen::VectorXd& a,
                             const Eigen::VectorXd& b) {
  const std::vector<double> ra = midranks(a), rb = midranks(b);
  const std::size_t n = ra.size();
  long double ma = 0.0L, mb = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  long double saa = 0.0L, sbb = 0.0L, sab = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double da = ra[i] - ma, db = rb[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

// Column-span projector M (M'M)^{-1} M'.
inline Eigen::MatrixXd projector(const Eigen::MatrixXd& M) {
  return M * (M.transpose() * M).inverse() * M.transpose();
}

// Mean outcome difference between arms inside one rule group, by explicit
// loops. delta = mean Y at `recommended` minus mean Y at the other arm over
// rows with rule(i) == recommended; missing when either arm cell is empty.
struct GroupDiff {
  std::optional<double> delta;
  std::optional<double> se;
  std::int64_t rows = 0;
};

inline GroupDiff group_diff(const Eigen::VectorXd& y, const Eigen::VectorXi& t,
                            const Eigen::VectorXi& rule, int recommended) {
  std::vector<double> at_rec, at_other;
  GroupDiff out;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (rule(i) != recommended) continue;
    ++out.rows;
    (t(i) == recommended ? at_rec : at_other).push_back(y(i));
  }
  if (at_rec.empty() || at_other.empty()) return out;
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var_over_n = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1) /
           static_cast<double>(v.size());
  };
  out.delta = mean(at_rec) - mean(at_other);
  out.se = std::sqrt(var_over_n(at_rec) + var_over_n(at_other));
  return out;
}

// Two-pass mean and sqrt of the mean squared deviation from a fixed target.
inline double mean_of(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

inline double sqrt_mse_about(const std::vector<double>& v, double target) {
  long double s = 0.0L;
  for (double x : v) {
    const long double d = static_cast<long double>(x) - target;
    s += d * d;
  }
  return static_cast<double>(
      std::sqrt(s / static_cast<long double>(v.size())));
}

// Random p x d matrix with orthonormal columns (thin Q of a Gaussian draw).
inline Eigen::MatrixXd random_orthonormal(int p, int d, imave::Rng& rng) {
  Eigen::MatrixXd G(p, d);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < d; ++j) G(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(p, d);
  return Q;
}

// Small random binary dataset: X ~ N(0, I), balanced +-1 arms, pi = 1/2,
// Y = signal(u) * T / 2 + noise with u = first-column index.
inline imave::Dataset make_toy(int n, int p, std::uint64_t seed,
                               double noise_sd = 0.1) {
  imave::Rng rng(seed);
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  Eigen::VectorXd Y(n);
  std::vector<std::string> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int t = rng.sign_bernoulli(0.5);
    labels[static_cast<std::size_t>(i)] = t == 1 ? "1" : "-1";
    Y(i) = 0.5 * t * (2.0 * X(i, 0)) + noise_sd * rng.normal();
  }
  return imave::Dataset(std::move(X), std::move(Y), std::move(labels),
                        Eigen::VectorXd::Constant(n, 0.5));
}

}  // namespace oracle
