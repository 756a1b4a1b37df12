#include "imave/efficiency.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "imave/error.hpp"
#include "imave/kernels.hpp"
#include "imave/parallel.hpp"

namespace imave {

namespace {

// Shared Nadaraya-Watson core: value-weighted kernel average over training
// rows with a nearest-row fallback when no kernel mass reaches the query.
double nw_eval(const Eigen::MatrixXd& train, const Eigen::VectorXd& values,
               const KernelSpec& kernel, double h, const Eigen::VectorXd& x,
               std::int64_t* fallback_count) {
  const std::int64_t n = train.rows();
  const double inv_h2 = 1.0 / (h * h);
  double num = 0.0, den = 0.0;
  double best_r2 = std::numeric_limits<double>::infinity();
  std::int64_t best_i = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r2 = (train.row(i).transpose() - x).squaredNorm();
    if (r2 < best_r2) {
      best_r2 = r2;
      best_i = i;
    }
    const double kw = kernel.profile(r2 * inv_h2);
    if (kw > 0.0) {
      num += kw * values(i);
      den += kw;
    }
  }
  if (den > 0.0) return num / den;
  if (fallback_count) ++*fallback_count;
  return values(best_i);
}

// One-dimensional fast path: training projections sorted once, each query
// reads only its kernel window (plus a log-time nearest-row fallback).
double nw_eval_sorted(const std::vector<double>& zs,
                      const std::vector<double>& vals, const KernelSpec& kernel,
                      double h, double x, std::int64_t* fallback_count) {
  const double radius = kernel.support_radius() * h;
  const double inv_h2 = 1.0 / (h * h);
  const auto lo = std::lower_bound(zs.begin(), zs.end(), x - radius);
  const auto hi = std::upper_bound(zs.begin(), zs.end(), x + radius);
  double num = 0.0, den = 0.0;
  for (auto it = lo; it != hi; ++it) {
    const double du = *it - x;
    const double kw = kernel.profile(du * du * inv_h2);
    if (kw > 0.0) {
      num += kw * vals[it - zs.begin()];
      den += kw;
    }
  }
  if (den > 0.0) return num / den;
  if (fallback_count) ++*fallback_count;
  auto it = std::lower_bound(zs.begin(), zs.end(), x);
  if (it == zs.end()) return vals.back();
  if (it == zs.begin()) return vals.front();
  const double right = *it, left = *(it - 1);
  return (x - left) <= (right - x) ? vals[it - 1 - zs.begin()]
                                   : vals[it - zs.begin()];
}

Eigen::VectorXd nw_eval_batch(const Eigen::MatrixXd& train,
                              const Eigen::VectorXd& values,
                              const KernelSpec& kernel, double h,
                              const Eigen::MatrixXd& queries, int threads,
                              std::int64_t* fallback_count) {
  const std::int64_t m = queries.rows();
  Eigen::VectorXd out(m);
  std::atomic<std::int64_t> fallbacks{0};

  if (train.cols() == 1 && std::isfinite(kernel.support_radius())) {
    const std::int64_t n = train.rows();
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::int64_t a, std::int64_t b) {
                       return train(a, 0) < train(b, 0);
                     });
    std::vector<double> zs(n), vals(n);
    for (std::int64_t k = 0; k < n; ++k) {
      zs[k] = train(order[k], 0);
      vals[k] = values(order[k]);
    }
    parallel_chunks(static_cast<std::size_t>(m), 0, resolve_workers(threads),
                    [&](std::size_t, std::size_t b, std::size_t e) {
                      std::int64_t local = 0;
                      for (std::size_t i = b; i < e; ++i)
                        out(static_cast<std::int64_t>(i)) = nw_eval_sorted(
                            zs, vals, kernel, h,
                            queries(static_cast<std::int64_t>(i), 0), &local);
                      fallbacks.fetch_add(local);
                    });
    if (fallback_count) *fallback_count += fallbacks.load();
    return out;
  }

  parallel_chunks(static_cast<std::size_t>(m), 0, resolve_workers(threads),
                  [&](std::size_t, std::size_t b, std::size_t e) {
                    std::int64_t local = 0;
                    for (std::size_t i = b; i < e; ++i)
                      out(static_cast<std::int64_t>(i)) =
                          nw_eval(train, values, kernel, h,
                                  queries.row(i).transpose(), &local);
                    fallbacks.fetch_add(local);
                  });
  if (fallback_count) *fallback_count += fallbacks.load();
  return out;
}

double rule_of_thumb_h(std::int64_t n, int dim, double sd_scale) {
  if (!(sd_scale > 0.0))
    fail(ErrorCode::ConstantInput, "smoother inputs have zero spread");
  return 2.34 * std::pow(static_cast<double>(n), -1.0 / (dim + 4.0)) *
         sd_scale;
}

double column_sd_scale(const Eigen::MatrixXd& Z) {
  const Eigen::Index n = Z.rows();
  double acc = 0.0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const double mu = Z.col(c).mean();
    acc += std::sqrt((Z.col(c).array() - mu).square().sum() / (n - 1));
  }
  return acc / Z.cols();
}

}  // namespace

double GEstimate::eval(const Eigen::VectorXd& x_projected) const {
  const KernelSpec kernel(family, static_cast<int>(train_Z.cols()));
  return nw_eval(train_Z, train_wy, kernel, h, x_projected, nullptr);
}

Eigen::VectorXd GEstimate::eval_batch(const Eigen::MatrixXd& X,
                                      int threads) const {
  if (X.cols() != B.B.rows())
    fail(ErrorCode::InvalidDimension, "query predictor dimension mismatch");
  const KernelSpec kernel(family, static_cast<int>(train_Z.cols()));
  const Eigen::MatrixXd Zq = X * B.B;
  return nw_eval_batch(train_Z, train_wy, kernel, h, Zq, threads, &fallbacks);
}

double EtaStarEstimate::eval(const Eigen::VectorXd& x) const {
  const KernelSpec kernel(family, static_cast<int>(train_X.cols()));
  return nw_eval(train_X, train_eps, kernel, h, x, nullptr);
}

Eigen::VectorXd EtaStarEstimate::eval_batch(const Eigen::MatrixXd& X,
                                            int threads) const {
  const KernelSpec kernel(family, static_cast<int>(train_X.cols()));
  return nw_eval_batch(train_X, train_eps, kernel, h, X, threads, &fallbacks);
}

GEstimate predict_g(const Dataset& ds, const FitResult& fit,
                    std::optional<double> h, KernelFamily family) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "contrast smoothing requires binary data");
  const Eigen::VectorXd& pi = ds.pi();
  GEstimate g;
  g.B = fit.B;
  g.family = family;
  g.train_Z = ds.X() * fit.B.B;
  g.train_wy.resize(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    g.train_wy(i) = ds.T()(i) / pi(i) * ds.Y()(i);
  const double sd = column_sd_scale(g.train_Z);
  g.h = h ? *h : rule_of_thumb_h(ds.n(), fit.B.d(), sd);
  if (!(g.h > 0.0))
    fail(ErrorCode::NonPositiveBandwidth, "smoother bandwidth must be positive");
  return g;
}

Eigen::VectorXd residuals(const Dataset& ds, const GEstimate& ghat,
                          int threads) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "residuals require binary data");
  const Eigen::VectorXd gv = ghat.eval_batch(ds.X(), threads);
  Eigen::VectorXd eps(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    eps(i) = ds.Y()(i) - 0.5 * ds.T()(i) * gv(i);
  return eps;
}

EtaStarEstimate estimate_eta_star(const Dataset& ds,
                                  const Eigen::VectorXd& eps,
                                  std::optional<double> h,
                                  KernelFamily family) {
  if (eps.size() != ds.n())
    fail(ErrorCode::InvalidArgument, "residual length mismatch");
  if (!eps.allFinite())
    fail(ErrorCode::NonFiniteValue, "residuals have non-finite entries");
  EtaStarEstimate est;
  est.family = family;
  est.train_X = ds.X();
  est.train_eps = eps;
  const double sd = column_sd_scale(ds.X());
  est.h = h ? *h : rule_of_thumb_h(ds.n(), ds.p(), sd);
  if (!(est.h > 0.0))
    fail(ErrorCode::NonPositiveBandwidth, "smoother bandwidth must be positive");
  return est;
}

Imave2Result imave2_fit(const Dataset& ds, int d, const FitConfig& cfg) {
  Imave2Result out;
  out.stage1 = imave_fit(ds, d, EtaMode::zero(), cfg);

  GEstimate ghat = predict_g(ds, out.stage1, cfg.h_g, cfg.kernel);
  const Eigen::VectorXd eps = residuals(ds, ghat, cfg.threads);
  EtaStarEstimate eta = estimate_eta_star(ds, eps, cfg.h_eta, cfg.kernel);
  out.eta_star = eta.eval_batch(ds.X(), cfg.threads);
  out.smoother_fallbacks = ghat.fallbacks + eta.fallbacks;

  out.fit = imave_fit(ds, d, EtaMode::estimated_star(out.eta_star), cfg);
  return out;
}

}  // namespace imave
