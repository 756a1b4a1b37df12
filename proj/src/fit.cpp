#include "imave/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "detail/engine.hpp"
#include "imave/error.hpp"
#include "imave/parallel.hpp"

namespace imave {

std::string eta_mode_name(EtaMode::Kind kind) {
  switch (kind) {
    case EtaMode::Kind::Zero: return "zero";
    case EtaMode::Kind::SongPi: return "song_pi";
    case EtaMode::Kind::Fixed: return "fixed";
    case EtaMode::Kind::EstimatedStar: return "estimated_star";
  }
  return "unknown";
}

namespace detail {

bool guarded_solve(Eigen::MatrixXd A, const Eigen::VectorXd& b, double ridge,
                   Eigen::VectorXd* out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  bool ridged = false;
  if (!(lmin > 0.0) || lmax / lmin > 1e12) {
    const double lambda =
        std::max(ridge, 0.0) * std::max(A.trace(), 1e-300) / A.rows();
    A.diagonal().array() += std::max(lambda, 1e-300);
    ridged = true;
  }
  *out = A.ldlt().solve(b);
  if (!out->allFinite())
    fail(ErrorCode::RankDeficient, "weighted least squares solve failed");
  return ridged;
}

double projected_sd_scale(const Eigen::MatrixXd& X, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd Z = X * B;
  const Eigen::Index n = Z.rows();
  double acc = 0.0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const double mu = Z.col(c).mean();
    const double var = (Z.col(c).array() - mu).square().sum() / (n - 1);
    acc += std::sqrt(var);
  }
  return acc / Z.cols();
}

Eigen::MatrixXd arm_coefficient_rows(const Dataset& ds,
                                     const ContrastSpec& spec) {
  if (spec.arms() != ds.arms())
    fail(ErrorCode::InvalidLevel, "contrast arm count does not match data");
  const Eigen::MatrixXd coef = spec.arm_coefficients();  // (K-1) x K
  Eigen::MatrixXd C(ds.n(), coef.rows());
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    C.row(i) = coef.col(ds.arm_of(i) - 1).transpose();
  return C;
}

namespace {

// Neighbor provider: d = 1 uses a sorted projection window, otherwise a
// box-rejected linear scan. Iteration order is deterministic for a fixed
// mode (sorted order / ascending index) regardless of worker count.
struct NeighborContext {
  const Eigen::MatrixXd& Z;  // n x d projections
  double radius;             // kernel support in |u|; inf scans everything
  bool sorted_mode;
  std::vector<std::int64_t> order;  // by Z(.,0), sorted_mode only
  std::vector<double> zs;           // sorted Z(.,0)

  NeighborContext(const Eigen::MatrixXd& Z_, double radius_, bool allow_sorted)
      : Z(Z_), radius(radius_) {
    sorted_mode = allow_sorted && Z.cols() == 1 && std::isfinite(radius);
    if (sorted_mode) {
      const std::int64_t n = Z.rows();
      order.resize(n);
      std::iota(order.begin(), order.end(), std::int64_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::int64_t a, std::int64_t b) {
                         return Z(a, 0) < Z(b, 0);
                       });
      zs.resize(n);
      for (std::int64_t k = 0; k < n; ++k) zs[k] = Z(order[k], 0);
    }
  }

  // Calls fn(i, u, r2) for every i with |Z_i - Z_j| within the radius
  // (always including j itself). u = Z_i - Z_j.
  template <class Fn>
  void visit(std::int64_t j, Fn&& fn) const {
    const std::int64_t n = Z.rows();
    const int d = static_cast<int>(Z.cols());
    Eigen::VectorXd u(d);
    if (sorted_mode) {
      const double zj = Z(j, 0);
      const auto lo = std::lower_bound(zs.begin(), zs.end(), zj - radius);
      const auto hi = std::upper_bound(zs.begin(), zs.end(), zj + radius);
      for (auto it = lo; it != hi; ++it) {
        const std::int64_t k = it - zs.begin();
        const std::int64_t i = order[k];
        const double du = zs[k] - zj;
        u(0) = du;
        fn(i, u, du * du);
      }
      return;
    }
    const double r2max = radius * radius;
    for (std::int64_t i = 0; i < n; ++i) {
      bool reject = false;
      if (std::isfinite(radius)) {
        for (int c = 0; c < d; ++c) {
          if (std::abs(Z(i, c) - Z(j, c)) > radius) {
            reject = true;
            break;
          }
        }
      }
      if (reject) continue;
      u = (Z.row(i) - Z.row(j)).transpose();
      const double r2 = u.squaredNorm();
      if (std::isfinite(radius) && r2 > r2max) continue;
      fn(i, u, r2);
    }
  }
};

struct Neighbor {
  std::int64_t i;
  double w;  // kernel weight / pi_i
};

// Local fit at anchor j from an explicit neighbor list. Returns false when
// the ridge fallback fired (degenerate Gram).
bool solve_local(const EngineInput& in, const Eigen::VectorXd& yc,
                 const Eigen::MatrixXd& Z, std::int64_t j,
                 const std::vector<Neighbor>& nbrs, double ridge,
                 LocalFitQ* out) {
  const int q = static_cast<int>(in.C.cols());
  const int d = static_cast<int>(Z.cols());
  const int m = q * (1 + d);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd phi(m);
  for (const Neighbor& nb : nbrs) {
    const auto c = in.C.row(nb.i);
    phi.head(q) = c.transpose();
    for (int k = 0; k < d; ++k)
      phi.segment(q * (1 + k), q) = (Z(nb.i, k) - Z(j, k)) * c.transpose();
    A.selfadjointView<Eigen::Lower>().rankUpdate(phi, nb.w);
    v.noalias() += (nb.w * yc(nb.i)) * phi;
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd theta;
  const bool ridged = guarded_solve(std::move(A), v, ridge, &theta);
  out->a = theta.head(q);
  out->G = Eigen::Map<const Eigen::MatrixXd>(theta.data() + q, q, d);
  out->degenerate = ridged;
  return !ridged;
}

}  // namespace

EngineOutput run_engine(const EngineInput& in) {
  const Dataset& ds = *in.ds;
  const std::int64_t n = ds.n();
  const int p = ds.p();
  const int d = static_cast<int>(in.B0.cols());
  const int q = static_cast<int>(in.C.cols());
  const int K = ds.arms();
  const int pd = p * d;

  EngineOutput out;
  out.local_fits.resize(n);
  Eigen::MatrixXd B = in.B0;

  // eta handling: values fixed across iterations except SongPi, which is
  // rebuilt at iteration end from that iteration's local fits, so both WLS
  // steps inside an iteration see one eta (keeps the per-iteration loss
  // monotone).
  Eigen::VectorXd eta = in.eta.values.size() == n
                            ? in.eta.values
                            : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd yc = ds.Y() - eta;

  const Eigen::MatrixXd coef =  // q x K, c_t by arm
      [&] {
        Eigen::MatrixXd m2(q, K);
        std::vector<bool> seen(K, false);
        for (std::int64_t i = 0; i < n && static_cast<int>(std::count(
                                              seen.begin(), seen.end(), true)) <
                                              K;
             ++i) {
          const int a = ds.arm_of(i) - 1;
          if (!seen[a]) {
            m2.col(a) = in.C.row(i).transpose();
            seen[a] = true;
          }
        }
        return m2;
      }();

  const KernelSpec kernel(in.kernel, d);
  const int workers = std::max(1, in.workers);
  const std::size_t chunk = default_chunk(static_cast<std::size_t>(n));
  const std::size_t n_chunks =
      (static_cast<std::size_t>(n) + chunk - 1) / chunk;

  std::vector<Eigen::MatrixXd> gram_parts(n_chunks);
  std::vector<Eigen::VectorXd> rhs_parts(n_chunks);
  std::vector<double> r0_parts(n_chunks);

  auto run_pass = [&](double h, bool accumulate_global) {
    const Eigen::MatrixXd Z = ds.X() * B;
    const double hfac = std::pow(h, -d);
    const double inv_h2 = 1.0 / (h * h);
    const double radius = kernel.support_radius() * h;
    NeighborContext nbctx(Z, radius, !in.all_pairs);

    parallel_chunks(
        static_cast<std::size_t>(n), chunk, workers,
        [&](std::size_t ci, std::size_t jb, std::size_t je) {
          std::vector<Neighbor> nbrs;
          nbrs.reserve(static_cast<std::size_t>(n));
          Eigen::MatrixXd gram;
          Eigen::VectorXd rhs;
          double r0 = 0.0;
          std::vector<Eigen::MatrixXd> S(K, Eigen::MatrixXd(p, p));
          std::vector<Eigen::VectorXd> sv(K, Eigen::VectorXd(p));
          std::vector<std::int64_t> cnt(K);
          Eigen::VectorXd delta(p), beta(d);
          if (accumulate_global) {
            gram = Eigen::MatrixXd::Zero(pd, pd);
            rhs = Eigen::VectorXd::Zero(pd);
          }

          for (std::size_t js = jb; js < je; ++js) {
            const std::int64_t j = static_cast<std::int64_t>(js);
            nbrs.clear();
            nbctx.visit(j, [&](std::int64_t i, const Eigen::VectorXd&,
                               double r2) {
              const double kw = kernel.profile(r2 * inv_h2);
              if (kw <= 0.0) return;
              nbrs.push_back({i, kw * hfac * in.inv_pi(i)});
            });
            LocalFitQ& lf = out.local_fits[js];
            solve_local(in, yc, Z, j, nbrs, in.ridge, &lf);
            if (!accumulate_global) continue;

            for (int a = 0; a < K; ++a) {
              S[a].setZero();
              sv[a].setZero();
              cnt[a] = 0;
            }
            for (const Neighbor& nb : nbrs) {
              const int a = ds.arm_of(nb.i) - 1;
              delta = (ds.X().row(nb.i) - ds.X().row(j)).transpose();
              const double resid = yc(nb.i) - in.C.row(nb.i).dot(lf.a);
              S[a].selfadjointView<Eigen::Lower>().rankUpdate(delta, nb.w);
              sv[a].noalias() += (nb.w * resid) * delta;
              r0 += nb.w * resid * resid;
              ++cnt[a];
            }
            for (int a = 0; a < K; ++a) {
              if (cnt[a] == 0) continue;
              beta.noalias() = lf.G.transpose() * coef.col(a);
              const Eigen::MatrixXd Ssym = S[a].selfadjointView<Eigen::Lower>();
              for (int bi = 0; bi < d; ++bi) {
                rhs.segment(bi * p, p).noalias() += beta(bi) * sv[a];
                for (int bj = 0; bj <= bi; ++bj)
                  gram.block(bi * p, bj * p, p, p).noalias() +=
                      (beta(bi) * beta(bj)) * Ssym;
              }
            }
          }
          if (accumulate_global) {
            gram_parts[ci] = std::move(gram);
            rhs_parts[ci] = std::move(rhs);
            r0_parts[ci] = r0;
          }
        });
  };

  bool converged = false;
  int t = 0;
  while (t < in.max_iter && !converged) {
    ++t;
    const double h = in.sched.at(t);
    run_pass(h, true);

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(pd, pd);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(pd);
    double r0 = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {  // fixed combine order
      gram += gram_parts[c];
      rhs += rhs_parts[c];
      r0 += r0_parts[c];
    }
    // Only the lower d-block triangle was filled; mirror it.
    for (int bi = 0; bi < d; ++bi)
      for (int bj = bi + 1; bj < d; ++bj)
        gram.block(bi * p, bj * p, p, p) =
            gram.block(bj * p, bi * p, p, p).transpose();

    const double nn = static_cast<double>(n) * static_cast<double>(n);
    const Eigen::VectorXd vb = Eigen::Map<const Eigen::VectorXd>(B.data(), pd);
    out.loss_pre_trace.push_back(
        (r0 - 2.0 * vb.dot(rhs) + vb.dot(gram * vb)) / nn);

    Eigen::VectorXd vnew;
    guarded_solve(gram, rhs, in.ridge, &vnew);
    out.loss_trace.push_back(
        (r0 - 2.0 * vnew.dot(rhs) + vnew.dot(gram * vnew)) / nn);
    out.h_trace.push_back(h);

    const Eigen::MatrixXd Braw =
        Eigen::Map<const Eigen::MatrixXd>(vnew.data(), p, d);
    const Eigen::MatrixXd Bnew = grassmann_normalize(Braw).B;
    const double dist = (Bnew - B).norm();
    B = Bnew;

    if (in.eta.kind == EtaMode::Kind::SongPi) {
      // g at each sample point from this iteration's local fits (q = 1).
      for (std::int64_t i = 0; i < n; ++i)
        eta(i) = (1.0 - 2.0 * in.eta.pi_plus(i)) * out.local_fits[i].a(0);
      yc = ds.Y() - eta;
    }
    converged = dist < in.tol;
  }

  // Final anchor pass at the converged B so reported local fits, contrast
  // values, and eta refer to the returned index matrix.
  const double h_final = in.sched.at(std::max(t, 1));
  run_pass(h_final, false);

  out.B = B;
  out.g_values.resize(n, q);
  for (std::int64_t i = 0; i < n; ++i)
    out.g_values.row(i) = out.local_fits[i].a.transpose();
  out.iterations = t;
  out.converged = converged;
  return out;
}

Eigen::VectorXd initial_beta_step(const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& C,
                                  const Eigen::VectorXd& inv_pi,
                                  const Eigen::VectorXd& yc,
                                  const Eigen::VectorXd& J,
                                  const Eigen::VectorXd& wts, double ridge) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = C.row(i).dot(J);
    const double w = wts(i) * inv_pi(i);
    const Eigen::VectorXd xi = s * X.row(i).transpose();
    A.selfadjointView<Eigen::Lower>().rankUpdate(xi, w);
    v.noalias() += (w * yc(i)) * xi;
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd beta(p);
  guarded_solve(std::move(A), v, ridge, &beta);
  return beta;
}

Eigen::VectorXd initial_j_step(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& C,
                               const Eigen::VectorXd& inv_pi,
                               const Eigen::VectorXd& yc,
                               const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& wts, double ridge) {
  const Eigen::Index n = X.rows();
  const Eigen::Index q = C.cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = beta.dot(X.row(i));
    const double w = wts(i) * inv_pi(i);
    const Eigen::VectorXd ci = z * C.row(i).transpose();
    A.selfadjointView<Eigen::Lower>().rankUpdate(ci, w);
    v.noalias() += (w * yc(i)) * ci;
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd J(q);
  guarded_solve(std::move(A), v, ridge, &J);
  return J;
}

Eigen::VectorXd initial_opg_step(const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& C,
                                 const Eigen::VectorXd& inv_pi,
                                 const Eigen::VectorXd& yc,
                                 const Eigen::VectorXd& J,
                                 const Eigen::VectorXd& wts,
                                 Eigen::Index anchor, double ridge) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd zi(p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = C.row(i).dot(J);
    const double w = wts(i) * inv_pi(i);
    zi(0) = s;
    zi.tail(p) = s * (X.row(i) - X.row(anchor)).transpose();
    A.selfadjointView<Eigen::Lower>().rankUpdate(zi, w);
    v.noalias() += (w * yc(i)) * zi;
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd theta(p + 1);
  guarded_solve(std::move(A), v, ridge, &theta);
  return theta;
}

Eigen::MatrixXd initial_direction_matrix(const Dataset& ds,
                                         const Eigen::MatrixXd& C,
                                         const Eigen::VectorXd& inv_pi,
                                         const Eigen::VectorXd& eta_values,
                                         int d, KernelFamily kernel,
                                         double ridge) {
  const std::int64_t n = ds.n();
  const int p = ds.p();
  const int q = static_cast<int>(C.cols());
  if (d < 1 || d > p)
    fail(ErrorCode::InvalidDimension, "need 1 <= d <= p");
  const Eigen::VectorXd yc = ds.Y() - eta_values;
  const KernelSpec k1(kernel, 1);

  // Expansion of g around 0: response ~ (c_i' J) * beta' X_i. J is fixed at
  // 1 for q = 1 (absorbed into the scale of beta) and alternated otherwise.
  Eigen::VectorXd J = Eigen::VectorXd::Constant(q, 1.0 / std::sqrt(double(q)));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd wts = Eigen::VectorXd::Ones(n);

  auto beta_step = [&]() {
    beta = initial_beta_step(ds.X(), C, inv_pi, yc, J, wts, ridge);
  };
  auto j_step = [&]() {
    if (q == 1) return;
    J = initial_j_step(ds.X(), C, inv_pi, yc, beta, wts, ridge);
  };

  beta_step();
  // Five kernel-reweighted alternations with w_i = K_h(beta' X_i), h from a
  // provisional schedule on the current direction.
  Eigen::VectorXd u1(1);
  for (int it = 0; it < 5; ++it) {
    double nrm = beta.norm();
    if (!(nrm > 0.0)) fail(ErrorCode::RankDeficient, "initial direction is zero");
    const Eigen::VectorXd bn = beta / nrm;
    const double sd = projected_sd_scale(ds.X(), bn);
    if (!(sd > 0.0))
      fail(ErrorCode::ConstantInput, "projected predictors are constant");
    const BandwidthSchedule sched = BandwidthSchedule::defaults(n, p, 1, sd);
    const double h = sched.at(1);
    for (std::int64_t i = 0; i < n; ++i) {
      u1(0) = bn.dot(ds.X().row(i));
      wts(i) = k1.eval(u1, h);
    }
    j_step();
    beta_step();
  }

  Eigen::MatrixXd Bmat(p, d);
  const double bn = beta.norm();
  if (!(bn > 0.0)) fail(ErrorCode::RankDeficient, "initial direction is zero");
  Bmat.col(0) = beta / bn;

  if (d > 1) {
    // Remaining directions: top eigenvectors of the density-weighted gradient
    // outer-product matrix sum_j rho_j * b_j b_j', where b_j is the local
    // linear contrast gradient at anchor X_j and rho_j the mean kernel weight
    // there. Gradient outer products keep full-rank span signal for any
    // nonconstant contrast; a signed second moment loses odd links entirely.
    // The gradient pass always uses a Gaussian kernel: compact supports are
    // empty for most anchor pairs in p dimensions.
    const double sd_full =
        projected_sd_scale(ds.X(), Eigen::MatrixXd::Identity(p, p));
    if (!(sd_full > 0.0))
      fail(ErrorCode::ConstantInput, "predictors are constant");
    const double h0 = BandwidthSchedule::defaults(n, p, 1, sd_full).at(1);
    const KernelSpec kp(KernelFamily::Gaussian, p);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd wj(n);
    for (std::int64_t j = 0; j < n; ++j) {
      for (std::int64_t i = 0; i < n; ++i)
        wj(i) = kp.eval((ds.X().row(i) - ds.X().row(j)).transpose(), h0);
      const Eigen::VectorXd theta =
          initial_opg_step(ds.X(), C, inv_pi, yc, J, wj, j, ridge);
      M.selfadjointView<Eigen::Lower>().rankUpdate(theta.tail(p), wj.mean());
    }
    M = M.selfadjointView<Eigen::Lower>();
    // Deflate the chosen first direction out of M before eigen-decomposing.
    // Near-equal span eigenvalues let raw eigenvectors rotate freely inside
    // the span, so the strongest one can nearly duplicate column 0, leaving
    // only noise after orthogonalization; the deflated matrix ranks
    // directions by gradient content orthogonal to column 0 instead.
    const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(p, p) -
                                 Bmat.col(0) * Bmat.col(0).transpose();
    M = proj * M * proj;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    std::vector<int> idx(p);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return es.eigenvalues()(a) > es.eigenvalues()(b);
    });
    const double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
    int filled = 1;
    for (int r = 0; r < p && filled < d; ++r) {
      if (!(es.eigenvalues()(idx[r]) > 1e-12 * lam_max)) break;
      Eigen::VectorXd cand = es.eigenvectors().col(idx[r]);
      for (int c = 0; c < filled; ++c)
        cand -= Bmat.col(c).dot(cand) * Bmat.col(c);
      const double nn = cand.norm();
      if (nn > 1e-8) {
        Bmat.col(filled++) = cand / nn;
      }
    }
    for (int e = 0; e < p && filled < d; ++e) {
      // Deterministic fallback: coordinate axes projected off the span.
      Eigen::VectorXd cand = Eigen::VectorXd::Unit(p, e);
      for (int c = 0; c < filled; ++c)
        cand -= Bmat.col(c).dot(cand) * Bmat.col(c);
      const double nn = cand.norm();
      if (nn > 1e-8) Bmat.col(filled++) = cand / nn;
    }
    if (filled < d)
      fail(ErrorCode::RankDeficient, "could not complete the initial basis");
  }
  return grassmann_normalize(Bmat).B;
}

}  // namespace detail

// ---- Public reference implementations ----

Eigen::MatrixXd kernel_weights(const Dataset& ds, const Eigen::MatrixXd& B,
                               KernelFamily family, double h) {
  const int d = static_cast<int>(B.cols());
  const KernelSpec kernel(family, d);
  const Eigen::MatrixXd Z = ds.X() * B;
  const std::int64_t n = ds.n();
  Eigen::MatrixXd W(n, n);
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t i = 0; i < n; ++i)
      W(i, j) = kernel.eval((Z.row(i) - Z.row(j)).transpose(), h);
  return W;
}

static Eigen::VectorXd half_t(const Dataset& ds) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "this entry point requires a binary treatment");
  Eigen::VectorXd c(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) c(i) = 0.5 * ds.T()(i);
  return c;
}

LocalFit local_linear_fit(const Dataset& ds, const Eigen::MatrixXd& B,
                          std::int64_t j, const Eigen::VectorXd& eta,
                          const Eigen::VectorXd& w, double ridge) {
  const std::int64_t n = ds.n();
  const int d = static_cast<int>(B.cols());
  if (j < 0 || j >= n) fail(ErrorCode::InvalidArgument, "anchor out of range");
  if (w.size() != n || eta.size() != n)
    fail(ErrorCode::InvalidArgument, "weight/eta length mismatch");
  if ((w.array() > 0.0).count() == 0)
    fail(ErrorCode::AllWeightsZero, "no positive weights at this anchor");
  const Eigen::VectorXd c = half_t(ds);
  const Eigen::VectorXd& pi = ds.pi();
  const Eigen::MatrixXd Z = ds.X() * B;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1 + d, 1 + d);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(1 + d);
  Eigen::VectorXd phi(1 + d);
  for (std::int64_t i = 0; i < n; ++i) {
    if (w(i) <= 0.0) continue;
    phi(0) = c(i);
    phi.tail(d) = c(i) * (Z.row(i) - Z.row(j)).transpose();
    const double ww = w(i) / pi(i);
    A.selfadjointView<Eigen::Lower>().rankUpdate(phi, ww);
    v.noalias() += ww * (ds.Y()(i) - eta(i)) * phi;
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd theta;
  const bool ridged = detail::guarded_solve(std::move(A), v, ridge, &theta);
  LocalFit out;
  out.a = theta(0);
  out.b = theta.tail(d);
  out.degenerate = ridged;
  return out;
}

Eigen::MatrixXd update_B(const Dataset& ds, const std::vector<LocalFit>& fits,
                         const Eigen::MatrixXd& W, const Eigen::VectorXd& eta,
                         double ridge) {
  const std::int64_t n = ds.n();
  const int p = ds.p();
  if (static_cast<std::int64_t>(fits.size()) != n)
    fail(ErrorCode::InvalidArgument, "need one local fit per anchor");
  if (W.rows() != n || W.cols() != n || eta.size() != n)
    fail(ErrorCode::InvalidArgument, "weight matrix or eta size mismatch");
  const int d = static_cast<int>(fits[0].b.size());
  const Eigen::VectorXd c = half_t(ds);
  const Eigen::VectorXd& pi = ds.pi();
  const int pd = p * d;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(pd, pd);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(pd);
  Eigen::VectorXd row(pd);
  for (std::int64_t j = 0; j < n; ++j) {
    const LocalFit& lf = fits[j];
    for (std::int64_t i = 0; i < n; ++i) {
      const double ww = W(i, j) / pi(i);
      if (ww <= 0.0) continue;
      const Eigen::VectorXd delta =
          (ds.X().row(i) - ds.X().row(j)).transpose();
      for (int k = 0; k < d; ++k)
        row.segment(k * p, p) = (c(i) * lf.b(k)) * delta;
      const double resp = ds.Y()(i) - eta(i) - c(i) * lf.a;
      A.selfadjointView<Eigen::Lower>().rankUpdate(row, ww);
      v.noalias() += ww * resp * row;
    }
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd vec;
  detail::guarded_solve(std::move(A), v, ridge, &vec);
  return Eigen::Map<const Eigen::MatrixXd>(vec.data(), p, d);
}

double loss_eval(const Dataset& ds, const Eigen::VectorXd& g_values,
                 const Eigen::VectorXd& eta) {
  const std::int64_t n = ds.n();
  if (g_values.size() != n || eta.size() != n)
    fail(ErrorCode::InvalidArgument, "loss_eval size mismatch");
  const Eigen::VectorXd c = half_t(ds);
  const Eigen::VectorXd& pi = ds.pi();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = ds.Y()(i) - c(i) * g_values(i) - eta(i);
    acc += r * r / pi(i);
  }
  return acc / static_cast<double>(n);
}

Eigen::VectorXd resolve_eta(const Dataset& ds, const EtaMode& eta) {
  switch (eta.kind) {
    case EtaMode::Kind::Zero:
    case EtaMode::Kind::SongPi:
      // SongPi starts from zero; refreshes happen inside the fit loop.
      return Eigen::VectorXd::Zero(ds.n());
    case EtaMode::Kind::Fixed:
    case EtaMode::Kind::EstimatedStar:
      if (eta.values.size() != ds.n())
        fail(ErrorCode::InvalidArgument, "eta vector length mismatch");
      if (!eta.values.allFinite())
        fail(ErrorCode::NonFiniteValue, "eta has non-finite entries");
      return eta.values;
  }
  fail(ErrorCode::InvalidArgument, "unknown eta mode");
}

Eigen::VectorXd song_pi_eta(const Eigen::VectorXd& pi_plus,
                            const Eigen::VectorXd& g_values) {
  if (pi_plus.size() != g_values.size())
    fail(ErrorCode::InvalidArgument, "song_pi_eta size mismatch");
  return (1.0 - 2.0 * pi_plus.array()).matrix().cwiseProduct(g_values);
}

namespace {

Eigen::VectorXd observed_pi_plus(const Dataset& ds) {
  const Eigen::VectorXd& pi = ds.pi();
  Eigen::VectorXd out(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    out(i) = ds.T()(i) == 1 ? pi(i) : 1.0 - pi(i);
  return out;
}

}  // namespace

namespace detail {

EngineInput build_engine_input(const Dataset& ds, const ContrastSpec& spec,
                               int d, const EtaMode& eta,
                               const FitConfig& cfg) {
  if (d < 1 || d > ds.p())
    fail(ErrorCode::InvalidDimension, "need 1 <= d <= p");
  if (eta.kind == EtaMode::Kind::SongPi && !ds.binary())
    fail(ErrorCode::NotBinary, "SongPi eta requires a binary treatment");

  EngineInput in;
  in.ds = &ds;
  in.C = arm_coefficient_rows(ds, spec);
  in.inv_pi = ds.pi().cwiseInverse();
  in.kernel = cfg.kernel;
  in.max_iter = cfg.max_iter;
  in.tol = cfg.tol;
  in.ridge = cfg.ridge;
  in.workers = resolve_workers(cfg.threads);
  in.all_pairs = cfg.disable_fast_paths;

  in.eta.kind = eta.kind;
  in.eta.values = resolve_eta(ds, eta);
  if (eta.kind == EtaMode::Kind::SongPi) {
    const Eigen::VectorXd& pi = ds.pi();
    Eigen::VectorXd plus(ds.n());
    for (Eigen::Index i = 0; i < ds.n(); ++i)
      plus(i) = ds.T()(i) == 1 ? pi(i) : 1.0 - pi(i);
    in.eta.pi_plus = std::move(plus);
  }

  in.B0 = initial_direction_matrix(ds, in.C, in.inv_pi, in.eta.values, d,
                                   cfg.kernel, cfg.ridge);
  in.sched = BandwidthSchedule::defaults(
      ds.n(), ds.p(), d, projected_sd_scale(ds.X(), in.B0));
  if (cfg.c1) in.sched.c1 = *cfg.c1;
  if (cfg.c3) in.sched.c3 = *cfg.c3;
  if (cfg.rh) in.sched.rh = *cfg.rh;
  if (cfg.rh_prime) in.sched.rh_prime = *cfg.rh_prime;
  const int p0 = std::max(ds.p(), 3);
  if (in.sched.rh > 1.0 / (p0 + 6.0) + 1e-12)
    fail(ErrorCode::InvalidArgument, "rh exceeds 1/(max(p,3)+6)");
  if (in.sched.rh_prime > 1.0 / (d + 3.0) + 1e-12)
    fail(ErrorCode::InvalidArgument, "rh_prime exceeds 1/(d+3)");
  return in;
}

}  // namespace detail

namespace {

struct Standardizer {
  Eigen::VectorXd mean, sd;

  static Standardizer from(const Eigen::MatrixXd& X) {
    Standardizer s;
    const Eigen::Index n = X.rows();
    s.mean = X.colwise().mean();
    s.sd.resize(X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double var =
          (X.col(c).array() - s.mean(c)).square().sum() / (n - 1);
      if (!(var > 0.0))
        fail(ErrorCode::ConstantInput,
             "cannot standardize a constant predictor column");
      s.sd(c) = std::sqrt(var);
    }
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() /
           sd.transpose().array();
  }
  // Maps an index matrix on standardized coords back to original coords.
  Eigen::MatrixXd back(const Eigen::MatrixXd& B) const {
    return sd.cwiseInverse().asDiagonal() * B;
  }
};

}  // namespace

IndexMatrix initial_estimator(const Dataset& ds, int d, const EtaMode& eta,
                              const FitConfig& cfg) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "initial_estimator requires binary data");
  const Eigen::MatrixXd C =
      detail::arm_coefficient_rows(ds, ContrastSpec::default_binary());
  const Eigen::VectorXd eta_values = resolve_eta(ds, eta);
  IndexMatrix out;
  out.B = detail::initial_direction_matrix(ds, C, ds.pi().cwiseInverse(),
                                           eta_values, d, cfg.kernel,
                                           cfg.ridge);
  return out;
}

FitResult imave_fit(const Dataset& ds, int d, const EtaMode& eta,
                    const FitConfig& cfg) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary,
         "imave_fit requires binary data; use multiarm_fit for K > 2");
  if (d < 1 || d > ds.p())
    fail(ErrorCode::InvalidDimension, "need 1 <= d <= p");

  const ContrastSpec spec = ContrastSpec::default_binary();

  FitResult res;
  res.d = d;
  res.eta = eta;
  res.seed = cfg.seed;
  res.eta_mode_label = eta_mode_name(eta.kind);

  if (!cfg.standardize) {
    detail::EngineInput in = detail::build_engine_input(ds, spec, d, eta, cfg);
    detail::EngineOutput out = detail::run_engine(in);
    res.B.B = out.B;
    res.local_fits.resize(out.local_fits.size());
    for (std::size_t i = 0; i < out.local_fits.size(); ++i) {
      res.local_fits[i].a = out.local_fits[i].a(0);
      res.local_fits[i].b = out.local_fits[i].G.row(0).transpose();
      res.local_fits[i].degenerate = out.local_fits[i].degenerate;
    }
    res.loss_trace = out.loss_trace;
    res.loss_pre_trace = out.loss_pre_trace;
    res.h_trace = out.h_trace;
    res.iterations = out.iterations;
    res.converged = out.converged;
    return res;
  }

  // Standardized path: fit in standardized coordinates, map the index back,
  // then rebuild the local fits at the reported B in original coordinates.
  const Standardizer st = Standardizer::from(ds.X());
  Dataset ds_std(st.apply(ds.X()), ds.Y(),
                 [&] {
                   std::vector<std::string> l(ds.n());
                   for (Eigen::Index i = 0; i < ds.n(); ++i)
                     l[i] = ds.label_of_code(ds.T()(i));
                   return l;
                 }(),
                 ds.pi());
  FitConfig raw = cfg;
  raw.standardize = false;
  FitResult inner = imave_fit(ds_std, d, eta, raw);

  res.B = grassmann_normalize(st.back(inner.B.B));
  res.loss_trace = inner.loss_trace;
  res.loss_pre_trace = inner.loss_pre_trace;
  res.h_trace = inner.h_trace;
  res.iterations = inner.iterations;
  res.converged = inner.converged;

  const double sd_scale = detail::projected_sd_scale(ds.X(), res.B.B);
  BandwidthSchedule sched =
      BandwidthSchedule::defaults(ds.n(), ds.p(), d, sd_scale);
  const double h = sched.at(std::max(inner.iterations, 1));
  const Eigen::MatrixXd W = kernel_weights(ds, res.B.B, cfg.kernel, h);
  const Eigen::VectorXd eta_values =
      eta.kind == EtaMode::Kind::SongPi
          ? song_pi_eta(observed_pi_plus(ds),
                        [&] {
                          Eigen::VectorXd g(ds.n());
                          for (Eigen::Index i = 0; i < ds.n(); ++i)
                            g(i) = inner.local_fits[i].a;
                          return g;
                        }())
          : resolve_eta(ds, eta);
  res.local_fits.resize(ds.n());
  for (std::int64_t j = 0; j < ds.n(); ++j)
    res.local_fits[j] =
        local_linear_fit(ds, res.B.B, j, eta_values, W.col(j), cfg.ridge);
  return res;
}

}  // namespace imave
