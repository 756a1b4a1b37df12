#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/efficiency.hpp"
#include "imave/error.hpp"
#include "imave/fit.hpp"
#include "imave/grassmann.hpp"
#include "imave/rng.hpp"
#include "imave/simulation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace imave;
using testsupport::thrown_code;

namespace {

FitResult synthetic_fit(Eigen::MatrixXd B) {
  FitResult fr;
  fr.d = static_cast<int>(B.cols());
  fr.B = IndexMatrix{std::move(B)};
  return fr;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  return (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
}

}  // namespace

TEST_SUITE("efficiency") {

TEST_CASE("constant weighted responses give a constant smoother") {
  // Y_i = c T_i / 2 with pi = 1/2 makes every w_i Y_i = c, so the kernel
  // average is c wherever some kernel mass reaches the query.
  const int n = 80, p = 3;
  const double c = 3.25;
  Rng rng(11);
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  Eigen::VectorXd Y(n);
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) {
    const int t = rng.sign_bernoulli(0.5);
    labels[i] = t == 1 ? "1" : "-1";
    Y(i) = 0.5 * c * t;
  }
  const Dataset ds(X, Y, labels, Eigen::VectorXd::Constant(n, 0.5));
  const FitResult fit = synthetic_fit(oracle::random_orthonormal(p, 1, rng));

  const GEstimate g = predict_g(ds, fit);
  for (int i = 0; i < n; ++i)
    CHECK((g.train_wy(i) == doctest::Approx(c).epsilon(1e-14)));
  const Eigen::VectorXd at_train = g.eval_batch(ds.X());
  for (int i = 0; i < n; ++i)
    CHECK(at_train(i) == doctest::Approx(c).epsilon(1e-12));
  Eigen::VectorXd far(1);
  far << 50.0;  // fallback region: still the (constant) nearest value
  CHECK(g.eval(far) == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("smoother error shrinks with sample size") {
  // Noiseless single-index data: w_i Y_i equals the true contrast exactly,
  // so the remaining error is pure smoothing bias, which falls as the
  // data-driven bandwidth tightens.
  auto sup_error = [](int n) {
    ScenarioSpec spec;
    spec.g_shape = GShape::Linear;
    spec.n = n;
    spec.gamma = 0.0;
    spec.sigma = 0.0;
    spec.seed = 97;
    const GeneratedData gen = generate_data(spec);
    const GEstimate g = predict_g(gen.ds, synthetic_fit(gen.B0.B));
    double worst = 0.0;
    for (int k = 0; k <= 24; ++k) {
      const double z = -1.5 + 3.0 * k / 24.0;
      const Eigen::MatrixXd xq = (gen.B0.B * z).transpose();  // 1 x p
      const double truth = true_contrast(spec, xq)(0);
      Eigen::VectorXd zq(1);
      zq << z;
      worst = std::max(worst, std::abs(g.eval(zq) - truth));
    }
    return worst;
  };
  const double e500 = sup_error(500);
  const double e2000 = sup_error(2000);
  CHECK(e2000 < e500);
  CHECK(e2000 < 1.5);  // tau = 7 scale: a few percent relative
}

TEST_CASE("batch evaluation matches pointwise evaluation") {
  Rng rng(23);
  const Dataset ds = oracle::make_toy(60, 4, 5);
  const Eigen::MatrixXd B = oracle::random_orthonormal(4, 2, rng);
  const GEstimate g = predict_g(ds, synthetic_fit(B));

  Eigen::MatrixXd Q(17, 4);
  for (int i = 0; i < Q.rows(); ++i)
    for (int j = 0; j < 4; ++j) Q(i, j) = rng.normal();
  const Eigen::VectorXd batch = g.eval_batch(Q);
  for (int i = 0; i < Q.rows(); ++i) {
    const Eigen::VectorXd zq = (Q.row(i) * B).transpose();
    CHECK(batch(i) == doctest::Approx(g.eval(zq)).epsilon(1e-12));
  }
  // Worker count must not change values.
  const Eigen::VectorXd batch3 = g.eval_batch(Q, 3);
  CHECK((batch.array() == batch3.array()).all());

  const Eigen::VectorXd eps = Eigen::VectorXd::LinSpaced(60, -1.0, 2.0);
  const EtaStarEstimate eta = estimate_eta_star(ds, eps);
  const Eigen::VectorXd ebatch = eta.eval_batch(Q);
  for (int i = 0; i < Q.rows(); ++i)
    CHECK(ebatch(i) ==
          doctest::Approx(eta.eval(Q.row(i).transpose())).epsilon(1e-12));
}

TEST_CASE("empty neighborhoods fall back to the nearest training value") {
  const Dataset ds = oracle::make_toy(50, 3, 7);

  // d = 1 exercises the sorted-window path, d = 2 the generic path.
  for (int d : {1, 2}) {
    CAPTURE(d);
    Rng rng(31 + d);
    const Eigen::MatrixXd B = oracle::random_orthonormal(3, d, rng);
    const GEstimate g =
        predict_g(ds, synthetic_fit(B), 0.05, KernelFamily::Epanechnikov);
    CHECK(g.fallbacks == 0);

    Eigen::MatrixXd far = Eigen::MatrixXd::Constant(3, 3, 200.0);
    far.row(1).setConstant(-200.0);
    far.row(2).setConstant(350.0);
    const Eigen::VectorXd vals = g.eval_batch(far);
    CHECK(g.fallbacks == 3);

    // Every fallback must return the value of the nearest projected row.
    for (int qi = 0; qi < 3; ++qi) {
      const Eigen::VectorXd zq = (far.row(qi) * B).transpose();
      int best = 0;
      double best_r2 = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 50; ++i) {
        const double r2 = (g.train_Z.row(i).transpose() - zq).squaredNorm();
        if (r2 < best_r2) {
          best_r2 = r2;
          best = i;
        }
      }
      CHECK(vals(qi) == g.train_wy(best));
    }
  }
}

TEST_CASE("training row order does not change predictions") {
  const Dataset ds = oracle::make_toy(70, 3, 13);
  std::vector<std::int64_t> perm(70);
  for (int i = 0; i < 70; ++i) perm[i] = (37 * i + 11) % 70;
  const Dataset shuffled = ds.subset(perm);

  Rng rng(41);
  const Eigen::MatrixXd B = oracle::random_orthonormal(3, 1, rng);
  const GEstimate g1 = predict_g(ds, synthetic_fit(B));
  const GEstimate g2 = predict_g(shuffled, synthetic_fit(B));
  CHECK(g1.h == g2.h);

  Eigen::MatrixXd Q(9, 3);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 3; ++j) Q(i, j) = rng.normal();
  const Eigen::VectorXd v1 = g1.eval_batch(Q);
  const Eigen::VectorXd v2 = g2.eval_batch(Q);
  for (int i = 0; i < 9; ++i)
    CHECK(v1(i) == doctest::Approx(v2(i)).epsilon(1e-12));
}

TEST_CASE("residuals subtract half the treated contrast") {
  const Dataset ds = oracle::make_toy(40, 2, 17);
  // Hand-built smoother that is identically 4.5: one training row.
  GEstimate g;
  g.B = IndexMatrix{Eigen::MatrixXd::Identity(2, 2)};
  g.h = 1.0;
  g.family = KernelFamily::Gaussian;
  g.train_Z = Eigen::MatrixXd::Zero(1, 2);
  g.train_wy = Eigen::VectorXd::Constant(1, 4.5);

  const Eigen::VectorXd eps = residuals(ds, g);
  for (int i = 0; i < 40; ++i)
    CHECK(eps(i) ==
          doctest::Approx(ds.Y()(i) - 0.5 * ds.T()(i) * 4.5).epsilon(1e-12));
}

TEST_CASE("residuals track the main effect") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Gaussian;
  spec.n = 1000;
  spec.gamma = 1.0;
  spec.sigma = 0.3;
  spec.seed = 123;
  const GeneratedData gen = generate_data(spec);
  const GEstimate g = predict_g(gen.ds, synthetic_fit(gen.B0.B));
  const Eigen::VectorXd eps = residuals(gen.ds, g);
  CHECK(pearson(eps, gen.main_eff) > 0.9);
}

TEST_CASE("eta-star smoother stays inside the residual range") {
  const Dataset ds = oracle::make_toy(90, 3, 19);
  Rng rng(53);
  Eigen::VectorXd eps(90);
  for (int i = 0; i < 90; ++i) eps(i) = -2.0 + 5.0 * rng.uniform();
  const EtaStarEstimate eta = estimate_eta_star(ds, eps);

  const double lo = eps.minCoeff(), hi = eps.maxCoeff();
  Eigen::MatrixXd Q(25, 3);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 3; ++j) Q(i, j) = 3.0 * rng.normal();
  const Eigen::VectorXd vals = eta.eval_batch(Q);
  for (int i = 0; i < 25; ++i) {
    CHECK(vals(i) >= lo);
    CHECK(vals(i) <= hi);
  }

  const EtaStarEstimate flat =
      estimate_eta_star(ds, Eigen::VectorXd::Constant(90, -0.75));
  CHECK(flat.eval(Eigen::VectorXd::Zero(3)) ==
        doctest::Approx(-0.75).epsilon(1e-12));
}

TEST_CASE("eta-star is near zero when there is no main effect") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Linear;
  spec.n = 1000;
  spec.gamma = 0.0;
  spec.sigma = 0.3;
  spec.seed = 29;
  const GeneratedData gen = generate_data(spec);
  // Exact residuals: with gamma = 0, Y - T g/2 is pure noise.
  const Eigen::VectorXd eps =
      gen.ds.Y() -
      0.5 * (gen.ds.T().cast<double>().array() * gen.g_true.array()).matrix();
  const EtaStarEstimate eta = estimate_eta_star(gen.ds, eps);
  CHECK(std::abs(eta.eval(Eigen::VectorXd::Zero(gen.ds.p()))) < 0.2);
}

TEST_CASE("estimated-star zeros reproduce the zero-eta fit bitwise") {
  const Dataset ds = oracle::make_toy(120, 3, 37);
  const FitResult f0 = imave_fit(ds, 1, EtaMode::zero());
  const FitResult fz =
      imave_fit(ds, 1, EtaMode::estimated_star(Eigen::VectorXd::Zero(120)));
  CHECK((f0.B.B.array() == fz.B.B.array()).all());
  CHECK(f0.iterations == fz.iterations);
  REQUIRE(f0.loss_trace.size() == fz.loss_trace.size());
  for (std::size_t k = 0; k < f0.loss_trace.size(); ++k)
    CHECK(f0.loss_trace[k] == fz.loss_trace[k]);
  CHECK(f0.eta_mode_label == "zero");
  CHECK(fz.eta_mode_label == "estimated_star");
}

TEST_CASE("two-stage pipeline wires stages and labels") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Linear;
  spec.n = 300;
  spec.gamma = 0.5;
  spec.sigma = 0.3;
  spec.seed = 71;
  const GeneratedData gen = generate_data(spec);
  const Imave2Result r = imave2_fit(gen.ds, 1);

  CHECK(r.stage1.eta_mode_label == "zero");
  CHECK(r.fit.eta_mode_label == "estimated_star");
  CHECK(r.eta_star.size() == 300);
  CHECK((r.fit.eta.values.array() == r.eta_star.array()).all());
  CHECK(r.smoother_fallbacks >= 0);
  CHECK(subspace_distance(r.fit.B, gen.B0) < 0.2);
  CHECK(subspace_distance(r.stage1.B, gen.B0) < 0.2);
}

TEST_CASE("smoother input validation") {
  const Dataset ds = oracle::make_toy(30, 2, 43);
  Rng rng(61);
  const FitResult fit = synthetic_fit(oracle::random_orthonormal(2, 1, rng));

  SUBCASE("propensity is required") {
    Eigen::MatrixXd X = ds.X();
    Eigen::VectorXd Y = ds.Y();
    std::vector<std::string> labels(30);
    for (int i = 0; i < 30; ++i) labels[i] = ds.T()(i) == 1 ? "1" : "-1";
    const Dataset no_pi(X, Y, labels);
    CHECK(thrown_code([&] { (void)predict_g(no_pi, fit); }) ==
          ErrorCode::InvalidArgument);
  }
  SUBCASE("binary data only") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(9, 2);
    Eigen::VectorXd Y = Eigen::VectorXd::LinSpaced(9, -1.0, 1.0);
    std::vector<std::string> labels = {"a", "b", "c", "a", "b",
                                       "c", "a", "b", "c"};
    const Dataset arms3(X, Y, labels, Eigen::VectorXd::Constant(9, 1.0 / 3));
    CHECK(thrown_code([&] { (void)predict_g(arms3, fit); }) ==
          ErrorCode::NotBinary);
    GEstimate g;
    g.B = IndexMatrix{Eigen::MatrixXd::Identity(2, 1)};
    g.h = 1.0;
    g.train_Z = Eigen::MatrixXd::Zero(1, 1);
    g.train_wy = Eigen::VectorXd::Zero(1);
    CHECK(thrown_code([&] { (void)residuals(arms3, g); }) ==
          ErrorCode::NotBinary);
  }
  SUBCASE("bandwidth override must be positive") {
    CHECK(thrown_code([&] { (void)predict_g(ds, fit, 0.0); }) ==
          ErrorCode::NonPositiveBandwidth);
    CHECK(thrown_code([&] {
            (void)estimate_eta_star(ds, Eigen::VectorXd::Zero(30), -1.0);
          }) == ErrorCode::NonPositiveBandwidth);
  }
  SUBCASE("residual vector is checked") {
    CHECK(thrown_code([&] {
            (void)estimate_eta_star(ds, Eigen::VectorXd::Zero(29));
          }) == ErrorCode::InvalidArgument);
    Eigen::VectorXd bad = Eigen::VectorXd::Zero(30);
    bad(7) = std::numeric_limits<double>::quiet_NaN();
    CHECK(thrown_code([&] { (void)estimate_eta_star(ds, bad); }) ==
          ErrorCode::NonFiniteValue);
  }
  SUBCASE("query dimension is checked") {
    const GEstimate g = predict_g(ds, fit);
    CHECK(thrown_code([&] { (void)g.eval_batch(Eigen::MatrixXd::Zero(4, 3)); }) ==
          ErrorCode::InvalidDimension);
  }
}

}  // TEST_SUITE
