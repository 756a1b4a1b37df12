#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/error.hpp"
#include "imave/fit.hpp"
#include "imave/grassmann.hpp"
#include "imave/io.hpp"
#include "imave/multiarm.hpp"
#include "imave/rng.hpp"
#include "imave/simulation.hpp"
#include "imave/study.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace imave;
using testsupport::thrown_code;

TEST_SUITE("simulation") {

TEST_CASE("outcome assembly is exact without noise") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Gaussian;
  spec.n = 200;
  spec.gamma = 0.7;
  spec.sigma = 0.0;
  spec.seed = 5;
  const GeneratedData gen = generate_data(spec);
  for (int i = 0; i < 200; ++i)
    CHECK(gen.ds.Y()(i) ==
          gen.main_eff(i) + 0.5 * gen.ds.T()(i) * gen.g_true(i));

  // Main effect is (gamma * first-index)^2 by construction.
  const Eigen::VectorXd u1 = gen.ds.X() * gen.B_raw.col(0);
  for (int i = 0; i < 200; ++i)
    CHECK(gen.main_eff(i) ==
          doctest::Approx(std::pow(spec.gamma * u1(i), 2)).epsilon(1e-14));
}

TEST_CASE("true contrast values and directions") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Gaussian;
  spec.tau = 7.0;

  // Zero at the origin, symmetric tails approaching +-tau/2.
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(3, 4);
  X.row(1).setConstant(10.0);   // index 40
  X.row(2).setConstant(-10.0);
  const Eigen::VectorXd g = true_contrast(spec, X);
  CHECK(g(0) == 0.0);
  CHECK(g(1) == doctest::Approx(3.5).epsilon(1e-9));
  CHECK(g(2) == doctest::Approx(-3.5).epsilon(1e-9));

  // The index is the all-ones direction: moving mass between coordinates
  // with a fixed sum leaves g unchanged.
  Eigen::MatrixXd X2(2, 4);
  X2 << 1.0, 0.5, -0.25, 0.75,   // sum 2
        2.0, 0.0, 0.0, 0.0;      // sum 2
  const Eigen::VectorXd g2 = true_contrast(spec, X2);
  CHECK(g2(0) == doctest::Approx(g2(1)).epsilon(1e-14));

  spec.g_shape = GShape::Linear;
  const Eigen::VectorXd gl = true_contrast(spec, X2);
  CHECK(gl(0) == doctest::Approx(14.0).epsilon(1e-14));
}

TEST_CASE("generated moments match the design") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Linear;
  spec.n = 20000;
  spec.seed = 17;
  const GeneratedData gen = generate_data(spec);
  const double root_n = std::sqrt(20000.0);

  // X ~ N(0, I): column means ~ 0, variances ~ 1, correlations ~ 0.
  for (int a = 0; a < 4; ++a) {
    CHECK(std::abs(gen.ds.X().col(a).mean()) < 4.0 / root_n);
    const Eigen::ArrayXd ca =
        gen.ds.X().col(a).array() - gen.ds.X().col(a).mean();
    CHECK(ca.square().mean() == doctest::Approx(1.0).epsilon(0.05));
    for (int b = a + 1; b < 4; ++b) {
      const Eigen::ArrayXd cb =
          gen.ds.X().col(b).array() - gen.ds.X().col(b).mean();
      CHECK(std::abs((ca * cb).mean()) < 4.0 / root_n);
    }
  }

  // Balanced design: P(T = +1) ~ 1/2 and pi is exactly 1/2.
  double plus = 0.0;
  for (int i = 0; i < 20000; ++i) plus += gen.ds.T()(i) == 1 ? 1.0 : 0.0;
  CHECK(std::abs(plus / 20000.0 - 0.5) < 1.5 / root_n);
  CHECK((gen.ds.pi().array() == 0.5).all());
}

TEST_CASE("logistic assignment records the exact propensity") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Linear;
  spec.n = 500;
  spec.propensity = PropensityDesign::LogisticAssign;
  spec.seed = 23;

  SUBCASE("default alternating coefficients") {
    const GeneratedData gen = generate_data(spec);
    Eigen::VectorXd coeffs(4);
    coeffs << 0.2, -0.2, 0.2, -0.2;
    for (int i = 0; i < 500; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-coeffs.dot(gen.ds.X().row(i))));
      const double expect = gen.ds.T()(i) == 1 ? s : 1.0 - s;
      CHECK(gen.ds.pi()(i) == expect);
    }
  }
  SUBCASE("custom coefficients") {
    spec.prop_coeffs = Eigen::VectorXd::Zero(4);
    spec.prop_coeffs(2) = 1.0;
    const GeneratedData gen = generate_data(spec);
    for (int i = 0; i < 500; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-gen.ds.X()(i, 2)));
      CHECK(gen.ds.pi()(i) == (gen.ds.T()(i) == 1 ? s : 1.0 - s));
    }
  }
  SUBCASE("coefficient length is validated") {
    spec.prop_coeffs = Eigen::VectorXd::Zero(3);
    CHECK(thrown_code([&] { (void)generate_data(spec); }) ==
          ErrorCode::InvalidArgument);
  }
}

TEST_CASE("generation is deterministic in the spec seed") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Logistic;
  spec.n = 150;
  spec.seed = 31;
  const GeneratedData a = generate_data(spec);
  const GeneratedData b = generate_data(spec);
  CHECK((a.ds.X().array() == b.ds.X().array()).all());
  CHECK((a.ds.Y().array() == b.ds.Y().array()).all());
  CHECK((a.ds.T().array() == b.ds.T().array()).all());
  CHECK((a.g_true.array() == b.g_true.array()).all());

  spec.seed = 32;
  const GeneratedData c = generate_data(spec);
  CHECK(!(a.ds.Y().array() == c.ds.Y().array()).all());
}

TEST_CASE("generating directions and their normalization") {
  ScenarioSpec spec;
  spec.g_shape = GShape::Linear;
  spec.n = 10;
  const GeneratedData gen = generate_data(spec);
  // ones / ||ones|| is exactly 0.5 per coordinate at p = 4.
  REQUIRE(gen.B0.d() == 1);
  for (int r = 0; r < 4; ++r) CHECK(gen.B0.B(r, 0) == 0.5);

  ScenarioSpec two;
  two.g_shape = GShape::TwoIndexGaussian;
  two.n = 10;
  const GeneratedData g2 = generate_data(two);
  REQUIRE(g2.B_raw.cols() == 2);
  CHECK(g2.ds.p() == 10);
  for (int r = 0; r < 10; ++r) {
    CHECK(g2.B_raw(r, 0) == 1.0);
    CHECK(g2.B_raw(r, 1) == (r % 2 == 0 ? 1.0 : -1.0));
  }
  const Eigen::MatrixXd BtB = g2.B0.B.transpose() * g2.B0.B;
  CHECK((BtB - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);
  CHECK(subspace_distance(g2.B0, IndexMatrix{g2.B_raw.col(0) / g2.B_raw.col(0).norm()}) >
        0.9);  // spans two directions, not one
  CHECK(subspace_distance(g2.B0, grassmann_normalize(g2.B_raw)) < 1e-12);
}

TEST_CASE("study runs are deterministic and thread-count independent") {
  StudyConfig cfg;
  cfg.shapes = {GShape::Linear};
  cfg.sizes = {60};
  cfg.reps = 3;
  cfg.test_n = 120;
  cfg.seed = 91;
  cfg.threads = 1;
  const StudyResult a = run_replication_study(cfg);
  const StudyResult b = run_replication_study(cfg);
  cfg.threads = 3;
  const StudyResult c = run_replication_study(cfg);

  auto same = [](const StudyResult& x, const StudyResult& y) {
    REQUIRE(x.ratios.size() == y.ratios.size());
    for (std::size_t i = 0; i < x.ratios.size(); ++i) {
      CHECK(x.ratios[i].scenario == y.ratios[i].scenario);
      CHECK(x.ratios[i].estimator == y.ratios[i].estimator);
      CHECK(x.ratios[i].ratio == y.ratios[i].ratio);
      CHECK(x.ratios[i].mean == y.ratios[i].mean);
      CHECK(x.ratios[i].sqrt_mse == y.ratios[i].sqrt_mse);
    }
    REQUIRE(x.metrics.size() == y.metrics.size());
    for (std::size_t i = 0; i < x.metrics.size(); ++i) {
      CHECK(x.metrics[i].method == y.metrics[i].method);
      CHECK(x.metrics[i].rank_corr_q50 == y.metrics[i].rank_corr_q50);
      CHECK(x.metrics[i].class_rate_q50 == y.metrics[i].class_rate_q50);
    }
    CHECK(x.failed_reps == y.failed_reps);
  };
  same(a, b);
  same(a, c);
  CHECK(a.failed_reps == 0);
  // Four built-in methods on one cell.
  CHECK(a.metrics.size() == 4);
  CHECK(a.ratios.size() == 6);  // 2 estimators x 3 ratios
}

TEST_CASE("summary columns re-derive from the raw ratios") {
  StudyConfig cfg;
  cfg.shapes = {GShape::Gaussian};
  cfg.sizes = {60};
  cfg.reps = 4;
  cfg.test_n = 80;
  cfg.seed = 41;
  cfg.threads = 1;
  const StudyResult res = run_replication_study(cfg);
  REQUIRE(res.failed_reps == 0);

  for (const RatioSummary& rs : res.ratios) {
    const CellRatios* cell = nullptr;
    for (const CellRatios& cr : res.raw)
      if (cr.scenario == rs.scenario && cr.n == rs.n &&
          cr.estimator == rs.estimator)
        cell = &cr;
    REQUIRE(cell != nullptr);
    const int j = rs.ratio == "b2/b1" ? 0 : (rs.ratio == "b3/b1" ? 1 : 2);
    std::vector<double> vals;
    for (const auto& rep : cell->by_rep) vals.push_back(rep[j]);
    CHECK(rs.mean == doctest::Approx(oracle::mean_of(vals)).epsilon(1e-12));
    CHECK(rs.sqrt_mse ==
          doctest::Approx(oracle::sqrt_mse_about(vals, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("quantile interpolates linearly") {
  std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(quantile({7.5}, 0.9) == 7.5);
  CHECK(thrown_code([] { (void)quantile({}, 0.5); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("file-based score exchange round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "imave_test_exchange";
  fs::remove_all(dir);

  StudyConfig cfg;
  cfg.shapes = {GShape::Linear};
  cfg.sizes = {50};
  cfg.reps = 2;
  cfg.test_n = 40;
  cfg.seed = 777;
  cfg.threads = 1;
  dump_study_data(cfg, dir.string());

  // Score each dumped test file with its first predictor column.
  int files = 0;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    const std::uint64_t train_seed =
        derive_seed(cfg.seed, {0, static_cast<std::uint64_t>(rep), 0});
    const std::string key = std::to_string(train_seed);
    REQUIRE(fs::exists(dir / ("train_" + key + ".csv")));
    REQUIRE(fs::exists(dir / ("test_" + key + ".csv")));
    const CsvTable test = read_csv((dir / ("test_" + key + ".csv")).string());
    REQUIRE(test.rows.size() == 40);
    const auto x1 = test.find("x1");
    REQUIRE(x1.has_value());
    CsvTable scores;
    scores.columns = {"score"};
    for (const auto& row : test.rows) scores.rows.push_back({row[*x1]});
    write_csv((dir / ("scores_" + key + ".csv")).string(), scores);
    ++files;
  }
  CHECK(files == 2);

  cfg.extra_rules["ext"] = file_scores_rule(dir.string());
  const StudyResult res = run_replication_study(cfg);
  CHECK(res.failed_reps == 0);
  bool found = false;
  for (const MetricSummary& m : res.metrics) {
    if (m.method != "ext") continue;
    found = true;
    // x1 carries 1/sqrt(4) of the linear index: clearly positive rank corr.
    CHECK(m.rank_corr_q50 > 0.2);
  }
  CHECK(found);

  // A missing exchange directory fails every replicate, and only counts.
  StudyConfig bad = cfg;
  bad.extra_rules.clear();
  bad.extra_rules["ext"] =
      file_scores_rule((dir / "not_there").string());
  const StudyResult broken = run_replication_study(bad);
  CHECK(broken.failed_reps == 2);
  CHECK(broken.metrics.empty());
  CHECK(broken.ratios.empty());
  fs::remove_all(dir);
}

TEST_CASE("study rejects the two-index scenario") {
  StudyConfig cfg;
  cfg.shapes = {GShape::TwoIndexGaussian};
  CHECK(thrown_code([&] { (void)run_replication_study(cfg); }) ==
        ErrorCode::InvalidArgument);
  CHECK(thrown_code([&] {
          StudyConfig c2;
          c2.reps = 0;
          (void)run_replication_study(c2);
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("two-arm contrast fit equals the binary fit bitwise") {
  const Dataset ds = oracle::make_toy(100, 3, 61);
  const FitResult binary = imave_fit(ds, 1, EtaMode::zero());
  const MultiArmModel general =
      multiarm_fit(ds, ContrastSpec::default_binary(), 1);
  CHECK((binary.B.B.array() == general.B.B.array()).all());
  CHECK(binary.iterations == general.iterations);
  REQUIRE(binary.loss_trace.size() == general.loss_trace.size());
  for (std::size_t k = 0; k < binary.loss_trace.size(); ++k)
    CHECK(binary.loss_trace[k] == general.loss_trace[k]);
}

TEST_CASE("three-arm contrast fit recovers the index") {
  // Omega rows sum to zero; arms a/b/c are assigned uniformly and outcomes
  // follow Y = c_arm' h(u) with u = x1, so the fitted index must be e1.
  Eigen::MatrixXd omega(2, 3);
  omega << 1.0, -1.0, 0.0,
          -0.5, -0.5, 1.0;
  const ContrastSpec spec = ContrastSpec::validated(omega);
  const Eigen::MatrixXd coef = spec.arm_coefficients();  // 2 x 3

  const int n = 400, p = 3;
  Rng rng(67);
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  Eigen::VectorXd Y(n);
  std::vector<std::string> labels(n);
  const char* names[3] = {"a", "b", "c"};
  for (int i = 0; i < n; ++i) {
    const int arm = i % 3;
    labels[i] = names[arm];
    const double u = X(i, 0);
    Eigen::Vector2d h(2.0 * u, u + 0.3 * u * u * u);
    Y(i) = coef.col(arm).dot(h);
  }
  const Dataset ds(X, Y, labels, Eigen::VectorXd::Constant(n, 1.0 / 3));

  const MultiArmModel m = multiarm_fit(ds, spec, 1);
  REQUIRE(m.B.d() == 1);
  CHECK(m.g_values.rows() == n);
  CHECK(m.g_values.cols() == 2);
  CHECK(std::abs(m.B.B(0, 0)) > 0.99);
  CHECK(std::abs(m.B.B(1, 0)) < 0.1);
  CHECK(std::abs(m.B.B(2, 0)) < 0.1);

  SUBCASE("binary-only eta refresh is rejected") {
    CHECK(thrown_code([&] {
            (void)multiarm_fit(ds, spec, 1, EtaMode::song_pi());
          }) == ErrorCode::NotBinary);
  }
  SUBCASE("standardization is rejected") {
    FitConfig cfg;
    cfg.standardize = true;
    CHECK(thrown_code([&] {
            (void)multiarm_fit(ds, spec, 1, EtaMode::zero(), cfg);
          }) == ErrorCode::InvalidArgument);
  }
}

}  // TEST_SUITE
