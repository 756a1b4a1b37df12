#include "imave/study.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "imave/efficiency.hpp"
#include "imave/error.hpp"
#include "imave/io.hpp"
#include "imave/metrics.hpp"
#include "imave/parallel.hpp"
#include "imave/propensity.hpp"
#include "imave/rng.hpp"

namespace imave {

double quantile(std::vector<double> values, double q) {
  if (values.empty())
    fail(ErrorCode::InvalidArgument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - lo;
  return (1.0 - w) * values[lo] + w * values[hi];
}

namespace {

struct RepOutcome {
  bool ok = false;
  // [estimator][ratio] coefficient ratios; estimator 0 = imave, 1 = imave2.
  std::vector<std::vector<double>> ratios;
  // method -> (rank_corr, class_rate)
  std::vector<std::pair<double, double>> metrics;
};

struct MethodLayout {
  std::vector<std::string> names;  // metric method names, fixed order
};

double safe_ratio(double num, double den) { return num / den; }

}  // namespace

StudyResult run_replication_study(const StudyConfig& cfg) {
  if (cfg.reps < 1) fail(ErrorCode::InvalidArgument, "need reps >= 1");
  for (GShape s : cfg.shapes)
    if (s == GShape::TwoIndexGaussian)
      fail(ErrorCode::InvalidArgument,
           "the replication study covers the single-index scenarios");

  const std::string suffix = cfg.estimated_propensity ? "_pihat" : "";
  const std::vector<std::string> estimator_names = {"imave" + suffix,
                                                    "imave2" + suffix};
  MethodLayout layout;
  for (const auto& est : {"imave", "imave2"})
    for (const auto& kind : {"_index", "_ghat"})
      layout.names.push_back(est + std::string(kind) + suffix);
  for (const auto& [name, rule] : cfg.extra_rules) {
    (void)rule;
    layout.names.push_back(name);
  }

  StudyResult result;
  const int workers = resolve_workers(cfg.threads);

  std::uint64_t cell_index = 0;
  for (GShape shape : cfg.shapes) {
    for (int n : cfg.sizes) {
      ScenarioSpec base;
      base.g_shape = shape;
      base.n = n;
      base.propensity = cfg.design;
      const int p = 4;

      std::vector<RepOutcome> outcomes(cfg.reps);
      parallel_chunks(
          static_cast<std::size_t>(cfg.reps), 1, workers,
          [&](std::size_t, std::size_t rb, std::size_t re) {
            for (std::size_t rep = rb; rep < re; ++rep) {
              RepOutcome& out = outcomes[rep];
              try {
                ScenarioSpec train_spec = base;
                train_spec.seed =
                    derive_seed(cfg.seed, {cell_index, rep, 0});
                GeneratedData train = generate_data(train_spec);
                ScenarioSpec test_spec = base;
                test_spec.n = cfg.test_n;
                test_spec.seed =
                    derive_seed(cfg.seed, {cell_index, rep, 1});
                const GeneratedData test = generate_data(test_spec);

                Dataset ds = train.ds;
                if (cfg.estimated_propensity) {
                  const PropensityModel pm = estimate_propensity(ds);
                  ds = ds.with_propensity(pm.predict_observed(ds));
                }

                FitConfig fit_cfg;
                fit_cfg.threads = 1;  // replicates own the parallelism
                fit_cfg.seed = train_spec.seed;

                const FitResult f1 = imave_fit(ds, 1, EtaMode::zero(),
                                               fit_cfg);
                const Imave2Result f2 = imave2_fit(ds, 1, fit_cfg);

                out.ratios.resize(2);
                out.metrics.reserve(layout.names.size());
                const FitResult* fits[2] = {&f1, &f2.fit};
                for (int e = 0; e < 2; ++e) {
                  const Eigen::VectorXd beta = fits[e]->B.B.col(0);
                  out.ratios[e].resize(p - 1);
                  for (int j = 1; j < p; ++j)
                    out.ratios[e][j - 1] = safe_ratio(beta(j), beta(0));
                  const Eigen::VectorXd index_scores = test.ds.X() * beta;
                  const GEstimate ghat = predict_g(ds, *fits[e]);
                  const Eigen::VectorXd ghat_scores =
                      ghat.eval_batch(test.ds.X(), 1);
                  out.metrics.emplace_back(
                      rank_correlation(index_scores, test.g_true),
                      classification_rate(index_scores, test.g_true));
                  out.metrics.emplace_back(
                      rank_correlation(ghat_scores, test.g_true),
                      classification_rate(ghat_scores, test.g_true));
                }
                for (const auto& [name, rule] : cfg.extra_rules) {
                  (void)name;
                  const Eigen::VectorXd scores =
                      rule(train, test.ds.X(), train_spec.seed);
                  out.metrics.emplace_back(
                      rank_correlation(scores, test.g_true),
                      classification_rate(scores, test.g_true));
                }
                out.ok = true;
              } catch (const Error&) {
                out.ok = false;
              }
            }
          });

      // Deterministic aggregation in replicate order.
      const std::vector<std::string> ratio_names = {"b2/b1", "b3/b1",
                                                    "b4/b1"};
      for (int e = 0; e < 2; ++e) {
        CellRatios raw;
        raw.scenario = gshape_to_string(shape);
        raw.n = n;
        raw.estimator = estimator_names[e];
        for (const RepOutcome& out : outcomes)
          if (out.ok) raw.by_rep.push_back(out.ratios[e]);
        result.raw.push_back(std::move(raw));
      }
      for (int e = 0; e < 2; ++e) {
        for (int j = 0; j < p - 1; ++j) {
          double sum = 0.0, sum_sq_err = 0.0;
          std::int64_t m = 0;
          for (const RepOutcome& out : outcomes) {
            if (!out.ok) continue;
            const double r = out.ratios[e][j];
            sum += r;
            sum_sq_err += (r - 1.0) * (r - 1.0);
            ++m;
          }
          if (m == 0) continue;
          RatioSummary rs;
          rs.scenario = gshape_to_string(shape);
          rs.n = n;
          rs.estimator = estimator_names[e];
          rs.ratio = ratio_names[j];
          rs.mean = sum / m;
          rs.sqrt_mse = std::sqrt(sum_sq_err / m);
          result.ratios.push_back(rs);
        }
      }
      for (std::size_t mth = 0; mth < layout.names.size(); ++mth) {
        std::vector<double> rc, cr;
        for (const RepOutcome& out : outcomes) {
          if (!out.ok) continue;
          rc.push_back(out.metrics[mth].first);
          cr.push_back(out.metrics[mth].second);
        }
        if (rc.empty()) continue;
        MetricSummary ms;
        ms.scenario = gshape_to_string(shape);
        ms.n = n;
        ms.method = layout.names[mth];
        ms.rank_corr_q25 = quantile(rc, 0.25);
        ms.rank_corr_q50 = quantile(rc, 0.50);
        ms.rank_corr_q75 = quantile(rc, 0.75);
        ms.class_rate_q25 = quantile(cr, 0.25);
        ms.class_rate_q50 = quantile(cr, 0.50);
        ms.class_rate_q75 = quantile(cr, 0.75);
        result.metrics.push_back(ms);
      }
      for (const RepOutcome& out : outcomes)
        if (!out.ok) ++result.failed_reps;
      ++cell_index;
    }
  }

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    CsvTable t1;
    t1.columns = {"scenario", "n", "estimator", "ratio", "mean", "sqrt_mse"};
    for (const RatioSummary& r : result.ratios)
      t1.rows.push_back({r.scenario, std::to_string(r.n), r.estimator,
                         r.ratio, format_double(r.mean),
                         format_double(r.sqrt_mse)});
    write_csv(cfg.out_dir + "/table1.csv", t1);

    CsvTable t2;
    t2.columns = {"scenario",      "n",
                  "method",        "rank_corr_q25",
                  "rank_corr_q50", "rank_corr_q75",
                  "class_rate_q25", "class_rate_q50",
                  "class_rate_q75"};
    for (const MetricSummary& m : result.metrics)
      t2.rows.push_back({m.scenario, std::to_string(m.n), m.method,
                         format_double(m.rank_corr_q25),
                         format_double(m.rank_corr_q50),
                         format_double(m.rank_corr_q75),
                         format_double(m.class_rate_q25),
                         format_double(m.class_rate_q50),
                         format_double(m.class_rate_q75)});
    write_csv(cfg.out_dir + "/metrics.csv", t2);
  }
  return result;
}

void dump_study_data(const StudyConfig& cfg, const std::string& dir) {
  if (cfg.reps < 1) fail(ErrorCode::InvalidArgument, "need reps >= 1");
  std::filesystem::create_directories(dir);
  std::uint64_t cell_index = 0;
  for (GShape shape : cfg.shapes) {
    for (int n : cfg.sizes) {
      ScenarioSpec base;
      base.g_shape = shape;
      base.n = n;
      base.propensity = cfg.design;
      for (int rep = 0; rep < cfg.reps; ++rep) {
        ScenarioSpec train_spec = base;
        train_spec.seed = derive_seed(
            cfg.seed, {cell_index, static_cast<std::uint64_t>(rep), 0});
        const GeneratedData train = generate_data(train_spec);
        ScenarioSpec test_spec = base;
        test_spec.n = cfg.test_n;
        test_spec.seed = derive_seed(
            cfg.seed, {cell_index, static_cast<std::uint64_t>(rep), 1});
        const GeneratedData test = generate_data(test_spec);

        const std::string key = std::to_string(train_spec.seed);
        write_dataset_csv(dir + "/train_" + key + ".csv", train.ds, true);
        CsvTable tx;
        for (int j = 1; j <= test.ds.p(); ++j)
          tx.columns.push_back("x" + std::to_string(j));
        for (Eigen::Index i = 0; i < test.ds.n(); ++i) {
          std::vector<std::string> row;
          row.reserve(tx.columns.size());
          for (int j = 0; j < test.ds.p(); ++j)
            row.push_back(format_double(test.ds.X()(i, j)));
          tx.rows.push_back(std::move(row));
        }
        write_csv(dir + "/test_" + key + ".csv", tx);
      }
      ++cell_index;
    }
  }
}

ScoreRule file_scores_rule(const std::string& dir) {
  return [dir](const GeneratedData&, const Eigen::MatrixXd& test_X,
               std::uint64_t seed) -> Eigen::VectorXd {
    const std::string path =
        dir + "/scores_" + std::to_string(seed) + ".csv";
    const CsvTable t = read_csv(path);
    const auto col = t.find("score");
    if (!col) fail(ErrorCode::ParseError, path + " needs a 'score' column");
    if (static_cast<Eigen::Index>(t.rows.size()) != test_X.rows())
      fail(ErrorCode::ParseError,
           path + " row count does not match the test data");
    Eigen::VectorXd scores(test_X.rows());
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      scores(static_cast<Eigen::Index>(i)) = parse_double(t.rows[i][*col], path);
    return scores;
  };
}

}  // namespace imave
