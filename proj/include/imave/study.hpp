#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "imave/simulation.hpp"

namespace imave {

// External scoring rule plugged into the replication study: given training
// data and test predictors, returns a per-row score whose sign recommends
// the +1 arm. Used both for built-in estimators and for file-based rules.
using ScoreRule = std::function<Eigen::VectorXd(
    const GeneratedData& train, const Eigen::MatrixXd& test_X,
    std::uint64_t seed)>;

struct StudyConfig {
  std::vector<GShape> shapes = {GShape::Linear, GShape::Logistic,
                                GShape::Gaussian};
  std::vector<int> sizes = {200, 500, 1000};
  int reps = 200;
  int test_n = 10000;
  // Treatment assignment design of the generated data; estimated_propensity
  // REPLACES the known probabilities with logistic-regression estimates and
  // suffixes method names with "_pihat".
  PropensityDesign design = PropensityDesign::Balanced;
  bool estimated_propensity = false;
  std::uint64_t seed = 20240901;
  int threads = 0;
  std::string out_dir;  // empty: no files, results returned only
  // name -> rule; scores are evaluated with the index/ghat metrics. Built-in
  // index estimators are always run.
  std::map<std::string, ScoreRule> extra_rules;
};

struct RatioSummary {
  std::string scenario;
  int n = 0;
  std::string estimator;  // "imave" or "imave2"
  std::string ratio;      // "b2/b1", ...
  double mean = 0.0;
  double sqrt_mse = 0.0;
};

struct MetricSummary {
  std::string scenario;
  int n = 0;
  std::string method;  // e.g. "imave_index", "imave2_ghat", "imave_index_pihat"
  double rank_corr_q25 = 0.0, rank_corr_q50 = 0.0, rank_corr_q75 = 0.0;
  double class_rate_q25 = 0.0, class_rate_q50 = 0.0, class_rate_q75 = 0.0;
};

// Raw per-replicate coefficient ratios for one (scenario, n, estimator)
// cell; failed replicates are omitted. Kept so summary columns can be
// re-derived independently.
struct CellRatios {
  std::string scenario;
  int n = 0;
  std::string estimator;
  std::vector<std::vector<double>> by_rep;  // [rep][ratio index]
};

struct StudyResult {
  std::vector<RatioSummary> ratios;
  std::vector<MetricSummary> metrics;
  std::vector<CellRatios> raw;
  int failed_reps = 0;
};

// Runs the full synthetic benchmark: per replicate, generates training and
// shared test data, fits both estimators at d = 1, and accumulates
// coefficient-ratio and ranking metrics. Writes table1.csv and metrics.csv
// under out_dir when set. Deterministic for a given config (replicate seeds
// derive from seed via splitmix64; parallel replicates write to their own
// slots).
StudyResult run_replication_study(const StudyConfig& cfg);

// File-based prediction exchange for methods implemented elsewhere.
// dump_study_data writes every replicate's inputs under dir, keyed by the
// replicate's training seed: train_<seed>.csv (x1..xp, y, t, pi) and
// test_<seed>.csv (x1..xp). An external method scores each test file into
// scores_<seed>.csv (single column "score", one row per test row);
// file_scores_rule reads those back as an extra rule. A missing or
// short file fails that replicate only (counted in failed_reps).
void dump_study_data(const StudyConfig& cfg, const std::string& dir);
ScoreRule file_scores_rule(const std::string& dir);

// Linear-interpolation quantile (same convention as the summaries).
double quantile(std::vector<double> values, double q);

}  // namespace imave
