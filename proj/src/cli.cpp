#include "imave/cli.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imave/efficiency.hpp"
#include "imave/error.hpp"
#include "imave/fit.hpp"
#include "imave/io.hpp"
#include "imave/metrics.hpp"
#include "imave/model_selection.hpp"
#include "imave/multiarm.hpp"
#include "imave/propensity.hpp"
#include "imave/simulation.hpp"
#include "imave/study.hpp"

namespace imave {

namespace {

KernelFamily parse_kernel(const std::string& name) {
  if (name == "epanechnikov") return KernelFamily::Epanechnikov;
  if (name == "quadratic") return KernelFamily::Quadratic;
  if (name == "gaussian") return KernelFamily::Gaussian;
  fail(ErrorCode::InvalidArgument, "unknown kernel: " + name);
}

PropensityDesign parse_design(const std::string& name) {
  if (name == "balanced") return PropensityDesign::Balanced;
  if (name == "logistic") return PropensityDesign::LogisticAssign;
  fail(ErrorCode::InvalidArgument,
       "assignment design must be balanced or logistic, got '" + name + "'");
}

// Options shared by every estimator-facing subcommand.
struct CommonOpts {
  std::string input;
  int d = 1;
  std::uint64_t seed = 0;
  std::string kernel = "epanechnikov";
  std::optional<double> c1, c3, rh, rh_prime;
  double ridge = 1e-8;
  int max_iter = 50;
  double tol = 1e-6;
  int threads = 0;
  bool standardize = false;
  bool estimate_pi = false;
  std::string out;
};

void add_common(CLI::App* sub, CommonOpts& o, bool with_d) {
  sub->add_option("--input", o.input, "input data CSV (x1..xp, y, t[, pi])")
      ->required();
  if (with_d)
    sub->add_option("--d", o.d, "index dimension (>= 1)")->required();
  sub->add_option("--seed", o.seed, "64-bit seed");
  sub->add_option("--kernel", o.kernel,
                  "epanechnikov | quadratic | gaussian");
  sub->add_option("--c1", o.c1, "initial-bandwidth constant override");
  sub->add_option("--c3", o.c3, "bandwidth-floor constant override");
  sub->add_option("--rh", o.rh, "initial-bandwidth rate override");
  sub->add_option("--rh-prime", o.rh_prime, "floor rate override");
  sub->add_option("--ridge", o.ridge, "conditioning fallback scale");
  sub->add_option("--max-iter", o.max_iter, "iteration cap");
  sub->add_option("--tol", o.tol, "convergence tolerance on B");
  sub->add_option("--threads", o.threads,
                  "worker cap (0: IMAVE_THREADS, then hardware)");
  sub->add_flag("--standardize", o.standardize,
                "fit on per-column standardized predictors");
  sub->add_flag("--estimate-pi", o.estimate_pi,
                "estimate propensities by logistic regression even when a "
                "pi column is present");
  sub->add_option("--out", o.out, "output path (default: stdout)");
}

FitConfig make_fit_config(const CommonOpts& o) {
  FitConfig cfg;
  cfg.seed = o.seed;
  cfg.kernel = parse_kernel(o.kernel);
  cfg.c1 = o.c1;
  cfg.c3 = o.c3;
  cfg.rh = o.rh;
  cfg.rh_prime = o.rh_prime;
  cfg.ridge = o.ridge;
  cfg.max_iter = o.max_iter;
  cfg.tol = o.tol;
  cfg.threads = o.threads;
  cfg.standardize = o.standardize;
  return cfg;
}

// Loads data and guarantees propensities: the pi column wins unless
// re-estimation is forced; without one, binary data gets a logistic fit.
Dataset load_with_propensity(const std::string& path, bool estimate_pi) {
  Dataset ds = read_dataset_csv(path);
  if (ds.has_propensity() && !estimate_pi) return ds;
  if (!ds.binary())
    fail(ErrorCode::InvalidArgument,
         "data with more than two arms needs a pi column");
  const PropensityModel pm = estimate_propensity(ds);
  return ds.with_propensity(pm.predict_observed(ds));
}

void emit(const std::string& text, const std::string& out_path,
          std::ostream& out) {
  if (out_path.empty())
    out << text << "\n";
  else
    write_text_file(out_path, text + "\n");
}

Eigen::MatrixXd x_matrix(const CsvTable& t, const std::string& path) {
  std::vector<std::size_t> xcols;
  for (int j = 1;; ++j) {
    const auto c = t.find("x" + std::to_string(j));
    if (!c) break;
    xcols.push_back(*c);
  }
  if (xcols.empty())
    fail(ErrorCode::ParseError, path + " must have x1..xp columns");
  Eigen::MatrixXd X(t.rows.size(), xcols.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < xcols.size(); ++j)
      X(i, j) = parse_double(t.rows[i][xcols[j]], path);
  return X;
}

ContrastSpec contrast_from_json(const std::string& text) {
  std::vector<std::vector<double>> rows;
  try {
    rows = nlohmann::json::parse(text)
               .get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError,
         std::string("bad contrast matrix JSON: ") + e.what());
  }
  if (rows.empty() || rows[0].empty())
    fail(ErrorCode::InvalidArgument, "contrast matrix is empty");
  Eigen::MatrixXd omega(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      fail(ErrorCode::InvalidArgument, "contrast matrix is ragged");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      omega(i, j) = rows[i][j];
  }
  return ContrastSpec::validated(omega);
}

int run_fit(const CommonOpts& o, const std::string& eta_name,
            const std::string& contrast_json, std::ostream& out) {
  if (o.d < 1) fail(ErrorCode::InvalidDimension, "fit requires d >= 1");
  const Dataset ds = load_with_propensity(o.input, o.estimate_pi);
  const FitConfig cfg = make_fit_config(o);

  FitResult res;
  if (!contrast_json.empty()) {
    if (eta_name != "zero")
      fail(ErrorCode::InvalidArgument,
           "--contrast supports --eta zero only");
    const ContrastSpec spec = contrast_from_json(contrast_json);
    const MultiArmModel m =
        multiarm_fit(ds, spec, o.d, EtaMode::zero(), cfg);
    res.B = m.B;
    res.d = m.d;
    res.eta = EtaMode::zero();
    res.eta_mode_label = "zero";
    res.iterations = m.iterations;
    res.converged = m.converged;
    res.loss_trace = m.loss_trace;
    res.h_trace = m.h_trace;
    res.seed = cfg.seed;
  } else {
    EtaMode eta;
    if (eta_name == "zero")
      eta = EtaMode::zero();
    else if (eta_name == "song_pi")
      eta = EtaMode::song_pi();
    else
      fail(ErrorCode::InvalidArgument,
           "--eta must be zero or song_pi (the efficient offset comes from "
           "fit2)");
    res = imave_fit(ds, o.d, eta, cfg);
  }
  emit(fit_result_to_json(res), o.out, out);
  return 0;
}

int run_fit2(const CommonOpts& o, const std::optional<double>& h_g,
             const std::optional<double>& h_eta, std::ostream& out) {
  if (o.d < 1) fail(ErrorCode::InvalidDimension, "fit2 requires d >= 1");
  const Dataset ds = load_with_propensity(o.input, o.estimate_pi);
  FitConfig cfg = make_fit_config(o);
  cfg.h_g = h_g;
  cfg.h_eta = h_eta;
  const Imave2Result res = imave2_fit(ds, o.d, cfg);
  emit(fit_result_to_json(res.fit), o.out, out);
  return 0;
}

int run_predict(const std::string& fit_path, const std::string& train_path,
                const std::string& input_path, const std::string& kernel,
                const std::optional<double>& h, bool estimate_pi,
                int threads, const std::string& out_path,
                std::ostream& out) {
  const FitResult fit = fit_result_from_json(read_text_file(fit_path));
  const Dataset train = load_with_propensity(train_path, estimate_pi);
  if (train.p() != fit.B.p())
    fail(ErrorCode::InvalidDimension,
         "training data and fitted index disagree on p");
  const Eigen::MatrixXd X = x_matrix(read_csv(input_path), input_path);
  if (X.cols() != fit.B.p())
    fail(ErrorCode::InvalidDimension,
         "prediction data and fitted index disagree on p");
  const GEstimate ghat = predict_g(train, fit, h, parse_kernel(kernel));
  const Eigen::VectorXd scores = ghat.eval_batch(X, threads);

  CsvTable t;
  t.columns = {"ghat"};
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    t.rows.push_back({format_double(scores(i))});
  if (out_path.empty()) {
    out << "ghat\n";
    for (Eigen::Index i = 0; i < scores.size(); ++i)
      out << format_double(scores(i)) << "\n";
  } else {
    write_csv(out_path, t);
  }
  return 0;
}

int run_dimselect(const CommonOpts& o, int d_max, int folds, bool no_stratify,
                  std::ostream& out) {
  const Dataset ds = load_with_propensity(o.input, o.estimate_pi);
  const FitConfig cfg = make_fit_config(o);
  const CvResult cv =
      select_dimension(ds, d_max, o.seed, cfg, folds, !no_stratify);
  emit(cv_result_to_json(cv), o.out, out);
  return 0;
}

int run_simulate(const std::string& scenario, int n, int p, double tau,
                 double gamma, double sigma, const std::string& propensity,
                 std::uint64_t seed, const std::string& out_path,
                 std::string truth_path) {
  ScenarioSpec spec;
  spec.g_shape = gshape_from_string(scenario);
  spec.n = n;
  spec.p = p;
  spec.tau = tau;
  spec.gamma = gamma;
  spec.sigma = sigma;
  spec.propensity = parse_design(propensity);
  spec.seed = seed;
  const GeneratedData gen = generate_data(spec);
  write_dataset_csv(out_path, gen.ds, true);

  if (truth_path.empty()) {
    const std::string suffix = ".csv";
    if (out_path.size() > suffix.size() &&
        out_path.compare(out_path.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
      truth_path =
          out_path.substr(0, out_path.size() - suffix.size()) + "_truth.csv";
    else
      truth_path = out_path + "_truth.csv";
  }
  // Sidecar repeats the data columns and adds the generator's per-row truth,
  // so `evaluate` needs only this one file next to the predictions.
  CsvTable t;
  const Dataset& ds = gen.ds;
  for (int j = 1; j <= ds.p(); ++j)
    t.columns.push_back("x" + std::to_string(j));
  t.columns.insert(t.columns.end(),
                   {"y", "t", "pi", "g_true", "main_effect"});
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    std::vector<std::string> row;
    row.reserve(t.columns.size());
    for (int j = 0; j < ds.p(); ++j)
      row.push_back(format_double(ds.X()(i, j)));
    row.push_back(format_double(ds.Y()(i)));
    row.push_back(ds.label_of_code(ds.T()(i)));
    row.push_back(format_double(ds.pi()(i)));
    row.push_back(format_double(gen.g_true(i)));
    row.push_back(format_double(gen.main_eff(i)));
    t.rows.push_back(std::move(row));
  }
  write_csv(truth_path, t);
  return 0;
}

int run_evaluate(const std::string& pred_path, const std::string& test_path,
                 const std::string& out_path, std::ostream& out) {
  const CsvTable pred = read_csv(pred_path);
  auto score_col = pred.find("ghat");
  if (!score_col) score_col = pred.find("score");
  if (!score_col)
    fail(ErrorCode::ParseError,
         pred_path + " needs a 'ghat' or 'score' column");
  Eigen::VectorXd scores(pred.rows.size());
  for (std::size_t i = 0; i < pred.rows.size(); ++i)
    scores(static_cast<Eigen::Index>(i)) =
        parse_double(pred.rows[i][*score_col], pred_path);

  const CsvTable test = read_csv(test_path);
  const auto truth_col = test.find("g_true");
  if (!truth_col)
    fail(ErrorCode::ParseError, test_path + " needs a 'g_true' column");
  if (test.rows.size() != pred.rows.size())
    fail(ErrorCode::InvalidArgument,
         "prediction and test files disagree on the row count");
  Eigen::VectorXd g_true(test.rows.size());
  for (std::size_t i = 0; i < test.rows.size(); ++i)
    g_true(static_cast<Eigen::Index>(i)) =
        parse_double(test.rows[i][*truth_col], test_path);

  MetricReport report;
  try {
    report.rank_correlation = rank_correlation(scores, g_true);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ConstantInput) throw;
  }
  report.classification_rate = classification_rate(scores, g_true);

  // Benefit needs outcomes and arms; compute it when the test file carries
  // the data columns too.
  if (test.find("y") && test.find("t") && test.find("x1")) {
    const Dataset ds = read_dataset_csv(test_path);
    Eigen::VectorXi rule(scores.size());
    for (Eigen::Index i = 0; i < scores.size(); ++i)
      rule(i) = scores(i) >= 0.0 ? 1 : -1;
    report.benefit = benefit_metrics(ds, rule);
    report.has_benefit = true;
  }
  emit(metric_report_to_json(report), out_path, out);
  return 0;
}

struct StudyOpts {
  std::vector<std::string> scenarios = {"linear", "logistic", "gaussian"};
  std::vector<int> sizes = {200, 500, 1000};
  int reps = 200;
  int test_n = 10000;
  std::string design = "balanced";
  bool estimated_pi = false;
  std::uint64_t seed = 20240901;
  int threads = 0;
  std::string out_dir;
  std::vector<std::string> externals;  // name=dir
  std::string dump_dir;
};

int run_study(const StudyOpts& o, std::ostream& out) {
  StudyConfig cfg;
  cfg.shapes.clear();
  for (const std::string& s : o.scenarios)
    cfg.shapes.push_back(gshape_from_string(s));
  cfg.sizes = o.sizes;
  cfg.reps = o.reps;
  cfg.test_n = o.test_n;
  cfg.design = parse_design(o.design);
  cfg.estimated_propensity = o.estimated_pi;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.out_dir = o.out_dir;
  for (const std::string& spec : o.externals) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      fail(ErrorCode::InvalidArgument,
           "--external expects name=dir, got '" + spec + "'");
    cfg.extra_rules[spec.substr(0, eq)] =
        file_scores_rule(spec.substr(eq + 1));
  }
  if (!o.dump_dir.empty()) {
    dump_study_data(cfg, o.dump_dir);
    out << "wrote replicate inputs under " << o.dump_dir << "\n";
    return 0;
  }
  const StudyResult res = run_replication_study(cfg);
  out << "replicates failed: " << res.failed_reps << "\n";
  out << "wrote " << cfg.out_dir << "/table1.csv and " << cfg.out_dir
      << "/metrics.csv\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"Index-structured treatment effect-modification estimation",
               "imave"};
  app.require_subcommand(1);
  // One config entry point for every subcommand: keys live under a
  // [subcommand] section (or dotted subcommand.key form). Fallthrough lets
  // `--config` appear after the subcommand name.
  app.fallthrough();
  app.set_config("--config", "",
                 "INI file: [subcommand] section (or subcommand.key) "
                 "entries mirroring the flags");

  CommonOpts fit_o;
  std::string fit_eta = "zero";
  std::string fit_contrast;
  CLI::App* fit = app.add_subcommand(
      "fit", "alternating index fit; writes the fit as JSON");
  add_common(fit, fit_o, true);
  fit->add_option("--eta", fit_eta, "offset mode: zero | song_pi");
  fit->add_option("--contrast", fit_contrast,
                  "JSON (K-1)xK contrast matrix for multi-arm data");

  CommonOpts fit2_o;
  std::optional<double> fit2_hg, fit2_heta;
  CLI::App* fit2 = app.add_subcommand(
      "fit2", "two-stage efficient fit; writes the final fit as JSON");
  add_common(fit2, fit2_o, true);
  fit2->add_option("--h-g", fit2_hg, "contrast smoother bandwidth override");
  fit2->add_option("--h-eta", fit2_heta,
                   "residual smoother bandwidth override");

  std::string pr_fit, pr_train, pr_input, pr_out;
  std::string pr_kernel = "epanechnikov";
  std::optional<double> pr_h;
  bool pr_estimate_pi = false;
  int pr_threads = 0;
  CLI::App* pred = app.add_subcommand(
      "predict", "contrast values at new rows from a saved fit");
  pred->add_option("--fit", pr_fit, "fit JSON path")->required();
  pred->add_option("--train", pr_train, "training data CSV")->required();
  pred->add_option("--input", pr_input, "rows to score (x1..xp)")
      ->required();
  pred->add_option("--kernel", pr_kernel, "smoother kernel");
  pred->add_option("--smoother-h", pr_h, "smoother bandwidth override");
  pred->add_flag("--estimate-pi", pr_estimate_pi,
                 "re-estimate training propensities");
  pred->add_option("--threads", pr_threads, "worker cap");
  pred->add_option("--out", pr_out, "output CSV (default: stdout)");

  CommonOpts dim_o;
  int dim_max = -1, dim_folds = 5;
  bool dim_no_stratify = false;
  CLI::App* dim = app.add_subcommand(
      "dimselect", "cross-validated index dimension; writes JSON");
  add_common(dim, dim_o, false);
  dim->add_option("--d-max", dim_max,
                  "largest candidate dimension (default min(p, 4))");
  dim->add_option("--folds", dim_folds, "number of folds");
  dim->add_flag("--no-stratify", dim_no_stratify,
                "plain random folds instead of per-arm stratified folds");

  std::string sim_scenario, sim_out, sim_truth;
  std::string sim_prop = "balanced";
  int sim_n = 0, sim_p = 0;
  double sim_tau = 7.0, sim_gamma = 1.0, sim_sigma = 0.6;
  std::uint64_t sim_seed = 0;
  CLI::App* sim = app.add_subcommand(
      "simulate", "synthetic benchmark data + per-row truth sidecar");
  sim->add_option("--scenario", sim_scenario,
                  "linear | logistic | gaussian | twoindex")
      ->required();
  sim->add_option("--n", sim_n, "sample size")->required();
  sim->add_option("--p", sim_p, "predictor count (0: scenario default)");
  sim->add_option("--tau", sim_tau, "contrast amplitude");
  sim->add_option("--gamma", sim_gamma, "main-effect scale");
  sim->add_option("--sigma", sim_sigma, "noise sd");
  sim->add_option("--propensity", sim_prop, "balanced | logistic");
  sim->add_option("--seed", sim_seed, "64-bit seed");
  sim->add_option("--out", sim_out, "data CSV path")->required();
  sim->add_option("--truth", sim_truth,
                  "truth sidecar path (default: <out>_truth.csv)");

  std::string ev_pred, ev_test, ev_out;
  CLI::App* ev = app.add_subcommand(
      "evaluate", "rank/classification/benefit metrics; writes JSON");
  ev->add_option("--pred", ev_pred, "prediction CSV (ghat or score column)")
      ->required();
  ev->add_option("--test", ev_test, "test CSV with g_true (+ data columns)")
      ->required();
  ev->add_option("--out", ev_out, "output path (default: stdout)");

  StudyOpts st_o;
  CLI::App* st = app.add_subcommand(
      "study", "replication benchmark; writes table1.csv and metrics.csv");
  st->add_option("--scenarios", st_o.scenarios, "comma-separated shapes")
      ->delimiter(',');
  st->add_option("--sizes", st_o.sizes, "comma-separated sample sizes")
      ->delimiter(',');
  st->add_option("--reps", st_o.reps, "replicates per cell");
  st->add_option("--test-n", st_o.test_n, "test rows per replicate");
  st->add_option("--design", st_o.design,
                 "treatment assignment design: balanced | logistic");
  st->add_flag("--estimated-pi", st_o.estimated_pi,
               "use logistic propensity estimates (methods get a _pihat "
               "suffix)");
  st->add_option("--seed", st_o.seed, "64-bit seed");
  st->add_option("--threads", st_o.threads, "worker cap");
  st->add_option("--out", st_o.out_dir, "output directory")->required();
  st->add_option("--external", st_o.externals,
                 "name=dir file-exchange rule (repeatable); dir holds "
                 "scores_<seed>.csv per replicate");
  st->add_option("--dump", st_o.dump_dir,
                 "write per-replicate train/test CSVs here and exit");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "ERROR ParseError: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(fit)) return run_fit(fit_o, fit_eta, fit_contrast, out);
    if (app.got_subcommand(fit2)) return run_fit2(fit2_o, fit2_hg, fit2_heta, out);
    if (app.got_subcommand(pred))
      return run_predict(pr_fit, pr_train, pr_input, pr_kernel, pr_h,
                         pr_estimate_pi, pr_threads, pr_out, out);
    if (app.got_subcommand(dim))
      return run_dimselect(dim_o, dim_max, dim_folds, dim_no_stratify, out);
    if (app.got_subcommand(sim))
      return run_simulate(sim_scenario, sim_n, sim_p, sim_tau, sim_gamma,
                          sim_sigma, sim_prop, sim_seed, sim_out, sim_truth);
    if (app.got_subcommand(ev)) return run_evaluate(ev_pred, ev_test, ev_out, out);
    if (app.got_subcommand(st)) return run_study(st_o, out);
    err << "ERROR InvalidArgument: no subcommand\n";
    return 2;
  } catch (const Error& e) {
    err << "ERROR " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "ERROR Internal: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace imave
