#include "imave/model_selection.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "imave/efficiency.hpp"
#include "imave/error.hpp"
#include "imave/rng.hpp"

namespace imave {

Folds make_folds(const Dataset& ds, int k, std::uint64_t seed,
                 bool stratify) {
  if (k < 2) fail(ErrorCode::InvalidArgument, "need at least two folds");
  const std::int64_t n = ds.n();
  Folds folds;
  folds.k = k;
  folds.assignment.assign(n, 0);

  Rng rng(derive_seed(seed, {0xf01d5ULL}));
  auto shuffled = [&](std::vector<std::int64_t> idx) {
    // Fisher-Yates on our own RNG keeps assignments platform-stable.
    for (std::int64_t i = static_cast<std::int64_t>(idx.size()) - 1; i > 0;
         --i) {
      const std::int64_t j =
          static_cast<std::int64_t>(rng.next_u64() % (i + 1));
      std::swap(idx[i], idx[j]);
    }
    return idx;
  };

  if (!stratify) {
    std::vector<std::int64_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    idx = shuffled(std::move(idx));
    for (std::int64_t r = 0; r < n; ++r)
      folds.assignment[idx[r]] = static_cast<int>(r % k);
    return folds;
  }

  // Stratified: each arm is shuffled and dealt round-robin, continuing the
  // fold rotation across arms so overall fold sizes still differ by <= 1.
  int next_fold = 0;
  for (int arm = 1; arm <= ds.arms(); ++arm) {
    std::vector<std::int64_t> members;
    for (std::int64_t i = 0; i < n; ++i)
      if (ds.arm_of(i) == arm) members.push_back(i);
    members = shuffled(std::move(members));
    for (std::int64_t m = 0; m < static_cast<std::int64_t>(members.size());
         ++m) {
      folds.assignment[members[m]] = next_fold;
      next_fold = (next_fold + 1) % k;
    }
  }
  return folds;
}

namespace {

// Target scale: t_i = T_i Y_i / (2 pi_i), the observable whose conditional
// mean is g/2. Fold predictions are compared on this scale (ghat/2).
Eigen::VectorXd half_weighted_outcome(const Dataset& ds) {
  const Eigen::VectorXd& pi = ds.pi();
  Eigen::VectorXd t(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    t(i) = 0.5 * ds.T()(i) * ds.Y()(i) / pi(i);
  return t;
}

std::vector<double> cv_fold_scores(const Dataset& ds, int d,
                                   const Folds& folds, const FitConfig& cfg) {
  if (!ds.binary())
    fail(ErrorCode::NotBinary, "dimension CV requires binary data");
  if (d < 0 || d > ds.p())
    fail(ErrorCode::InvalidDimension, "candidate dimension out of range");
  if (static_cast<std::int64_t>(folds.assignment.size()) != ds.n())
    fail(ErrorCode::InvalidArgument, "fold assignment length mismatch");

  const Eigen::VectorXd target = half_weighted_outcome(ds);
  std::vector<double> scores(folds.k, 0.0);
  for (int m = 0; m < folds.k; ++m) {
    std::vector<std::int64_t> train_rows, test_rows;
    for (std::int64_t i = 0; i < ds.n(); ++i)
      (folds.assignment[i] == m ? test_rows : train_rows).push_back(i);
    if (test_rows.empty() || train_rows.empty())
      fail(ErrorCode::FoldDegenerate, "empty cross-validation fold");

    double fold_acc = 0.0;
    if (d == 0) {
      double mean = 0.0;
      for (std::int64_t i : train_rows) mean += target(i);
      mean /= static_cast<double>(train_rows.size());
      for (std::int64_t i : test_rows) {
        const double r = target(i) - mean;
        fold_acc += r * r;
      }
    } else {
      Dataset train = [&] {
        try {
          return ds.subset(train_rows);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::DegenerateTreatment)
            fail(ErrorCode::FoldDegenerate,
                 "training fold lost a treatment arm");
          throw;
        }
      }();
      FitConfig cell = cfg;
      cell.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(d),
                                         static_cast<std::uint64_t>(m)});
      try {
        const FitResult fit = imave_fit(train, d, EtaMode::zero(), cell);
        const GEstimate ghat = predict_g(train, fit, cfg.h_g, cfg.kernel);
        Eigen::MatrixXd testX(test_rows.size(), ds.p());
        for (std::size_t r = 0; r < test_rows.size(); ++r)
          testX.row(r) = ds.X().row(test_rows[r]);
        const Eigen::VectorXd pred = ghat.eval_batch(testX, cfg.threads);
        for (std::size_t r = 0; r < test_rows.size(); ++r) {
          const double resid = target(test_rows[r]) - 0.5 * pred(r);
          fold_acc += resid * resid;
        }
      } catch (const Error& e) {
        // A candidate dimension the fold's data cannot support (no
        // directional signal, collapsed basis, empty kernel neighborhoods)
        // loses the contest instead of aborting it. Caller errors still
        // propagate.
        if (e.code() == ErrorCode::RankDeficient ||
            e.code() == ErrorCode::ConstantInput ||
            e.code() == ErrorCode::AllWeightsZero) {
          scores[m] = std::numeric_limits<double>::infinity();
          continue;
        }
        throw;
      }
    }
    scores[m] = fold_acc / static_cast<double>(test_rows.size());
  }
  return scores;
}

}  // namespace

double cv_score(const Dataset& ds, int d, const Folds& folds,
                const FitConfig& cfg) {
  const std::vector<double> scores = cv_fold_scores(ds, d, folds, cfg);
  double total = 0.0;
  for (double s : scores) total += s;
  return total / scores.size();
}

CvResult select_dimension(const Dataset& ds, int d_max, std::uint64_t seed,
                          const FitConfig& cfg, int k, bool stratify) {
  if (ds.n() < 10)
    fail(ErrorCode::InvalidArgument, "dimension selection needs n >= 10");
  if (d_max < 0) d_max = std::min(ds.p(), 4);
  if (d_max > ds.p())
    fail(ErrorCode::InvalidDimension, "d_max cannot exceed p");

  const Folds folds = make_folds(ds, k, seed, stratify);
  CvResult out;
  out.d_max = d_max;
  out.seed = seed;
  out.scores.resize(d_max + 1);
  out.by_fold.resize(d_max + 1);

  for (int d = 0; d <= d_max; ++d) {
    FitConfig cell = cfg;
    cell.seed = seed;
    out.by_fold[d] = cv_fold_scores(ds, d, folds, cell);
    double total = 0.0;
    for (double s : out.by_fold[d]) total += s;
    out.scores[d] = total / out.by_fold[d].size();
  }

  int best = 0;
  for (int d = 1; d <= d_max; ++d)
    if (out.scores[d] < out.scores[best]) best = d;  // ties keep smaller d
  out.d_hat = best;
  return out;
}

}  // namespace imave
