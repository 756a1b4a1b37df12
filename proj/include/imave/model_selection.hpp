#pragma once

#include <cstdint>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/fit.hpp"

namespace imave {

// Fold assignment for k-fold cross-validation. Stratified assignment rotates
// arms separately through folds so each fold keeps every arm represented.
struct Folds {
  std::vector<int> assignment;  // row -> fold in [0, k)
  int k = 5;
};

Folds make_folds(const Dataset& ds, int k, std::uint64_t seed,
                 bool stratify = true);

// Out-of-fold prediction error of the fitted contrast at dimension d.
// Target: T_i Y_i / (2 pi_i); predictor: fold-trained ghat(Bhat'X_i) / 2
// (d = 0 uses the fold-training mean of the target). Mean over folds.
// Throws FoldDegenerate when a fold is empty or loses an arm. A fold whose
// fit cannot support d (rank-deficient, constant projection, or zero kernel
// weights) scores +infinity so the candidate loses instead of aborting.
double cv_score(const Dataset& ds, int d, const Folds& folds,
                const FitConfig& cfg = {});

struct CvResult {
  std::vector<double> scores;                 // index = candidate d, from 0
  std::vector<std::vector<double>> by_fold;   // [d][fold]
  int d_hat = 0;
  int d_max = 0;
  std::uint64_t seed = 0;
};

// Evaluates d = 0..d_max on one shared fold partition and picks the
// minimizer (ties to the smaller d). Per-(d, fold) fits run with seeds
// derived from seed via splitmix64 so cells are independent but repeatable.
CvResult select_dimension(const Dataset& ds, int d_max, std::uint64_t seed,
                          const FitConfig& cfg = {}, int k = 5,
                          bool stratify = true);

}  // namespace imave
