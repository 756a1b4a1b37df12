#pragma once

#include <Eigen/Dense>

namespace imave {

// Orthonormal index matrix (p x d, B'B = I) with canonical column signs:
// in each column the entry of largest absolute value (smallest row index on
// ties) is nonnegative. Construct via grassmann_normalize.
struct IndexMatrix {
  Eigen::MatrixXd B;

  int p() const { return static_cast<int>(B.rows()); }
  int d() const { return static_cast<int>(B.cols()); }
};

// Flips column signs in place to the canonical orientation.
void canonicalize_signs(Eigen::MatrixXd& B);

// Maps a full-rank p x d matrix to the canonical orthonormal basis of its
// column span: B (B'B)^{-1/2} with the symmetric inverse square root, then
// sign canonicalization. Throws RankDeficient when the smallest singular
// value is <= 1e-10, InvalidDimension when d < 1 or d > p.
IndexMatrix grassmann_normalize(const Eigen::MatrixXd& B);

// Projection-distance between column spans: || A A' - B B' ||_F. Requires
// orthonormal inputs of matching p.
double subspace_distance(const IndexMatrix& a, const IndexMatrix& b);

}  // namespace imave
