#include "imave/grassmann.hpp"

#include <cmath>

#include "imave/error.hpp"

namespace imave {

void canonicalize_signs(Eigen::MatrixXd& B) {
  for (Eigen::Index c = 0; c < B.cols(); ++c) {
    Eigen::Index lead = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < B.rows(); ++r) {
      const double a = std::abs(B(r, c));
      if (a > best) {  // strict: smallest row index wins ties
        best = a;
        lead = r;
      }
    }
    if (B(lead, c) < 0.0) B.col(c) = -B.col(c);
  }
}

IndexMatrix grassmann_normalize(const Eigen::MatrixXd& Bin) {
  const Eigen::Index p = Bin.rows(), d = Bin.cols();
  if (d < 1 || d > p)
    fail(ErrorCode::InvalidDimension, "need 1 <= d <= p for an index matrix");
  if (!Bin.allFinite())
    fail(ErrorCode::NonFiniteValue, "index matrix has non-finite entries");

  // Symmetric inverse square root of B'B keeps the update direction-stable
  // (unlike QR, which depends on column order).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Bin.transpose() * Bin);
  const Eigen::VectorXd& ev = es.eigenvalues();
  if (ev(0) <= 1e-20)  // sigma_min(B) <= 1e-10
    fail(ErrorCode::RankDeficient, "index matrix is numerically rank deficient");
  const Eigen::MatrixXd inv_sqrt =
      es.eigenvectors() *
      ev.array().rsqrt().matrix().asDiagonal() *
      es.eigenvectors().transpose();

  IndexMatrix out;
  out.B = Bin * inv_sqrt;
  canonicalize_signs(out.B);
  return out;
}

double subspace_distance(const IndexMatrix& a, const IndexMatrix& b) {
  if (a.p() != b.p())
    fail(ErrorCode::InvalidDimension, "subspace distance needs matching p");
  const Eigen::MatrixXd pa = a.B * a.B.transpose();
  const Eigen::MatrixXd pb = b.B * b.B.transpose();
  return (pa - pb).norm();
}

}  // namespace imave
