#pragma once

#include "pedgpdm/kernels.hpp"

namespace pedgpdm {

template <typename Scalar>
struct PcaResult {
  MatrixT<Scalar> X;         // T x q scores
  MatrixT<Scalar> loadings;  // D x q principal directions
  VectorT<Scalar> singular_values;
  bool padded = false;  // q exceeded the numerical rank; trailing columns are zero
};

/// Projects the (already centered) rows of Y onto the top-q right singular vectors.
/// Each direction is signed so its largest-magnitude element is positive.
template <typename Scalar>
PcaResult<Scalar> pca(const MatrixT<Scalar>& Y, Eigen::Index q) {
  if (q < 1) throw DataError("pca: latent dimension must be >= 1");
  const Eigen::Index T = Y.rows(), D = Y.cols();
  PcaResult<Scalar> r;
  r.X = MatrixT<Scalar>::Zero(T, q);
  r.loadings = MatrixT<Scalar>::Zero(D, q);
  r.singular_values = VectorT<Scalar>::Zero(q);
  if (T == 0 || D == 0) {
    r.padded = true;
    return r;
  }
  Eigen::BDCSVD<MatrixT<Scalar>> svd(Y, Eigen::ComputeThinV);
  const VectorT<Scalar>& s = svd.singularValues();
  const Scalar tol = std::numeric_limits<Scalar>::epsilon() * static_cast<Scalar>(std::max(T, D)) *
                     (s.size() ? s(0) : Scalar(0));
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol) ++rank;
  const Eigen::Index k = std::min(q, rank);
  r.padded = k < q;
  for (Eigen::Index c = 0; c < k; ++c) {
    VectorT<Scalar> v = svd.matrixV().col(c);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    r.loadings.col(c) = v;
    r.singular_values(c) = s(c);
  }
  r.X.leftCols(k) = Y * r.loadings.leftCols(k);
  return r;
}

template <typename Scalar>
MatrixT<Scalar> pca_init(const MatrixT<Scalar>& Y, Eigen::Index q) {
  return pca(Y, q).X;
}

}  // namespace pedgpdm
