#pragma once

// Covariance functions of the balanced GPDM and the neg-log-posterior with its
// analytic gradient. Everything here is a template on the scalar type; the rest of
// the library instantiates it with double.

#include "pedgpdm/common.hpp"

#include <cmath>

namespace pedgpdm {

/// k_Y(a,b) = signal * exp(-width/2 |a-b|^2) + delta_ab / noise_prec
template <typename Scalar>
struct ObsKernelParamsT {
  Scalar signal{1};
  Scalar width{1};
  Scalar noise_prec{100};

  bool valid() const { return signal > 0 && width > 0 && noise_prec > 0; }
  Eigen::Matrix<Scalar, 3, 1> log_vector() const {
    return {std::log(signal), std::log(width), std::log(noise_prec)};
  }
  static ObsKernelParamsT from_log(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& v) {
    return {std::exp(v(0)), std::exp(v(1)), std::exp(v(2))};
  }
  bool operator==(const ObsKernelParamsT&) const = default;
};

/// k_X(a,b) = signal * exp(-width/2 |a-b|^2) + linear * a.b + delta_ab / noise_prec
template <typename Scalar>
struct DynKernelParamsT {
  Scalar signal{1};
  Scalar width{1};
  Scalar linear{1};
  Scalar noise_prec{100};

  bool valid() const { return signal > 0 && width > 0 && linear > 0 && noise_prec > 0; }
  Eigen::Matrix<Scalar, 4, 1> log_vector() const {
    return {std::log(signal), std::log(width), std::log(linear), std::log(noise_prec)};
  }
  static DynKernelParamsT from_log(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& v) {
    return {std::exp(v(0)), std::exp(v(1)), std::exp(v(2)), std::exp(v(3))};
  }
  bool operator==(const DynKernelParamsT&) const = default;
};

using ObsKernelParams = ObsKernelParamsT<double>;
using DynKernelParams = DynKernelParamsT<double>;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// `same_point` selects the Kronecker noise term (same stored latent index).
template <typename DerivedA, typename DerivedB, typename Scalar>
Scalar kernel_obs(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  const ObsKernelParamsT<Scalar>& p, bool same_point) {
  const Scalar r2 = (a - b).squaredNorm();
  return p.signal * std::exp(-p.width / 2 * r2) + (same_point ? Scalar(1) / p.noise_prec : Scalar(0));
}

template <typename DerivedA, typename DerivedB, typename Scalar>
Scalar kernel_dyn(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  const DynKernelParamsT<Scalar>& p, bool same_point) {
  const Scalar r2 = (a - b).squaredNorm();
  return p.signal * std::exp(-p.width / 2 * r2) + p.linear * a.dot(b) +
         (same_point ? Scalar(1) / p.noise_prec : Scalar(0));
}

/// Pairwise squared distances between the rows of A and the rows of B.
template <typename DerivedA, typename DerivedB>
auto sq_dist(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B) {
  using Scalar = typename DerivedA::Scalar;
  MatrixT<Scalar> D = (-2 * A * B.transpose()).eval();
  D.colwise() += A.rowwise().squaredNorm();
  D.rowwise() += B.rowwise().squaredNorm().transpose();
  return MatrixT<Scalar>(D.cwiseMax(Scalar(0)));
}

/// RBF part only: signal * exp(-width/2 |a_i - b_j|^2).
template <typename DerivedA, typename DerivedB, typename Scalar>
MatrixT<Scalar> rbf_cross(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B,
                          Scalar signal, Scalar width) {
  return (sq_dist(A, B).array() * (-width / 2)).exp().matrix() * signal;
}

template <typename Derived, typename Scalar>
MatrixT<Scalar> obs_gram(const Eigen::MatrixBase<Derived>& X, const ObsKernelParamsT<Scalar>& p) {
  MatrixT<Scalar> K = rbf_cross(X, X, p.signal, p.width);
  K.diagonal().array() += Scalar(1) / p.noise_prec;
  return K;
}

template <typename Derived, typename Scalar>
MatrixT<Scalar> dyn_gram(const Eigen::MatrixBase<Derived>& Xin, const DynKernelParamsT<Scalar>& p) {
  MatrixT<Scalar> K = rbf_cross(Xin, Xin, p.signal, p.width);
  K.noalias() += p.linear * Xin * Xin.transpose();
  K.diagonal().array() += Scalar(1) / p.noise_prec;
  return K;
}

/// Cholesky factorization with escalating diagonal jitter (1e-6 .. 1e-2 of the mean
/// diagonal, doubling). Throws NumericalError when still not positive definite.
template <typename Scalar>
struct JitteredCholesky {
  Eigen::LLT<MatrixT<Scalar>> llt;
  Scalar jitter{0};

  explicit JitteredCholesky(const MatrixT<Scalar>& K) {
    llt.compute(K);
    if (llt.info() == Eigen::Success) return;
    const Scalar base = K.diagonal().mean();
    for (Scalar rel = Scalar(1e-6); rel <= Scalar(1e-2) * Scalar(1.0000001); rel *= 2) {
      MatrixT<Scalar> Kj = K;
      jitter = rel * base;
      Kj.diagonal().array() += jitter;
      llt.compute(Kj);
      if (llt.info() == Eigen::Success) return;
    }
    throw NumericalError("kernel matrix not positive definite after maximum jitter");
  }

  Scalar log_det() const {
    return 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  MatrixT<Scalar> inverse() const {
    const auto n = llt.matrixLLT().rows();
    return llt.solve(MatrixT<Scalar>::Identity(n, n));
  }
};

/// c/2 ln|K| + 1/2 tr(K^-1 M M^T) together with dL/dK and dL/dM.
template <typename Scalar>
struct GpTerm {
  Scalar value{0};
  MatrixT<Scalar> dK;  // symmetric
  MatrixT<Scalar> dM;

  GpTerm(const MatrixT<Scalar>& K, const MatrixT<Scalar>& M) {
    const JitteredCholesky<Scalar> chol(K);
    const MatrixT<Scalar> Kinv = chol.inverse();
    const MatrixT<Scalar> KinvM = Kinv * M;
    const auto c = static_cast<Scalar>(M.cols());
    value = c / 2 * chol.log_det() + (M.array() * KinvM.array()).sum() / 2;
    dK = (c * Kinv - KinvM * KinvM.transpose()) / 2;
    dM = KinvM;
  }
};

/// Gradient of the B-GPDM objective: latents plus log-hyperparameters.
template <typename Scalar>
struct ObjectiveGradient {
  Scalar value{0};
  MatrixT<Scalar> dX;
  Eigen::Matrix<Scalar, 3, 1> dlog_obs;
  Eigen::Matrix<Scalar, 4, 1> dlog_dyn;

  /// Flattened as [vec(X) column-major, log obs (3), log dyn (4)].
  VectorT<Scalar> packed() const {
    VectorT<Scalar> g(dX.size() + 7);
    g.head(dX.size()) = Eigen::Map<const VectorT<Scalar>>(dX.data(), dX.size());
    g.segment(dX.size(), 3) = dlog_obs;
    g.tail(4) = dlog_dyn;
    return g;
  }
};

/// Dynamics block: q/2 ln|K_X| + 1/2 tr(K_X^-1 X_out X_out^T) + 1/2 |x_1|^2.
template <typename Scalar>
Scalar dynamics_block(const MatrixT<Scalar>& X, const DynKernelParamsT<Scalar>& dyn) {
  const Eigen::Index T = X.rows();
  Scalar v = X.row(0).squaredNorm() / 2;
  if (T >= 2) {
    const MatrixT<Scalar> Xin = X.topRows(T - 1), Xout = X.bottomRows(T - 1);
    v += GpTerm<Scalar>(dyn_gram(Xin, dyn), Xout).value;
  }
  return v;
}

template <typename Scalar>
ObjectiveGradient<Scalar> neg_log_posterior_grad(const MatrixT<Scalar>& X, const ObsKernelParamsT<Scalar>& obs,
                                                 const DynKernelParamsT<Scalar>& dyn, Scalar kappa,
                                                 const MatrixT<Scalar>& Y) {
  const Eigen::Index T = X.rows(), q = X.cols();
  if (Y.rows() != T) throw DataError("latent and observation row counts differ");
  ObjectiveGradient<Scalar> g;
  g.dX = MatrixT<Scalar>::Zero(T, q);

  // observation term
  {
    const MatrixT<Scalar> Krbf = rbf_cross(X, X, obs.signal, obs.width);
    MatrixT<Scalar> K = Krbf;
    K.diagonal().array() += Scalar(1) / obs.noise_prec;
    const GpTerm<Scalar> term(K, Y);
    g.value += term.value;
    const MatrixT<Scalar> W = term.dK.cwiseProduct(Krbf);
    g.dlog_obs(0) = W.sum();
    g.dlog_obs(1) = -obs.width / 2 * (W.cwiseProduct(sq_dist(X, X))).sum();
    g.dlog_obs(2) = -term.dK.trace() / obs.noise_prec;
    const VectorT<Scalar> wsum = W.rowwise().sum();
    g.dX += -2 * obs.width * (wsum.asDiagonal() * X - W * X);
  }

  // dynamics term, weighted by kappa
  g.dlog_dyn.setZero();
  Scalar dyn_value = X.row(0).squaredNorm() / 2;
  MatrixT<Scalar> dXdyn = MatrixT<Scalar>::Zero(T, q);
  dXdyn.row(0) += X.row(0);
  if (T >= 2) {
    const MatrixT<Scalar> Xin = X.topRows(T - 1), Xout = X.bottomRows(T - 1);
    const MatrixT<Scalar> Krbf = rbf_cross(Xin, Xin, dyn.signal, dyn.width);
    const MatrixT<Scalar> Klin = dyn.linear * Xin * Xin.transpose();
    MatrixT<Scalar> K = Krbf + Klin;
    K.diagonal().array() += Scalar(1) / dyn.noise_prec;
    const GpTerm<Scalar> term(K, Xout);
    dyn_value += term.value;
    const MatrixT<Scalar> W = term.dK.cwiseProduct(Krbf);
    g.dlog_dyn(0) = W.sum();
    g.dlog_dyn(1) = -dyn.width / 2 * (W.cwiseProduct(sq_dist(Xin, Xin))).sum();
    g.dlog_dyn(2) = term.dK.cwiseProduct(Klin).sum();
    g.dlog_dyn(3) = -term.dK.trace() / dyn.noise_prec;
    const VectorT<Scalar> wsum = W.rowwise().sum();
    dXdyn.topRows(T - 1) += -2 * dyn.width * (wsum.asDiagonal() * Xin - W * Xin) +
                            2 * dyn.linear * term.dK * Xin;
    dXdyn.bottomRows(T - 1) += term.dM;
  }
  g.value += kappa * dyn_value;
  g.dX += kappa * dXdyn;
  g.dlog_dyn *= kappa;

  // hyperpriors p(theta) ~ prod 1/theta_i
  const Eigen::Matrix<Scalar, 3, 1> lo = obs.log_vector();
  const Eigen::Matrix<Scalar, 4, 1> ld = dyn.log_vector();
  g.value += lo.sum() + ld.sum();
  g.dlog_obs.array() += 1;
  g.dlog_dyn.array() += 1;
  return g;
}

template <typename Scalar>
Scalar neg_log_posterior(const MatrixT<Scalar>& X, const ObsKernelParamsT<Scalar>& obs,
                         const DynKernelParamsT<Scalar>& dyn, Scalar kappa, const MatrixT<Scalar>& Y) {
  if (Y.rows() != X.rows()) throw DataError("latent and observation row counts differ");
  Scalar v = GpTerm<Scalar>(obs_gram(X, obs), Y).value;
  v += kappa * dynamics_block(X, dyn);
  v += obs.log_vector().sum() + dyn.log_vector().sum();
  return v;
}

}  // namespace pedgpdm
