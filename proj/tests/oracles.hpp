#pragma once

// Test-only reference implementations. These are written straight from the formulas
// with loops and LU solves so they share no code path with the library.

#include "pedgpdm/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <tuple>
#include <vector>

namespace oracle {

struct ObsP {
  double signal, width, noise_prec;
};
struct DynP {
  double signal, width, linear, noise_prec;
};

inline double k_obs(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, const ObsP& p, bool same) {
  double r2 = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) r2 += (a(i) - b(i)) * (a(i) - b(i));
  return p.signal * std::exp(-0.5 * p.width * r2) + (same ? 1.0 / p.noise_prec : 0.0);
}

inline double k_dyn(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, const DynP& p, bool same) {
  double r2 = 0, dot = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    r2 += (a(i) - b(i)) * (a(i) - b(i));
    dot += a(i) * b(i);
  }
  return p.signal * std::exp(-0.5 * p.width * r2) + p.linear * dot + (same ? 1.0 / p.noise_prec : 0.0);
}

// c/2 ln|K| + 1/2 tr(K^-1 M M^T) through an LU factorization.
inline double gp_term(const Eigen::MatrixXd& K, const Eigen::MatrixXd& M) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  double logdet = 0;
  const Eigen::MatrixXd& LU = lu.matrixLU();
  for (Eigen::Index i = 0; i < K.rows(); ++i) logdet += std::log(std::abs(LU(i, i)));
  const Eigen::MatrixXd S = lu.solve(M);
  double tr = 0;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) tr += M(i, j) * S(i, j);
  return 0.5 * static_cast<double>(M.cols()) * logdet + 0.5 * tr;
}

inline double dynamics_block(const Eigen::MatrixXd& X, const DynP& dp) {
  const Eigen::Index T = X.rows();
  double v = 0.5 * X.row(0).squaredNorm();
  if (T >= 2) {
    Eigen::MatrixXd Kx(T - 1, T - 1);
    for (Eigen::Index a = 0; a < T - 1; ++a)
      for (Eigen::Index b = 0; b < T - 1; ++b) Kx(a, b) = k_dyn(X.row(a), X.row(b), dp, a == b);
    v += gp_term(Kx, X.bottomRows(T - 1));
  }
  return v;
}

inline double neg_log_posterior(const Eigen::MatrixXd& X, const ObsP& op, const DynP& dp, double kappa,
                                const Eigen::MatrixXd& Y) {
  const Eigen::Index T = X.rows();
  Eigen::MatrixXd Ky(T, T);
  for (Eigen::Index a = 0; a < T; ++a)
    for (Eigen::Index b = 0; b < T; ++b) Ky(a, b) = k_obs(X.row(a), X.row(b), op, a == b);
  double v = gp_term(Ky, Y) + kappa * dynamics_block(X, dp);
  v += std::log(op.signal) + std::log(op.width) + std::log(op.noise_prec);
  v += std::log(dp.signal) + std::log(dp.width) + std::log(dp.linear) + std::log(dp.noise_prec);
  return v;
}

/// Central finite differences of f at x.
inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// Worst per-coordinate relative error, with the denominator floored at 1.
inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double den = std::max({1.0, std::abs(a(i)), std::abs(b(i))});
    worst = std::max(worst, std::abs(a(i) - b(i)) / den);
  }
  return worst;
}

/// z-scored (population) columns of a sum of three phase-shifted harmonics, `periods`
/// full cycles over T rows. Rank is up to 6, so a 3-D linear projection cannot recover it.
inline Eigen::MatrixXd sinusoid_gait(int T, int D, double periods, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> amp(0.2, 1.0), ph(0.0, 2 * M_PI);
  Eigen::MatrixXd Y(T, D);
  for (int d = 0; d < D; ++d) {
    const double a1 = amp(rng), a2 = amp(rng), a3 = amp(rng);
    const double p1 = ph(rng), p2 = ph(rng), p3 = ph(rng);
    for (int t = 0; t < T; ++t) {
      const double phi = 2 * M_PI * periods * t / T;
      Y(t, d) = a1 * std::sin(phi + p1) + a2 * std::sin(2 * phi + p2) + 0.5 * a3 * std::sin(3 * phi + p3);
    }
  }
  for (int d = 0; d < D; ++d) {
    const double m = Y.col(d).mean();
    Y.col(d).array() -= m;
    const double s = std::sqrt(Y.col(d).squaredNorm() / T);
    Y.col(d) /= s;
  }
  return Y;
}

/// PCA reconstruction RMSE through an eigen-decomposition of Y^T Y (no SVD).
inline double pca_rmse(const Eigen::MatrixXd& Y, int q) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Y.transpose() * Y);
  const Eigen::MatrixXd V = es.eigenvectors().rightCols(q);
  const Eigen::MatrixXd R = Y - Y * V * V.transpose();
  return std::sqrt(R.squaredNorm() / static_cast<double>(R.size()));
}

// Max-product filter written directly from the recursion, uniform prior at t = 0.
inline std::vector<Eigen::Vector4d> posteriors(const std::vector<Eigen::Vector4d>& em, const Eigen::Matrix4d& tpm) {
  std::vector<Eigen::Vector4d> out;
  double prev[4] = {0, 0, 0, 0};
  for (std::size_t t = 0; t < em.size(); ++t) {
    double un[4], z = 0;
    for (int j = 0; j < 4; ++j) {
      double prior = 0.25;
      if (t > 0) {
        prior = 0;
        for (int i = 0; i < 4; ++i) prior = std::max(prior, tpm(i, j) * prev[i]);
      }
      un[j] = em[t](j) * prior;
      z += un[j];
    }
    Eigen::Vector4d p;
    for (int j = 0; j < 4; ++j) p(j) = prev[j] = un[j] / z;
    out.push_back(p);
  }
  return out;
}

// Transitions from run-length encoding: a run of at least w frames whose activity differs
// from the last accepted run's activity fires at the run's first frame.
inline std::vector<std::tuple<pedgpdm::Activity, pedgpdm::Activity, long>> transitions(
    const std::vector<pedgpdm::Activity>& labels, int w) {
  std::vector<std::tuple<pedgpdm::Activity, pedgpdm::Activity, long>> out;
  if (labels.empty()) return out;
  pedgpdm::Activity accepted = labels[0];
  std::size_t i = 0;
  while (i < labels.size()) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    if (static_cast<int>(j - i) >= w && labels[i] != accepted) {
      out.emplace_back(accepted, labels[i], static_cast<long>(i));
      accepted = labels[i];
    }
    i = j;
  }
  return out;
}

}  // namespace oracle
