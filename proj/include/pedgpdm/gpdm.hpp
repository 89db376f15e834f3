#pragma once

// Balanced GPDM learned from one scaled observation sequence.

#include "pedgpdm/kernels.hpp"
#include "pedgpdm/preprocess.hpp"
#include "pedgpdm/scg.hpp"

#include <filesystem>

namespace pedgpdm {

inline constexpr int kModelFormatVersion = 1;

struct TrainOptions {
  ScgOptions scg{};
  /// Initial hyperparameters; noise precisions start at 100, the rest at 1.
  ObsKernelParams obs_init{};
  DynKernelParams dyn_init{};
  /// When false only the latents move; hyperparameters stay at their initial values.
  bool learn_hyperparameters = true;
};

struct Reconstruction {
  Eigen::VectorXd mean;  // scaled feature space
  double variance = 0.0;
};

class BGpdmModel {
 public:
  BGpdmModel() = default;

  /// Assembles a model from learned quantities and precomputes the kernel inverses.
  BGpdmModel(Eigen::MatrixXd X, Eigen::MatrixXd Y, ObsKernelParams obs, DynKernelParams dyn, double kappa,
             FeatureScaling scaling);

  // tags
  std::string source_id;
  std::string subject;
  Activity activity = Activity::Standing;
  Orientation orientation = Orientation::LeftToRight;

  int q() const { return static_cast<int>(X_.cols()); }
  int T() const { return static_cast<int>(X_.rows()); }
  int D() const { return static_cast<int>(Y_.cols()); }
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::MatrixXd& Y() const { return Y_; }
  const ObsKernelParams& obs_params() const { return obs_; }
  const DynKernelParams& dyn_params() const { return dyn_; }
  double kappa() const { return kappa_; }
  const FeatureScaling& scaling() const { return scaling_; }
  const Eigen::MatrixXd& Ky_inv() const { return Ky_inv_; }
  const Eigen::MatrixXd& Kx_inv() const { return Kx_inv_; }

  /// Predictive mean Y^T K_Y^-1 k_Y(x, X) and variance k(x,x) - k^T K_Y^-1 k.
  Reconstruction reconstruct(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Mean reconstruction and its D x q Jacobian with respect to x.
  Eigen::VectorXd reconstruct_mean(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   Eigen::MatrixXd* jacobian = nullptr) const;
  /// Dynamics mean X_{2:T}^T K_X^-1 k_X(x, X_{1:T-1}). Needs T >= 2.
  Eigen::VectorXd latent_step(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  double objective() const;

 private:
  Eigen::MatrixXd X_, Y_;
  ObsKernelParams obs_;
  DynKernelParams dyn_;
  double kappa_ = 1.0;
  FeatureScaling scaling_;
  // derived, never serialized
  Eigen::MatrixXd Ky_inv_, Kx_inv_;
  Eigen::MatrixXd alpha_y_;  // K_Y^-1 Y
  Eigen::MatrixXd alpha_x_;  // K_X^-1 X_{2:T}
};

struct TrainTrace {
  std::vector<double> objective;  // accepted iterations, [0] = initialization
  int iterations = 0;
  int evaluations = 0;
  ScgStatus status = ScgStatus::MaxIterations;
};

/// Balanced weighting D/q.
inline double default_kappa(int D, int q) { return static_cast<double>(D) / q; }

/// Learns latents and hyperparameters for z-scored rows `Y_scaled` (T x D), starting
/// from the PCA projection. `scaling` is stored so reconstructions can be de-scaled.
BGpdmModel train(const Eigen::MatrixXd& Y_scaled, int q, double kappa, const TrainOptions& opts,
                 FeatureScaling scaling = {}, TrainTrace* trace = nullptr);

/// Packing helpers for the optimizer: [vec(X), log obs (3), log dyn (4)].
Eigen::VectorXd pack_parameters(const Eigen::MatrixXd& X, const ObsKernelParams& obs,
                                const DynKernelParams& dyn);
void unpack_parameters(const Eigen::VectorXd& theta, int T, int q, Eigen::MatrixXd& X, ObsKernelParams& obs,
                       DynKernelParams& dyn);

// Model files (JSON). Kernel inverses are recomputed on load.
std::string model_to_json(const BGpdmModel& m);
BGpdmModel model_from_json(std::string_view text, const std::string& source = "<memory>");
void save_model(const BGpdmModel& m, const std::filesystem::path& path);
BGpdmModel load_model(const std::filesystem::path& path);

}  // namespace pedgpdm
