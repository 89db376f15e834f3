#pragma once

// Model selection, latent refinement, dynamics rollout and path/intention prediction.

#include "pedgpdm/activity_hmm.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>

namespace pedgpdm {

struct RefineOptions {
  int max_iters = 50;
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  double min_step = 1e-8;
  double f_tol = 1e-10;
};

struct RefineResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double start_value = 0.0;
  int iterations = 0;
  bool step_underflow = false;
};

/// eps(x) = ||y - mu(x)||^2 + 0.5 ||x||^2 for a scaled observation y.
double refine_objective(const BGpdmModel& m, const Eigen::Ref<const Eigen::VectorXd>& y,
                        const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd* grad = nullptr);

/// Backtracking gradient descent on refine_objective from x0. Never returns a worse point.
RefineResult refine_latent(const BGpdmModel& m, const Eigen::Ref<const Eigen::VectorXd>& y_scaled,
                           const Eigen::Ref<const Eigen::VectorXd>& x0, const RefineOptions& opts = {});

struct PredictOptions {
  RefineOptions refine{};
  /// Run the recognizer over the predicted observations.
  bool intentions = true;
};

struct PredictionResult {
  int horizon_steps = 0;
  Eigen::MatrixXd latents;                   // N x q
  std::vector<Eigen::VectorXd> poses;        // native units
  std::vector<Eigen::VectorXd> displacements;  // mm/frame
  std::vector<Vector3> path;                 // right hip, world mm
  std::vector<Activity> intentions;
  std::string source_model;
  bool refine_underflow = false;
};

/// Prediction for one observation. `anchor` is the current right-hip world position.
/// `state` (with `tpm`) seeds the forked recognizer for intentions; pass nullptr to skip them.
PredictionResult predict(const Observation& obs, const Vector3& anchor, Activity activity, OrientationChoice orient,
                         const ModelBank& bank, int horizon_steps, const Tpm& tpm,
                         const RecognizerState* state = nullptr, const PredictOptions& opts = {});

struct StreamOptions {
  int horizon_steps = 120;
  double window_s = 0.05;  // multiframe validation window
  OrientationOptions orientation{};
  PredictOptions predict{};
  /// Rotate observations about z so the walking heading lies on the x axis.
  bool prerotate = false;
  /// Frames for which predictions are made; all when empty.
  std::function<bool(long)> predict_at;
};

struct StreamFrame {
  long frame = 0;
  RecognizerState state;
  Activity label = Activity::Standing;
  OrientationChoice orientation = OrientationChoice::Either;
  PredictionResult prediction;
};

struct StreamResult {
  std::vector<StreamFrame> frames;  // one per frame >= 1
  std::vector<TransitionEvent> transitions;

  std::vector<Activity> labels() const;
};

/// Online recognition and prediction over every frame with a displacement.
StreamResult predict_stream(const MotionSequence& seq, const ModelBank& bank, const Tpm& tpm,
                            const StreamOptions& opts = {});

/// Observations as seen online: ground level is the running minimum ankle height.
std::vector<Observation> online_observations(const MotionSequence& seq, std::string_view ref_joint);

/// CSV rows (frame, step, x, y, z, activity, model) after a `# config=<fingerprint>` line.
void write_predictions(const StreamResult& r, std::ostream& out, const std::string& fingerprint);
/// Per-frame labels and posteriors.
void write_recognition(const StreamResult& r, std::ostream& out, const std::string& fingerprint);

/// Rebuilds a stream from the two files above (predictions optional); transitions are
/// re-detected from the labels. Returns the fingerprint of the recognition file in `fingerprint`.
StreamResult read_stream(const std::filesystem::path& recognition, const std::filesystem::path& predictions,
                         double rate_hz, double window_s = 0.05, std::string* fingerprint = nullptr);

}  // namespace pedgpdm
