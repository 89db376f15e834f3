#pragma once

// Frames -> observations: translation removal, raw displacements, z-score scaling,
// and leg-length-normalized poses for similarity comparison.

#include "pedgpdm/mocap.hpp"

#include <span>

namespace pedgpdm {

/// Floor applied to fitted standard deviations (native units).
inline constexpr double kStdFloor = 1e-6;
/// Smallest leg-length scale accepted by comparable_pose (mm).
inline constexpr double kMinLegScale = 1e-6;

/// One frame's feature: translation-removed pose plus raw per-joint displacement.
struct Observation {
  Eigen::VectorXd pose;  // 3J, joint-major (x,y,z per joint)
  Eigen::VectorXd disp;  // 3J, mm/frame
  long frame_index = 0;
  Vector3 world_anchor = Vector3::Zero();  // reference joint before translation removal

  /// Concatenated [pose, disp] feature (6J).
  Eigen::VectorXd feature() const;
  static Observation from_feature(const Eigen::Ref<const Eigen::VectorXd>& f);
};

struct TranslationRemoved {
  Eigen::VectorXd pose;
  Vector3 world_anchor;
};

/// Lowest ankle height over the sequence (falls back to all joints without ankles).
double ground_level(const MotionSequence& seq);

/// Subtracts the reference joint's x,y from every joint; z becomes height above `ground_z`.
TranslationRemoved remove_translation(const Frame& frame, int ref_joint, double ground_z = 0.0);

/// disp_t = positions_t - positions_{t-1}, t = 1..T-1, in world coordinates.
std::vector<Eigen::VectorXd> displacements(const MotionSequence& seq);

/// Observations for frames 1..T-1 of `seq` (T-1 of them).
std::vector<Observation> observations(const MotionSequence& seq, std::string_view ref_joint);

/// Rows are observations, columns the 6J feature.
Eigen::MatrixXd feature_matrix(std::span<const Observation> obs);

struct FeatureScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd invert(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const;
  Eigen::MatrixXd invert_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const;
  int dim() const { return static_cast<int>(mean.size()); }
};

/// Per-column mean and population std (floored at kStdFloor). Needs >= 2 rows.
FeatureScaling fit_scaling(const Eigen::Ref<const Eigen::MatrixXd>& rows);

/// Joint indices needed to normalize a pose.
struct PoseGeometry {
  int ref_joint = -1;
  struct Leg {
    int hip, knee, ankle;
  };
  std::vector<Leg> legs;

  static PoseGeometry from(const JointSet& joints, std::string_view ref_joint);
};

struct ComparablePose {
  Eigen::VectorXd coords;
  double scale = 1.0;
};

/// Re-references to the reference joint and divides by the mean leg length
/// (ankle-knee + knee-hip) over the legs present.
ComparablePose comparable_pose(const Eigen::Ref<const Eigen::VectorXd>& pose, const PoseGeometry& geom);
ComparablePose comparable_pose(const Eigen::Ref<const Eigen::VectorXd>& pose, const JointSet& joints,
                               std::string_view ref_joint);

}  // namespace pedgpdm
