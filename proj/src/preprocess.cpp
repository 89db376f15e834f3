#include "pedgpdm/preprocess.hpp"

#include <fmt/format.h>

#include <limits>

namespace pedgpdm {

Eigen::VectorXd Observation::feature() const {
  Eigen::VectorXd f(pose.size() + disp.size());
  f << pose, disp;
  return f;
}

Observation Observation::from_feature(const Eigen::Ref<const Eigen::VectorXd>& f) {
  const Eigen::Index half = f.size() / 2;
  Observation o;
  o.pose = f.head(half);
  o.disp = f.tail(half);
  return o;
}

double ground_level(const MotionSequence& seq) {
  std::vector<int> cols;
  for (const char* n : {joint_names::kLeftAnkle, joint_names::kRightAnkle})
    if (auto i = seq.joints.find(n)) cols.push_back(*i);
  double g = std::numeric_limits<double>::infinity();
  for (const Frame& f : seq.frames) {
    if (cols.empty()) {
      g = std::min(g, f.positions.row(2).minCoeff());
    } else {
      for (int c : cols) g = std::min(g, f.positions(2, c));
    }
  }
  return std::isfinite(g) ? g : 0.0;
}

TranslationRemoved remove_translation(const Frame& frame, int ref_joint, double ground_z) {
  if (ref_joint < 0 || ref_joint >= frame.positions.cols())
    throw DataError(fmt::format("reference joint {} missing from frame {}", ref_joint, frame.index));
  TranslationRemoved out;
  out.world_anchor = frame.positions.col(ref_joint);
  Eigen::Matrix3Xd rel = frame.positions;
  rel.row(0).array() -= out.world_anchor.x();
  rel.row(1).array() -= out.world_anchor.y();
  rel.row(2).array() -= ground_z;
  out.pose = Eigen::Map<const Eigen::VectorXd>(rel.data(), rel.size());
  return out;
}

std::vector<Eigen::VectorXd> displacements(const MotionSequence& seq) {
  if (seq.frames.size() < 2)
    throw DataError(fmt::format("sequence '{}': displacements need at least 2 frames", seq.id));
  std::vector<Eigen::VectorXd> out;
  out.reserve(seq.frames.size() - 1);
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    Eigen::Matrix3Xd d = seq.frames[t].positions - seq.frames[t - 1].positions;
    out.emplace_back(Eigen::Map<const Eigen::VectorXd>(d.data(), d.size()));
  }
  return out;
}

std::vector<Observation> observations(const MotionSequence& seq, std::string_view ref_joint) {
  const int ref = seq.joints.require(ref_joint);
  const auto disp = displacements(seq);
  const double ground = ground_level(seq);
  std::vector<Observation> out;
  out.reserve(disp.size());
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    auto tr = remove_translation(seq.frames[t], ref, ground);
    Observation o;
    o.pose = std::move(tr.pose);
    o.disp = disp[t - 1];
    o.frame_index = seq.frames[t].index;
    o.world_anchor = tr.world_anchor;
    out.push_back(std::move(o));
  }
  return out;
}

Eigen::MatrixXd feature_matrix(std::span<const Observation> obs) {
  if (obs.empty()) return {};
  const Eigen::Index D = obs.front().pose.size() + obs.front().disp.size();
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(obs.size()), D);
  for (std::size_t i = 0; i < obs.size(); ++i) Y.row(static_cast<Eigen::Index>(i)) = obs[i].feature();
  return Y;
}

Eigen::VectorXd FeatureScaling::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != mean.size()) throw DataError("feature dimension does not match scaling");
  return ((v - mean).array() / std.array()).matrix();
}

Eigen::VectorXd FeatureScaling::invert(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != mean.size()) throw DataError("feature dimension does not match scaling");
  return (v.array() * std.array()).matrix() + mean;
}

Eigen::MatrixXd FeatureScaling::apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  if (rows.cols() != mean.size()) throw DataError("feature dimension does not match scaling");
  return ((rows.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array()).matrix();
}

Eigen::MatrixXd FeatureScaling::invert_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  if (rows.cols() != mean.size()) throw DataError("feature dimension does not match scaling");
  return (rows.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
}

FeatureScaling fit_scaling(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  if (rows.rows() < 2) throw DataError("fit_scaling needs at least 2 observations");
  FeatureScaling s;
  s.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm() / static_cast<double>(rows.rows())).cwiseSqrt().transpose();
  s.std = s.std.cwiseMax(kStdFloor);
  return s;
}

PoseGeometry PoseGeometry::from(const JointSet& joints, std::string_view ref_joint) {
  using namespace joint_names;
  PoseGeometry g;
  g.ref_joint = joints.require(ref_joint);
  const std::array<std::array<const char*, 3>, 2> sides{{{kLeftHip, kLeftKnee, kLeftAnkle},
                                                         {kRightHip, kRightKnee, kRightAnkle}}};
  for (const auto& side : sides) {
    auto h = joints.find(side[0]), k = joints.find(side[1]), a = joints.find(side[2]);
    if (h && k && a) g.legs.push_back({*h, *k, *a});
  }
  if (g.legs.empty())
    throw DataError("comparable pose needs hip, knee and ankle joints for at least one leg");
  return g;
}

ComparablePose comparable_pose(const Eigen::Ref<const Eigen::VectorXd>& pose, const PoseGeometry& geom) {
  const Eigen::Index J = pose.size() / 3;
  Eigen::Map<const Eigen::Matrix3Xd> P(pose.data(), 3, J);
  double s = 0.0;
  for (const auto& leg : geom.legs)
    s += (P.col(leg.ankle) - P.col(leg.knee)).norm() + (P.col(leg.knee) - P.col(leg.hip)).norm();
  s /= static_cast<double>(geom.legs.size());
  if (!(s > kMinLegScale)) throw DataError("collapsed skeleton: leg-length scale below floor");
  Eigen::Matrix3Xd rel = P.colwise() - P.col(geom.ref_joint);
  rel /= s;
  ComparablePose out;
  out.coords = Eigen::Map<const Eigen::VectorXd>(rel.data(), rel.size());
  out.scale = s;
  return out;
}

ComparablePose comparable_pose(const Eigen::Ref<const Eigen::VectorXd>& pose, const JointSet& joints,
                               std::string_view ref_joint) {
  return comparable_pose(pose, PoseGeometry::from(joints, ref_joint));
}

}  // namespace pedgpdm
