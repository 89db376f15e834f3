#pragma once

// Per-sequence models grouped by (orientation, activity) with an exhaustive
// nearest-training-observation index.

#include "pedgpdm/gpdm.hpp"
#include "pedgpdm/mocap.hpp"

#include <functional>

namespace pedgpdm {

inline constexpr int kBankFormatVersion = 1;

struct SimilarityHit {
  std::string model_id;
  int model_index = -1;
  int frame = -1;  // observation row inside the model
  double score = 0.0;
  double sse_pose = 0.0;
  double sse_disp = 0.0;
};

/// A query in the index's comparison space: leg-normalized pose plus raw displacement.
struct PreparedQuery {
  Eigen::VectorXd pose;
  Eigen::VectorXd disp;
  bool use_disp = true;
};

/// Which observation parts enter the similarity score.
enum class Features { PoseAndDisplacement, Pose };

struct BankBucket {
  struct Entry {
    int model;
    int frame;
  };
  std::vector<Entry> entries;
  Eigen::MatrixXd poses;  // 3J x N comparable poses
  Eigen::MatrixXd disps;  // 3J x N raw displacements (mm/frame)
};

struct BuildOptions {
  int q = 3;
  std::optional<double> kappa;  // default D/q
  TrainOptions train{};
  int threads = 1;
  int stride = 1;
  /// Sequences for which this returns true are left out (one-vs-all evaluation).
  std::function<bool(const MotionSequence&)> exclude;
};

struct BuildReport {
  std::vector<std::string> failures;  // "<sequence id>: <reason>"
  std::size_t excluded = 0;
};

class ModelBank {
 public:
  ModelBank() = default;
  ModelBank(std::vector<BGpdmModel> models, JointSet joints, std::string ref_joint, int stride = 1);

  const std::vector<BGpdmModel>& models() const { return models_; }
  const JointSet& joints() const { return joints_; }
  const std::string& ref_joint() const { return ref_joint_; }
  const PoseGeometry& geometry() const { return geometry_; }
  int stride() const { return stride_; }
  const BankBucket& bucket(Orientation o, Activity a) const;
  std::size_t bucket_size(Orientation o, Activity a) const { return bucket(o, a).entries.size(); }

  /// Similarity features for queries prepared from now on; not persisted.
  void set_features(Features f) { features_ = f; }
  Features features() const { return features_; }

  PreparedQuery prepare(const Observation& obs) const;

  /// Best similarity summand 1/(1+sse_pose) + 1/(1+sse_disp) over the bucket, or
  /// 1/(1+sse_pose) for a pose-only query. Ties go to the
  /// lowest model id, then the lowest frame. Throws DataError on an empty bucket.
  SimilarityHit nearest(const PreparedQuery& q, Activity a, Orientation o) const;
  SimilarityHit nearest(const Observation& obs, Activity a, Orientation o) const {
    return nearest(prepare(obs), a, o);
  }
  /// Best over both orientation buckets (left-to-right wins ties).
  SimilarityHit nearest_any_orientation(const PreparedQuery& q, Activity a) const;

  /// Copy of the bank without the models of `subject`.
  ModelBank without_subject(const std::string& subject) const;

  /// Native-unit observation stored for (model, frame): [pose, disp].
  Observation training_observation(int model, int frame) const;

 private:
  std::vector<BGpdmModel> models_;
  JointSet joints_;
  std::string ref_joint_;
  PoseGeometry geometry_;
  int stride_ = 1;
  Features features_ = Features::PoseAndDisplacement;
  std::map<BucketKey, BankBucket> index_;
};

/// Trains one model per sequence in `split`. Failed sequences are reported and
/// skipped; the build throws only if a bucket that had sequences ends empty.
ModelBank build_bank(const CorpusSplit& split, const JointSet& joints, const std::string& ref_joint,
                     const BuildOptions& opts, BuildReport* report = nullptr);

/// Trains the model for one single-activity sequence.
BGpdmModel train_sequence(const MotionSequence& seq, const std::string& ref_joint, int q,
                          std::optional<double> kappa, const TrainOptions& opts);

/// Writes manifest.json plus one model file per sequence.
void save_bank(const ModelBank& bank, const std::filesystem::path& dir);
ModelBank load_bank(const std::filesystem::path& dir);

}  // namespace pedgpdm
