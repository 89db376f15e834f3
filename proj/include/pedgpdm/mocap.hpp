#pragma once

// Canonical sequence/label files, joint selection, activity cropping and the
// (orientation, activity) corpus split.

#include "pedgpdm/common.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace pedgpdm {

/// Ordered list of unique joint names. Matching is case-sensitive.
class JointSet {
 public:
  JointSet() = default;
  explicit JointSet(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }
  std::optional<int> find(std::string_view name) const;
  /// Index of `name`; throws DataError when absent.
  int require(std::string_view name) const;

  bool operator==(const JointSet&) const = default;

 private:
  std::vector<std::string> names_;
};

/// Default 11-joint reduced set (legs, hips, shoulders, head).
const JointSet& canonical_joints();

namespace joint_names {
inline constexpr const char* kHead = "head";
inline constexpr const char* kCenterShoulders = "centerShoulders";
inline constexpr const char* kLeftShoulder = "leftShoulder";
inline constexpr const char* kRightShoulder = "rightShoulder";
inline constexpr const char* kCenterHips = "centerHips";
inline constexpr const char* kLeftHip = "leftHip";
inline constexpr const char* kRightHip = "rightHip";
inline constexpr const char* kLeftKnee = "leftKnee";
inline constexpr const char* kRightKnee = "rightKnee";
inline constexpr const char* kLeftAnkle = "leftAnkle";
inline constexpr const char* kRightAnkle = "rightAnkle";
}  // namespace joint_names

struct Frame {
  long index = 0;
  double time_s = 0.0;
  Eigen::Matrix3Xd positions;  // mm, one column per joint

  bool operator==(const Frame& o) const {
    return index == o.index && time_s == o.time_s && positions.cols() == o.positions.cols() &&
           positions == o.positions;
  }
};

/// Inclusive frame-index range carrying one activity.
struct Segment {
  Activity activity = Activity::Standing;
  long start_frame = 0;
  long end_frame = 0;

  long length() const { return end_frame - start_frame + 1; }
  bool operator==(const Segment&) const = default;
};

struct MotionSequence {
  std::string id;
  std::string subject;
  double rate_hz = 120.0;
  std::optional<Orientation> orientation;
  JointSet joints;
  std::vector<Frame> frames;
  std::vector<Segment> segments;

  int num_frames() const { return static_cast<int>(frames.size()); }
  bool operator==(const MotionSequence&) const = default;
};

/// Checks every MotionSequence invariant; throws DataError naming the violation.
void validate(const MotionSequence& seq);

MotionSequence parse_sequence(const std::filesystem::path& path);
MotionSequence parse_sequence_text(std::string_view text, const std::string& source = "<memory>");
std::string format_sequence(const MotionSequence& seq);
void write_sequence(const MotionSequence& seq, const std::filesystem::path& path);

/// Parses `activity,start,end` rows. Out-of-order or overlapping ranges and unknown
/// activities throw; cycle-order violations are appended to `warnings` (if given).
std::vector<Segment> parse_labels(const std::filesystem::path& path,
                                  std::vector<std::string>* warnings = nullptr);
std::vector<Segment> parse_labels_text(std::string_view text,
                                       std::vector<std::string>* warnings = nullptr,
                                       const std::string& source = "<memory>");
std::string format_labels(const std::vector<Segment>& segments);
void write_labels(const std::vector<Segment>& segments, const std::filesystem::path& path);

/// Checks label ranges against the sequence's frame indices and stores them.
void attach_labels(MotionSequence& seq, std::vector<Segment> segments);

MotionSequence select_joints(const MotionSequence& seq, const JointSet& subset);

/// One single-activity subsequence per segment; ids get a `#<k>-<activity>` suffix.
std::vector<MotionSequence> crop_by_activity(const MotionSequence& seq);

using BucketKey = std::pair<Orientation, Activity>;

struct CorpusSplit {
  std::map<BucketKey, std::vector<MotionSequence>> buckets;  // always 8 keys

  std::size_t num_sequences() const;
  std::size_t num_frames() const;
  /// Frames minus one per sequence (the first frame has no displacement).
  std::size_t num_observations() const;
};

CorpusSplit split_corpus(std::vector<MotionSequence> seqs);

}  // namespace pedgpdm
