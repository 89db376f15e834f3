#pragma once

// Four-state activity HMM with max-product prior, similarity emissions and
// multiframe transition validation.

#include "pedgpdm/model_bank.hpp"

#include <array>
#include <span>

namespace pedgpdm {

using Vector4 = Eigen::Vector4d;

struct Tpm {
  Eigen::Matrix4d p;  // rows = from, cols = to

  /// self-transition `stay`, remainder to the cycle successor, zeros elsewhere.
  static Tpm cycle(double stay = 0.995);
  /// Per-state self-transitions, indexed like Activity.
  static Tpm cycle(const std::array<double, kNumActivities>& stay);
  /// Throws ConfigError unless rows are stochastic; structural zeros are enforced
  /// unless `allow_noncycle`.
  void validate(bool allow_noncycle = false) const;
  static bool structurally_allowed(Activity from, Activity to);
};

struct RecognizerState {
  Vector4 posterior = Vector4::Constant(0.25);
  long t = 0;  // steps taken
  std::optional<Activity> last_label;
};

/// Orientation used for emissions; Either takes the better of both buckets.
enum class OrientationChoice { LeftToRight, RightToLeft, Either };
std::optional<Orientation> to_orientation(OrientationChoice c);

struct Emissions {
  Vector4 score = Vector4::Zero();
  std::array<std::optional<SimilarityHit>, kNumActivities> hits;
};

/// Best similarity per activity. Empty buckets give 0 and a warning.
Emissions emissions(const PreparedQuery& q, OrientationChoice o, const ModelBank& bank,
                    std::vector<std::string>* warnings = nullptr);
double emission(const Observation& obs, Activity a, Orientation o, const ModelBank& bank,
                std::vector<std::string>* warnings = nullptr);

/// prior_j = max_i tpm(i,j) * posterior_i (uniform when t == 0); posterior ~ emission * prior.
RecognizerState step(const RecognizerState& s, const Vector4& emission, const Tpm& tpm);
RecognizerState step(const RecognizerState& s, const Observation& obs, OrientationChoice o, const ModelBank& bank,
                     const Tpm& tpm, Emissions* detail = nullptr);

/// Argmax; ties go to the earlier state.
Activity classify(const Vector4& posterior);
inline Activity classify(const RecognizerState& s) { return classify(s.posterior); }

struct OrientationOptions {
  double epsilon = 1.0;  // mm/frame
  int window = 5;        // frames
};

/// Sign of the mean right-hip x displacement over the last `window` observations.
OrientationChoice infer_orientation(std::span<const Observation> history, const JointSet& joints,
                                    const OrientationOptions& opts = {});

struct TransitionEvent {
  Activity from;
  Activity to;
  long detect_frame;
  std::optional<double> delay_s;
};

/// round(0.05 * rate_hz) frames, at least 2.
int multiframe_window(double rate_hz, double window_s = 0.05);

/// Fires when `window` consecutive equal labels differ from the last validated
/// activity (initially the first label); detect_frame is the first frame of the run.
std::vector<TransitionEvent> detect_transitions(std::span<const Activity> labels, double rate_hz,
                                                double window_s = 0.05);

struct LabelledEvent {
  Activity from;
  Activity to;
  long frame;  // first frame of the new segment
  std::optional<std::size_t> detection;
  std::optional<double> delay_s;
};

struct TransitionAccuracy {
  Activity from, to;
  std::size_t total = 0;
  std::size_t matched = 0;
  double accuracy() const { return total ? static_cast<double>(matched) / total : 0.0; }
};

struct MatchResult {
  std::vector<LabelledEvent> events;
  std::vector<TransitionAccuracy> per_type;  // the four cycle transitions in order
  TransitionAccuracy overall{Activity::Standing, Activity::Standing};
};

/// Segment boundaries where the activity changes.
std::vector<LabelledEvent> labelled_events(std::span<const Segment> segments);

/// One-to-one nearest same-type matching within +-window_s; delay = detection - event.
MatchResult match_events(std::span<const TransitionEvent> detections, std::span<const Segment> segments,
                         double rate_hz, double window_s = 0.5);

/// Delay from each Walking->Stopping detection to the next Standing segment start,
/// for detections within +-window_s of that event.
std::vector<double> stopping_to_standing_delays(std::span<const TransitionEvent> detections,
                                                std::span<const Segment> segments, double rate_hz,
                                                double window_s = 1.0);

/// Precomputed per-frame emissions of one validation clip with its true labels.
struct TuningClip {
  std::vector<Vector4> emissions;
  std::vector<Activity> truth;
};

/// Share of frames whose argmax label matches the truth.
double frame_accuracy(std::span<const TuningClip> clips, const Tpm& tpm);

struct TpmTuning {
  std::array<double, kNumActivities> stay{};
  Tpm tpm;
  double accuracy = 0.0;
};

/// Exhaustive search over per-state self-transitions drawn from `grid`, maximising
/// frame accuracy. The first grid point in lexicographic order wins ties.
TpmTuning tune_tpm(std::span<const TuningClip> clips,
                   std::span<const double> grid = std::array{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995});

}  // namespace pedgpdm
