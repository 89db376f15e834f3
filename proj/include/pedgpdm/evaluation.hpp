#pragma once

// Recognition and path-prediction metrics plus report files.

#include "pedgpdm/predictor.hpp"

namespace pedgpdm {

struct ConfusionMatrix {
  Eigen::Matrix<long, kNumActivities, kNumActivities> counts =
      Eigen::Matrix<long, kNumActivities, kNumActivities>::Zero();  // actual x predicted

  long total() const { return counts.sum(); }
  double accuracy() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

ConfusionMatrix confusion(std::span<const Activity> predicted, std::span<const Activity> actual);

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool precision_undefined = false, recall_undefined = false;
};

struct Prf {
  std::array<ClassMetrics, kNumActivities> per_class;
  double accuracy = 0.0;
};

Prf prf(const ConfusionMatrix& c);

/// Activity label of every frame according to the segments.
std::vector<Activity> frame_labels(const MotionSequence& seq);

/// Emissions the online recognizer sees for a labelled sequence, for TPM tuning.
TuningClip tuning_clip(const MotionSequence& seq, const ModelBank& bank, const OrientationOptions& orientation = {});

enum class EventKind { Starting, Stopping };
std::string_view to_string(EventKind k);

/// Starting: first frame of each Starting segment. Stopping: first frame of each
/// Standing segment that follows a Stopping segment.
std::vector<long> gait_events(std::span<const Segment> segments, EventKind kind);

struct MedGrid {
  std::vector<double> tte_s{1.0, 0.5, 0.0, -0.5, -1.0};  // positive = before the event
  std::vector<double> horizon_s{0.5, 1.0};
};

struct MedSample {
  EventKind kind;
  std::string sequence;
  long event_frame;
  double tte_s, horizon_s;
  double combined;  // xy distance, mm
  double lateral;   // |dx|, mm
};

struct MedCell {
  std::size_t count = 0;
  double mean = 0.0, std = 0.0, rmse = 0.0;  // population statistics
};

struct MedTable {
  MedGrid grid;
  // [kind][tte][horizon]
  std::array<std::vector<std::vector<MedCell>>, 2> combined, lateral;
  std::size_t skipped = 0;

  const MedCell& cell(EventKind k, std::size_t tte, std::size_t horizon, bool lateral_only = false) const;
};

/// Prediction issued at a frame, or nullptr.
using PredictionLookup = std::function<const PredictionResult*(long frame)>;
PredictionLookup lookup(const StreamResult& r);

/// One sample per (event, tte, horizon): the prediction issued at event - tte*rate is
/// compared with the right hip at issue frame + horizon*rate. Unavailable pairs are skipped.
std::vector<MedSample> med_samples(const PredictionLookup& preds, const MotionSequence& gt, EventKind kind,
                                   const MedGrid& grid, std::size_t* skipped = nullptr);

MedTable aggregate_med(std::span<const MedSample> samples, const MedGrid& grid, std::size_t skipped = 0);

struct DelayStats {
  std::size_t count = 0;
  double mean = 0.0, median = 0.0, std = 0.0;
};
DelayStats delay_stats(std::span<const double> delays_s);

struct CurvePoint {
  double tau_s;
  double accuracy;  // share of all events detected with delay <= tau
};
/// Grid from lo to hi (inclusive) with step `resolution_s`.
std::vector<CurvePoint> accuracy_curve(std::span<const double> delays_s, std::size_t total_events, double lo,
                                       double hi, double resolution_s);

struct TransitionSummary {
  Activity from, to;
  std::size_t total = 0, matched = 0;
  std::vector<double> delays_s;
  double accuracy() const { return total ? static_cast<double>(matched) / total : 0.0; }
};

struct EvalReport {
  std::string fingerprint;
  double rate_hz = 120.0;
  ConfusionMatrix confusion;
  std::vector<TransitionSummary> transitions;  // four cycle transitions
  std::vector<double> stop_to_standing_s;
  std::size_t standing_events = 0;
  std::vector<MedSample> med_samples;
  MedTable med;
};

/// Accumulates per-sequence results in call order.
class Evaluator {
 public:
  explicit Evaluator(MedGrid grid = {}, double match_window_s = 0.5, double stop_window_s = 1.0);

  void add(const MotionSequence& gt, const StreamResult& result);
  EvalReport finish(const std::string& fingerprint) const;

 private:
  MedGrid grid_;
  double match_window_s_, stop_window_s_;
  double rate_hz_ = 0.0;
  ConfusionMatrix confusion_;
  std::vector<TransitionSummary> transitions_;
  std::vector<double> stop_to_standing_;
  std::size_t standing_events_ = 0;
  std::vector<MedSample> samples_;
  std::size_t skipped_ = 0;
};

/// report.json, confusion.csv, med.csv (one row per sample) and delays.csv.
void emit_report(const EvalReport& r, const std::filesystem::path& dir);
std::string report_json(const EvalReport& r);

/// Reads the sample rows back from med.csv.
std::vector<MedSample> read_med_csv(const std::filesystem::path& path);

}  // namespace pedgpdm
