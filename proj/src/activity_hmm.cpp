#include "pedgpdm/activity_hmm.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pedgpdm {

bool Tpm::structurally_allowed(Activity from, Activity to) {
  return from == to || cycle_successor(from) == to;
}

Tpm Tpm::cycle(double stay) {
  if (!(stay >= 0.0 && stay <= 1.0)) throw ConfigError("tpm: self-transition must lie in [0, 1]");
  Tpm t;
  t.p.setZero();
  for (Activity a : kAllActivities) {
    t.p(index_of(a), index_of(a)) = stay;
    t.p(index_of(a), index_of(cycle_successor(a))) = 1.0 - stay;
  }
  return t;
}

Tpm Tpm::cycle(const std::array<double, kNumActivities>& stay) {
  Tpm t;
  t.p.setZero();
  for (Activity a : kAllActivities) {
    const double s = stay[static_cast<std::size_t>(index_of(a))];
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("tpm: self-transition must lie in [0, 1]");
    t.p(index_of(a), index_of(a)) = s;
    t.p(index_of(a), index_of(cycle_successor(a))) = 1.0 - s;
  }
  return t;
}

void Tpm::validate(bool allow_noncycle) const {
  for (int i = 0; i < kNumActivities; ++i) {
    for (int j = 0; j < kNumActivities; ++j) {
      const double v = p(i, j);
      if (!(v >= 0.0 && v <= 1.0))
        throw ConfigError(fmt::format("tpm: entry ({},{}) = {} outside [0,1]", i, j, v));
      if (!allow_noncycle && v != 0.0 && !structurally_allowed(activity_from_index(i), activity_from_index(j)))
        throw ConfigError(fmt::format("tpm: {} -> {} must be 0 (activity cycle)",
                                      to_string(activity_from_index(i)), to_string(activity_from_index(j))));
    }
    const double sum = p.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError(fmt::format("tpm: row {} sums to {:.17g}, expected 1", to_string(activity_from_index(i)), sum));
  }
}

std::optional<Orientation> to_orientation(OrientationChoice c) {
  switch (c) {
    case OrientationChoice::LeftToRight:
      return Orientation::LeftToRight;
    case OrientationChoice::RightToLeft:
      return Orientation::RightToLeft;
    case OrientationChoice::Either:
      break;
  }
  return std::nullopt;
}

Emissions emissions(const PreparedQuery& q, OrientationChoice o, const ModelBank& bank,
                    std::vector<std::string>* warnings) {
  Emissions e;
  const auto fixed = to_orientation(o);
  for (Activity a : kAllActivities) {
    const bool empty = fixed ? bank.bucket_size(*fixed, a) == 0
                             : bank.bucket_size(Orientation::LeftToRight, a) == 0 &&
                                   bank.bucket_size(Orientation::RightToLeft, a) == 0;
    if (empty) {
      if (warnings) warnings->push_back(fmt::format("no models for {}; state disabled", to_string(a)));
      continue;
    }
    auto hit = fixed ? bank.nearest(q, a, *fixed) : bank.nearest_any_orientation(q, a);
    e.score(index_of(a)) = hit.score;
    e.hits[static_cast<std::size_t>(index_of(a))] = std::move(hit);
  }
  return e;
}

double emission(const Observation& obs, Activity a, Orientation o, const ModelBank& bank,
                std::vector<std::string>* warnings) {
  if (bank.bucket_size(o, a) == 0) {
    if (warnings) warnings->push_back(fmt::format("no models for ({}, {})", to_string(o), to_string(a)));
    return 0.0;
  }
  return bank.nearest(obs, a, o).score;
}

RecognizerState step(const RecognizerState& s, const Vector4& emission, const Tpm& tpm) {
  Vector4 prior;
  if (s.t == 0) {
    prior.setConstant(1.0 / kNumActivities);
  } else {
    for (int j = 0; j < kNumActivities; ++j) prior(j) = (tpm.p.col(j).array() * s.posterior.array()).maxCoeff();
  }
  const Vector4 un = emission.cwiseProduct(prior);
  const double z = un.sum();
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericalError("degenerate posterior: all state scores are zero");
  RecognizerState out;
  out.posterior = un / z;
  out.t = s.t + 1;
  out.last_label = classify(out.posterior);
  return out;
}

RecognizerState step(const RecognizerState& s, const Observation& obs, OrientationChoice o, const ModelBank& bank,
                     const Tpm& tpm, Emissions* detail) {
  Emissions e = emissions(bank.prepare(obs), o, bank);
  RecognizerState out = step(s, e.score, tpm);
  if (detail) *detail = std::move(e);
  return out;
}

Activity classify(const Vector4& posterior) {
  int best = 0;
  for (int j = 1; j < kNumActivities; ++j)
    if (posterior(j) > posterior(best)) best = j;
  return activity_from_index(best);
}

OrientationChoice infer_orientation(std::span<const Observation> history, const JointSet& joints,
                                    const OrientationOptions& opts) {
  if (history.empty()) throw DataError("infer_orientation: empty history");
  const int rhip = joints.require(joint_names::kRightHip);
  const std::size_t n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(std::max(1, opts.window)));
  double sum = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) sum += history[i].disp(3 * rhip);
  const double mean = sum / static_cast<double>(n);
  if (mean > opts.epsilon) return OrientationChoice::LeftToRight;
  if (mean < -opts.epsilon) return OrientationChoice::RightToLeft;
  return OrientationChoice::Either;
}

int multiframe_window(double rate_hz, double window_s) {
  return std::max(2, static_cast<int>(std::lround(window_s * rate_hz)));
}

std::vector<TransitionEvent> detect_transitions(std::span<const Activity> labels, double rate_hz,
                                                double window_s) {
  std::vector<TransitionEvent> out;
  if (labels.empty()) return out;
  const std::size_t w = static_cast<std::size_t>(multiframe_window(rate_hz, window_s));
  Activity validated = labels[0];
  std::size_t run = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    run = (i > 0 && labels[i] == labels[i - 1]) ? run + 1 : 1;
    if (run == w && labels[i] != validated) {
      out.push_back({validated, labels[i], static_cast<long>(i + 1 - w), std::nullopt});
      validated = labels[i];
    }
  }
  return out;
}

std::vector<LabelledEvent> labelled_events(std::span<const Segment> segments) {
  std::vector<LabelledEvent> out;
  for (std::size_t i = 1; i < segments.size(); ++i)
    if (segments[i].activity != segments[i - 1].activity)
      out.push_back({segments[i - 1].activity, segments[i].activity, segments[i].start_frame, {}, {}});
  return out;
}

MatchResult match_events(std::span<const TransitionEvent> detections, std::span<const Segment> segments,
                         double rate_hz, double window_s) {
  MatchResult r;
  r.events = labelled_events(segments);
  std::vector<bool> used(detections.size(), false);
  const double tol = 1e-9;
  for (auto& ev : r.events) {
    std::optional<std::size_t> best;
    double best_abs = 0.0;
    for (std::size_t d = 0; d < detections.size(); ++d) {
      if (used[d] || detections[d].from != ev.from || detections[d].to != ev.to) continue;
      const double delay = static_cast<double>(detections[d].detect_frame - ev.frame) / rate_hz;
      if (std::abs(delay) > window_s + tol) continue;
      if (!best || std::abs(delay) < best_abs) {
        best = d;
        best_abs = std::abs(delay);
      }
    }
    if (best) {
      used[*best] = true;
      ev.detection = best;
      ev.delay_s = static_cast<double>(detections[*best].detect_frame - ev.frame) / rate_hz;
    }
  }
  for (Activity a : {Activity::Standing, Activity::Starting, Activity::Walking, Activity::Stopping})
    r.per_type.push_back({a, cycle_successor(a)});
  for (const auto& ev : r.events) {
    for (auto& t : r.per_type) {
      if (t.from == ev.from && t.to == ev.to) {
        ++t.total;
        if (ev.detection) ++t.matched;
      }
    }
    ++r.overall.total;
    if (ev.detection) ++r.overall.matched;
  }
  return r;
}

std::vector<double> stopping_to_standing_delays(std::span<const TransitionEvent> detections,
                                                std::span<const Segment> segments, double rate_hz,
                                                double window_s) {
  std::vector<double> out;
  std::vector<bool> used(detections.size(), false);
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].activity != Activity::Standing || segments[i - 1].activity != Activity::Stopping) continue;
    const long event = segments[i].start_frame;
    std::optional<std::size_t> best;
    double best_abs = 0.0;
    for (std::size_t d = 0; d < detections.size(); ++d) {
      if (used[d] || detections[d].from != Activity::Walking || detections[d].to != Activity::Stopping) continue;
      const double delay = static_cast<double>(detections[d].detect_frame - event) / rate_hz;
      if (std::abs(delay) > window_s + 1e-9) continue;
      if (!best || std::abs(delay) < best_abs) {
        best = d;
        best_abs = std::abs(delay);
      }
    }
    if (best) {
      used[*best] = true;
      out.push_back(static_cast<double>(detections[*best].detect_frame - event) / rate_hz);
    }
  }
  return out;
}

double frame_accuracy(std::span<const TuningClip> clips, const Tpm& tpm) {
  long hit = 0, n = 0;
  for (const auto& c : clips) {
    if (c.emissions.size() != c.truth.size()) throw DataError("tuning clip: emissions and labels differ in length");
    RecognizerState s;
    for (std::size_t i = 0; i < c.emissions.size(); ++i) {
      s = step(s, c.emissions[i], tpm);
      hit += classify(s) == c.truth[i];
      ++n;
    }
  }
  if (n == 0) throw DataError("tpm tuning: no frames");
  return static_cast<double>(hit) / static_cast<double>(n);
}

TpmTuning tune_tpm(std::span<const TuningClip> clips, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("tpm tuning: empty grid");
  for (double g : grid)
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("tpm tuning: grid values must lie in [0, 1]");
  TpmTuning best;
  best.accuracy = -1.0;
  const std::size_t n = grid.size();
  std::size_t combos = 1;
  for (int i = 0; i < kNumActivities; ++i) combos *= n;
  for (std::size_t c = 0; c < combos; ++c) {
    std::array<double, kNumActivities> stay;
    std::size_t rest = c;
    for (int i = kNumActivities - 1; i >= 0; --i) {
      stay[static_cast<std::size_t>(i)] = grid[rest % n];
      rest /= n;
    }
    const Tpm t = Tpm::cycle(stay);
    const double acc = frame_accuracy(clips, t);
    if (acc > best.accuracy) best = {stay, t, acc};
  }
  return best;
}

}  // namespace pedgpdm
