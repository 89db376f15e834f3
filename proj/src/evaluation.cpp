#include "pedgpdm/evaluation.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pedgpdm {

using json = nlohmann::json;

double ConfusionMatrix::accuracy() const {
  const long t = total();
  return t ? static_cast<double>(counts.trace()) / static_cast<double>(t) : 0.0;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  counts += o.counts;
  return *this;
}

ConfusionMatrix confusion(std::span<const Activity> predicted, std::span<const Activity> actual) {
  if (predicted.size() != actual.size())
    throw DataError(fmt::format("confusion: {} predictions for {} labels", predicted.size(), actual.size()));
  ConfusionMatrix c;
  for (std::size_t i = 0; i < predicted.size(); ++i) ++c.counts(index_of(actual[i]), index_of(predicted[i]));
  return c;
}

Prf prf(const ConfusionMatrix& c) {
  Prf r;
  r.accuracy = c.accuracy();
  for (int j = 0; j < kNumActivities; ++j) {
    ClassMetrics& m = r.per_class[static_cast<std::size_t>(j)];
    const long tp = c.counts(j, j), col = c.counts.col(j).sum(), row = c.counts.row(j).sum();
    m.precision_undefined = col == 0;
    m.recall_undefined = row == 0;
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  return r;
}

std::vector<Activity> frame_labels(const MotionSequence& seq) {
  std::vector<Activity> out;
  out.reserve(seq.frames.size());
  std::size_t s = 0;
  for (const Frame& f : seq.frames) {
    while (s < seq.segments.size() && seq.segments[s].end_frame < f.index) ++s;
    if (s == seq.segments.size() || seq.segments[s].start_frame > f.index)
      throw DataError(fmt::format("sequence '{}': frame {} has no label", seq.id, f.index));
    out.push_back(seq.segments[s].activity);
  }
  return out;
}

TuningClip tuning_clip(const MotionSequence& seq, const ModelBank& bank, const OrientationOptions& orientation) {
  if (!(seq.joints == bank.joints())) throw DataError(fmt::format("sequence '{}' joint set differs from the bank", seq.id));
  const auto obs = online_observations(seq, bank.ref_joint());
  const auto labels = frame_labels(seq);
  TuningClip c;
  c.emissions.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto o = infer_orientation(std::span(obs.data(), i + 1), seq.joints, orientation);
    c.emissions.push_back(emissions(bank.prepare(obs[i]), o, bank).score);
    c.truth.push_back(labels[i + 1]);
  }
  return c;
}

std::string_view to_string(EventKind k) { return k == EventKind::Starting ? "starting" : "stopping"; }

std::vector<long> gait_events(std::span<const Segment> segments, EventKind kind) {
  std::vector<long> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (kind == EventKind::Starting && segments[i].activity == Activity::Starting)
      out.push_back(segments[i].start_frame);
    if (kind == EventKind::Stopping && i > 0 && segments[i].activity == Activity::Standing &&
        segments[i - 1].activity == Activity::Stopping)
      out.push_back(segments[i].start_frame);
  }
  return out;
}

const MedCell& MedTable::cell(EventKind k, std::size_t tte, std::size_t horizon, bool lateral_only) const {
  const auto& t = lateral_only ? lateral : combined;
  return t[static_cast<std::size_t>(k)].at(tte).at(horizon);
}

PredictionLookup lookup(const StreamResult& r) {
  return [&r](long frame) -> const PredictionResult* {
    if (r.frames.empty()) return nullptr;
    const long i = frame - r.frames.front().frame;
    if (i < 0 || i >= static_cast<long>(r.frames.size())) return nullptr;
    const auto& f = r.frames[static_cast<std::size_t>(i)];
    return f.frame == frame ? &f.prediction : nullptr;
  };
}

std::vector<MedSample> med_samples(const PredictionLookup& preds, const MotionSequence& gt, EventKind kind,
                                   const MedGrid& grid, std::size_t* skipped) {
  const int rhip = gt.joints.require(joint_names::kRightHip);
  std::vector<MedSample> out;
  std::size_t skip = 0;
  if (gt.frames.empty()) return out;
  const long first = gt.frames.front().index, last = gt.frames.back().index;
  for (long ev : gait_events(gt.segments, kind)) {
    for (double tte : grid.tte_s) {
      for (double h : grid.horizon_s) {
        const long issue = ev - std::lround(tte * gt.rate_hz);
        const long k = std::lround(h * gt.rate_hz);
        const PredictionResult* p = issue >= first && issue <= last ? preds(issue) : nullptr;
        const long target = issue + k;
        if (!p || k < 1 || static_cast<long>(p->path.size()) < k || target > last) {
          ++skip;
          continue;
        }
        const Vector3& pred = p->path[static_cast<std::size_t>(k - 1)];
        const Vector3 truth = gt.frames[static_cast<std::size_t>(target - first)].positions.col(rhip);
        const Eigen::Vector2d d = (pred - truth).head<2>();
        out.push_back({kind, gt.id, ev, tte, h, d.norm(), std::abs(d.x())});
      }
    }
  }
  if (skipped) *skipped += skip;
  return out;
}

namespace {

MedCell cell_stats(const std::vector<double>& v) {
  MedCell c;
  c.count = v.size();
  if (v.empty()) return c;
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  const double n = static_cast<double>(v.size());
  c.mean = sum / n;
  double var = 0.0;
  for (double x : v) var += (x - c.mean) * (x - c.mean);
  c.std = std::sqrt(var / n);
  c.rmse = std::sqrt(sq / n);
  return c;
}

std::size_t grid_index(const std::vector<double>& g, double v) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] == v) return i;
  throw DataError(fmt::format("MED sample value {} is not on the grid", v));
}

}  // namespace

MedTable aggregate_med(std::span<const MedSample> samples, const MedGrid& grid, std::size_t skipped) {
  MedTable t;
  t.grid = grid;
  t.skipped = skipped;
  const std::size_t nt = grid.tte_s.size(), nh = grid.horizon_s.size();
  std::array<std::vector<std::vector<std::vector<double>>>, 2> comb, lat;
  for (int k = 0; k < 2; ++k) {
    comb[k].assign(nt, std::vector<std::vector<double>>(nh));
    lat[k].assign(nt, std::vector<std::vector<double>>(nh));
  }
  for (const auto& s : samples) {
    const std::size_t k = static_cast<std::size_t>(s.kind);
    const std::size_t i = grid_index(grid.tte_s, s.tte_s), j = grid_index(grid.horizon_s, s.horizon_s);
    comb[k][i][j].push_back(s.combined);
    lat[k][i][j].push_back(s.lateral);
  }
  for (int k = 0; k < 2; ++k) {
    t.combined[k].assign(nt, std::vector<MedCell>(nh));
    t.lateral[k].assign(nt, std::vector<MedCell>(nh));
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t j = 0; j < nh; ++j) {
        t.combined[k][i][j] = cell_stats(comb[k][i][j]);
        t.lateral[k][i][j] = cell_stats(lat[k][i][j]);
      }
  }
  return t;
}

DelayStats delay_stats(std::span<const double> delays_s) {
  DelayStats d;
  d.count = delays_s.size();
  if (delays_s.empty()) return d;
  const MedCell c = cell_stats(std::vector<double>(delays_s.begin(), delays_s.end()));
  d.mean = c.mean;
  d.std = c.std;
  std::vector<double> s(delays_s.begin(), delays_s.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  d.median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  return d;
}

std::vector<CurvePoint> accuracy_curve(std::span<const double> delays_s, std::size_t total_events, double lo,
                                       double hi, double resolution_s) {
  if (!(resolution_s > 0) || hi < lo) throw ConfigError("accuracy_curve: bad grid");
  std::vector<CurvePoint> out;
  const long n = std::lround((hi - lo) / resolution_s);
  for (long i = 0; i <= n; ++i) {
    const double tau = lo + static_cast<double>(i) * resolution_s;
    const auto hits = std::count_if(delays_s.begin(), delays_s.end(), [&](double d) { return d <= tau + 1e-12; });
    out.push_back({tau, total_events ? static_cast<double>(hits) / static_cast<double>(total_events) : 0.0});
  }
  return out;
}

Evaluator::Evaluator(MedGrid grid, double match_window_s, double stop_window_s)
    : grid_(std::move(grid)), match_window_s_(match_window_s), stop_window_s_(stop_window_s) {
  for (Activity a : {Activity::Standing, Activity::Starting, Activity::Walking, Activity::Stopping})
    transitions_.push_back({a, cycle_successor(a), 0, 0, {}});
}

void Evaluator::add(const MotionSequence& gt, const StreamResult& result) {
  if (rate_hz_ == 0.0) rate_hz_ = gt.rate_hz;
  const auto truth = frame_labels(gt);
  const auto pred = result.labels();
  if (pred.size() + 1 != truth.size())
    throw DataError(fmt::format("evaluation: '{}' has {} frames but {} recognized", gt.id, truth.size(), pred.size()));
  confusion_ += confusion(pred, std::span<const Activity>(truth).subspan(1));

  const MatchResult m = match_events(result.transitions, gt.segments, gt.rate_hz, match_window_s_);
  for (const auto& ev : m.events)
    for (auto& t : transitions_)
      if (t.from == ev.from && t.to == ev.to) {
        ++t.total;
        if (ev.delay_s) {
          ++t.matched;
          t.delays_s.push_back(*ev.delay_s);
        }
      }
  const auto stops = stopping_to_standing_delays(result.transitions, gt.segments, gt.rate_hz, stop_window_s_);
  stop_to_standing_.insert(stop_to_standing_.end(), stops.begin(), stops.end());
  standing_events_ += gait_events(gt.segments, EventKind::Stopping).size();

  const auto look = lookup(result);
  for (EventKind k : {EventKind::Starting, EventKind::Stopping}) {
    auto s = med_samples(look, gt, k, grid_, &skipped_);
    samples_.insert(samples_.end(), s.begin(), s.end());
  }
}

EvalReport Evaluator::finish(const std::string& fingerprint) const {
  EvalReport r;
  r.fingerprint = fingerprint;
  r.rate_hz = rate_hz_ > 0 ? rate_hz_ : 120.0;
  r.confusion = confusion_;
  r.transitions = transitions_;
  r.stop_to_standing_s = stop_to_standing_;
  r.standing_events = standing_events_;
  r.med_samples = samples_;
  r.med = aggregate_med(samples_, grid_, skipped_);
  return r;
}

namespace {

json delay_json(const DelayStats& d) {
  return {{"count", d.count}, {"mean_s", d.mean}, {"median_s", d.median}, {"std_s", d.std}};
}

json curve_json(const std::vector<CurvePoint>& c) {
  json a = json::array();
  for (const auto& p : c) a.push_back({{"tau_s", p.tau_s}, {"accuracy", p.accuracy}});
  return a;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", p.string()));
  return out;
}

}  // namespace

std::string report_json(const EvalReport& r) {
  json j;
  j["format"] = "pedgpdm-report";
  j["version"] = 1;
  j["config"] = r.fingerprint;
  j["statistics"] = "population standard deviation; distances in mm, times in s";
  const Prf m = prf(r.confusion);
  json conf = json::array();
  for (int i = 0; i < kNumActivities; ++i) {
    json row = json::array();
    for (int k = 0; k < kNumActivities; ++k) row.push_back(r.confusion.counts(i, k));
    conf.push_back(row);
  }
  j["recognition"]["confusion"] = conf;
  j["recognition"]["total"] = r.confusion.total();
  j["recognition"]["accuracy"] = m.accuracy;
  for (Activity a : kAllActivities) {
    const auto& c = m.per_class[static_cast<std::size_t>(index_of(a))];
    j["recognition"]["classes"][std::string(to_string(a))] = {{"precision", c.precision},
                                                             {"recall", c.recall},
                                                             {"f1", c.f1},
                                                             {"precision_undefined", c.precision_undefined},
                                                             {"recall_undefined", c.recall_undefined}};
  }
  const double step = 1.0 / r.rate_hz;
  std::size_t total = 0, matched = 0;
  json tr = json::array();
  for (const auto& t : r.transitions) {
    total += t.total;
    matched += t.matched;
    tr.push_back({{"from", std::string(to_string(t.from))},
                  {"to", std::string(to_string(t.to))},
                  {"total", t.total},
                  {"matched", t.matched},
                  {"accuracy", t.accuracy()},
                  {"delay", delay_json(delay_stats(t.delays_s))},
                  {"curve", curve_json(accuracy_curve(t.delays_s, t.total, -0.5, 0.5, step))}});
  }
  j["transitions"]["types"] = tr;
  j["transitions"]["overall"] = {
      {"total", total}, {"matched", matched}, {"accuracy", total ? static_cast<double>(matched) / total : 0.0}};
  j["transitions"]["stop_to_standing"] = {
      {"events", r.standing_events},
      {"delay", delay_json(delay_stats(r.stop_to_standing_s))},
      {"curve", curve_json(accuracy_curve(r.stop_to_standing_s, r.standing_events, -1.0, 1.0, step))}};
  json med;
  med["tte_s"] = r.med.grid.tte_s;
  med["horizon_s"] = r.med.grid.horizon_s;
  med["skipped"] = r.med.skipped;
  for (EventKind k : {EventKind::Starting, EventKind::Stopping}) {
    for (bool lat : {false, true}) {
      json rows = json::array();
      for (std::size_t i = 0; i < r.med.grid.tte_s.size(); ++i) {
        json row = json::array();
        for (std::size_t h = 0; h < r.med.grid.horizon_s.size(); ++h) {
          const MedCell& c = r.med.cell(k, i, h, lat);
          row.push_back({{"count", c.count}, {"mean_mm", c.mean}, {"std_mm", c.std}, {"rmse_mm", c.rmse}});
        }
        rows.push_back(row);
      }
      med[std::string(to_string(k))][lat ? "lateral" : "combined"] = rows;
    }
  }
  j["med"] = med;
  return j.dump(2) + "\n";
}

void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  {
    auto out = open_out(dir / "report.json");
    out << report_json(r);
  }
  {
    auto out = open_out(dir / "confusion.csv");
    out << "actual,standing,starting,stopping,walking\n";
    for (Activity a : kAllActivities) {
      const int i = index_of(a);
      fmt::print(out, "{},{},{},{},{}\n", to_string(a), r.confusion.counts(i, 0), r.confusion.counts(i, 1),
                 r.confusion.counts(i, 2), r.confusion.counts(i, 3));
    }
  }
  {
    auto out = open_out(dir / "med.csv");
    out << "event,sequence,event_frame,tte_s,horizon_s,combined_mm,lateral_mm\n";
    for (const auto& s : r.med_samples)
      fmt::print(out, "{},{},{},{},{},{},{}\n", to_string(s.kind), s.sequence, s.event_frame, s.tte_s, s.horizon_s,
                 s.combined, s.lateral);
  }
  {
    auto out = open_out(dir / "delays.csv");
    out << "transition,delay_s\n";
    for (const auto& t : r.transitions)
      for (double d : t.delays_s) fmt::print(out, "{}-{},{}\n", to_string(t.from), to_string(t.to), d);
    for (double d : r.stop_to_standing_s) fmt::print(out, "walking-stopping>standing,{}\n", d);
  }
}

std::vector<MedSample> read_med_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
  std::string line;
  std::getline(in, line);
  std::vector<MedSample> out;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw DataError(fmt::format("{}:{}: expected 7 fields", path.string(), lineno));
    MedSample s;
    if (f[0] == "starting")
      s.kind = EventKind::Starting;
    else if (f[0] == "stopping")
      s.kind = EventKind::Stopping;
    else
      throw DataError(fmt::format("{}:{}: unknown event '{}'", path.string(), lineno, f[0]));
    s.sequence = f[1];
    s.event_frame = std::stol(f[2]);
    s.tte_s = std::stod(f[3]);
    s.horizon_s = std::stod(f[4]);
    s.combined = std::stod(f[5]);
    s.lateral = std::stod(f[6]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pedgpdm
