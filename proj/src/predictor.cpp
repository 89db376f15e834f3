#include "pedgpdm/predictor.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <limits>
#include <numbers>
#include <ostream>

namespace pedgpdm {

double refine_objective(const BGpdmModel& m, const Eigen::Ref<const Eigen::VectorXd>& y,
                        const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd* grad) {
  Eigen::MatrixXd J;
  const Eigen::VectorXd mu = m.reconstruct_mean(x, grad ? &J : nullptr);
  const Eigen::VectorXd r = y - mu;
  if (grad) *grad = -2.0 * J.transpose() * r + x;
  return r.squaredNorm() + 0.5 * x.squaredNorm();
}

RefineResult refine_latent(const BGpdmModel& m, const Eigen::Ref<const Eigen::VectorXd>& y_scaled,
                           const Eigen::Ref<const Eigen::VectorXd>& x0, const RefineOptions& opts) {
  if (y_scaled.size() != m.D() || x0.size() != m.q())
    throw DataError("refine_latent: dimension mismatch with model");
  RefineResult r;
  r.x = x0;
  Eigen::VectorXd g;
  r.value = r.start_value = refine_objective(m, y_scaled, r.x, &g);
  if (!std::isfinite(r.value)) throw NumericalError("refine_latent: non-finite objective at start");
  double alpha = opts.initial_step;
  for (int it = 0; it < opts.max_iters; ++it) {
    const double gg = g.squaredNorm();
    if (gg == 0.0) break;
    bool accepted = false;
    while (alpha * std::sqrt(gg) >= opts.min_step) {
      const Eigen::VectorXd xn = r.x - alpha * g;
      Eigen::VectorXd gn;
      const double fn = refine_objective(m, y_scaled, xn, &gn);
      if (std::isfinite(fn) && fn <= r.value - opts.armijo * alpha * gg) {
        const double delta = r.value - fn;
        r.x = xn;
        r.value = fn;
        g = std::move(gn);
        r.iterations = it + 1;
        accepted = true;
        alpha *= 2.0;
        if (delta < opts.f_tol) return r;
        break;
      }
      alpha *= opts.shrink;
    }
    if (!accepted) {
      r.step_underflow = true;
      break;
    }
  }
  return r;
}

namespace {

std::vector<Activity> forked_intentions(const RecognizerState& start, const std::vector<Eigen::VectorXd>& poses,
                                        const std::vector<Eigen::VectorXd>& disps, OrientationChoice orient,
                                        const ModelBank& bank, const Tpm& tpm) {
  std::vector<Activity> out;
  out.reserve(poses.size());
  RecognizerState s = start;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    Observation o;
    o.pose = poses[k];
    o.disp = disps[k];
    s = step(s, o, orient, bank, tpm);
    out.push_back(classify(s));
  }
  return out;
}

}  // namespace

PredictionResult predict(const Observation& obs, const Vector3& anchor, Activity activity, OrientationChoice orient,
                         const ModelBank& bank, int horizon_steps, const Tpm& tpm, const RecognizerState* state,
                         const PredictOptions& opts) {
  if (horizon_steps < 0) throw ConfigError("predict: horizon must be >= 0");
  PredictionResult r;
  r.horizon_steps = horizon_steps;
  const PreparedQuery q = bank.prepare(obs);
  const auto fixed = to_orientation(orient);
  const SimilarityHit hit = fixed ? bank.nearest(q, activity, *fixed) : bank.nearest_any_orientation(q, activity);
  const BGpdmModel& m = bank.models()[static_cast<std::size_t>(hit.model_index)];
  r.source_model = m.source_id;
  const int N = horizon_steps;
  const int rhip = bank.joints().require(joint_names::kRightHip);
  r.latents.resize(N, m.q());
  if (N == 0) return r;

  if (activity == Activity::Standing) {
    for (int k = 0; k < N; ++k) {
      r.latents.row(k) = m.X().row(hit.frame);
      r.poses.push_back(obs.pose);
      r.displacements.push_back(Eigen::VectorXd::Zero(obs.disp.size()));
      r.path.push_back(anchor);
      r.intentions.push_back(Activity::Standing);
    }
    return r;
  }

  const Eigen::VectorXd y = m.scaling().apply(obs.feature());
  const RefineResult refined = refine_latent(m, y, m.X().row(hit.frame).transpose(), opts.refine);
  r.refine_underflow = refined.step_underflow;
  Eigen::VectorXd x = refined.x;
  const Eigen::Index dim = obs.pose.size();
  Vector3 p = anchor;
  for (int k = 0; k < N; ++k) {
    x = m.latent_step(x);
    r.latents.row(k) = x.transpose();
    const Eigen::VectorXd f = m.scaling().invert(m.reconstruct_mean(x));
    if (!f.allFinite()) throw NumericalError(fmt::format("predict: non-finite reconstruction from '{}'", m.source_id));
    r.poses.push_back(f.head(dim));
    r.displacements.push_back(f.tail(dim));
    p += f.segment<3>(dim + 3 * rhip);
    r.path.push_back(p);
  }
  if (state && opts.intentions) r.intentions = forked_intentions(*state, r.poses, r.displacements, orient, bank, tpm);
  return r;
}

std::vector<Observation> online_observations(const MotionSequence& seq, std::string_view ref_joint) {
  const int ref = seq.joints.require(ref_joint);
  const auto disp = displacements(seq);
  std::vector<int> ankles;
  for (const char* n : {joint_names::kLeftAnkle, joint_names::kRightAnkle})
    if (auto i = seq.joints.find(n)) ankles.push_back(*i);
  auto lowest = [&](const Frame& f) {
    if (ankles.empty()) return f.positions.row(2).minCoeff();
    double g = std::numeric_limits<double>::infinity();
    for (int c : ankles) g = std::min(g, f.positions(2, c));
    return g;
  };
  double ground = lowest(seq.frames.front());
  std::vector<Observation> out;
  out.reserve(disp.size());
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    ground = std::min(ground, lowest(seq.frames[t]));
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

namespace {

// Rotation about z applied to every joint triple of a joint-major vector.
Eigen::VectorXd rotate_triples(const Eigen::VectorXd& v, const Eigen::Matrix3d& R) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index j = 0; j + 2 < v.size(); j += 3) out.segment<3>(j) = R * v.segment<3>(j);
  return out;
}

Eigen::Matrix3d heading_alignment(std::span<const Observation> history, int rhip, const OrientationOptions& o) {
  const std::size_t n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(std::max(1, o.window)));
  Eigen::Vector2d h = Eigen::Vector2d::Zero();
  for (std::size_t i = history.size() - n; i < history.size(); ++i) h += history[i].disp.segment<2>(3 * rhip);
  h /= static_cast<double>(n);
  if (h.norm() <= o.epsilon) return Eigen::Matrix3d::Identity();
  const double a = std::atan2(h.y(), h.x());
  const double target = std::abs(a) <= std::numbers::pi / 2 ? 0.0 : std::numbers::pi;
  return Eigen::AngleAxisd(target - a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

}  // namespace

StreamResult predict_stream(const MotionSequence& seq, const ModelBank& bank, const Tpm& tpm,
                            const StreamOptions& opts) {
  if (!(seq.joints == bank.joints())) throw DataError(fmt::format("sequence '{}' joint set differs from the bank", seq.id));
  if (seq.frames.size() < 2) throw DataError(fmt::format("sequence '{}' needs at least 2 frames", seq.id));
  const auto obs = online_observations(seq, bank.ref_joint());
  const int rhip = seq.joints.require(joint_names::kRightHip);
  StreamResult r;
  r.frames.reserve(obs.size());
  RecognizerState state;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::span<const Observation> history(obs.data(), i + 1);
    Observation o = obs[i];
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    if (opts.prerotate) {
      R = heading_alignment(history, rhip, opts.orientation);
      o.pose = rotate_triples(o.pose, R);
      o.disp = rotate_triples(o.disp, R);
    }
    StreamFrame f;
    f.frame = o.frame_index;
    if (opts.prerotate) {
      std::vector<Observation> rotated(history.begin(), history.end());
      for (auto& h : rotated) h.disp = rotate_triples(h.disp, R);
      f.orientation = infer_orientation(rotated, seq.joints, opts.orientation);
    } else {
      f.orientation = infer_orientation(history, seq.joints, opts.orientation);
    }
    state = step(state, o, f.orientation, bank, tpm);
    f.state = state;
    f.label = classify(state);
    if (!opts.predict_at || opts.predict_at(f.frame)) {
      const Vector3 anchor = seq.frames[i + 1].positions.col(rhip);
      f.prediction = predict(o, anchor, f.label, f.orientation, bank, opts.horizon_steps, tpm, &state, opts.predict);
      if (opts.prerotate) {
        const Eigen::Matrix3d Rt = R.transpose();
        Vector3 p = anchor;
        for (std::size_t k = 0; k < f.prediction.path.size(); ++k) {
          f.prediction.displacements[k] = rotate_triples(f.prediction.displacements[k], Rt);
          f.prediction.poses[k] = rotate_triples(f.prediction.poses[k], Rt);
          p += f.prediction.displacements[k].segment<3>(3 * rhip);
          f.prediction.path[k] = p;
        }
      }
    }
    r.frames.push_back(std::move(f));
  }
  const auto labels = r.labels();
  r.transitions = detect_transitions(labels, seq.rate_hz, opts.window_s);
  // labels start at frame 1
  for (auto& t : r.transitions) t.detect_frame = r.frames[static_cast<std::size_t>(t.detect_frame)].frame;
  return r;
}

std::vector<Activity> StreamResult::labels() const {
  std::vector<Activity> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.label);
  return out;
}

void write_predictions(const StreamResult& r, std::ostream& out, const std::string& fingerprint) {
  fmt::print(out, "# config={}\nframe,step,x,y,z,activity,model\n", fingerprint);
  for (const auto& f : r.frames) {
    const auto& p = f.prediction;
    for (std::size_t k = 0; k < p.path.size(); ++k) {
      const Activity a = k < p.intentions.size() ? p.intentions[k] : f.label;
      fmt::print(out, "{},{},{},{},{},{},{}\n", f.frame, k + 1, p.path[k].x(), p.path[k].y(), p.path[k].z(),
                 to_string(a), p.source_model);
    }
  }
}

void write_recognition(const StreamResult& r, std::ostream& out, const std::string& fingerprint) {
  fmt::print(out, "# config={}\nframe,label,p_standing,p_starting,p_stopping,p_walking\n", fingerprint);
  for (const auto& f : r.frames)
    fmt::print(out, "{},{},{},{},{},{}\n", f.frame, to_string(f.label), f.state.posterior(0), f.state.posterior(1),
               f.state.posterior(2), f.state.posterior(3));
}

namespace {

struct CsvReader {
  std::filesystem::path path;
  std::ifstream in;
  long line_no = 0;
  std::string fingerprint;

  explicit CsvReader(const std::filesystem::path& p, std::string_view header) : path(p), in(p) {
    if (!in) throw DataError(fmt::format("cannot read '{}'", p.string()));
    std::string line;
    while (next_line(line) && line.starts_with("#"))
      if (line.starts_with("# config=")) fingerprint = line.substr(9);
    if (line != header) fail(fmt::format("expected header '{}'", header));
  }

  bool next_line(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  bool row(std::vector<std::string>& f, std::size_t n) {
    std::string line;
    do {
      if (!next_line(line)) return false;
    } while (line.empty());
    f.clear();
    std::size_t pos = 0;
    for (auto c = line.find(','); c != std::string::npos; pos = c + 1, c = line.find(',', pos))
      f.push_back(line.substr(pos, c - pos));
    f.push_back(line.substr(pos));
    if (f.size() != n) fail(fmt::format("expected {} fields, got {}", n, f.size()));
    return true;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(fmt::format("{}:{}: {}", path.string(), line_no, msg));
  }

  double number(const std::string& s) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(fmt::format("'{}' is not a number", s));
  }

  Activity activity(const std::string& s) const {
    const auto a = parse_activity(s);
    if (!a) fail(fmt::format("unknown activity '{}'", s));
    return *a;
  }
};

}  // namespace

StreamResult read_stream(const std::filesystem::path& recognition, const std::filesystem::path& predictions,
                         double rate_hz, double window_s, std::string* fingerprint) {
  StreamResult r;
  std::map<long, std::size_t> at;
  {
    CsvReader rd(recognition, "frame,label,p_standing,p_starting,p_stopping,p_walking");
    if (fingerprint) *fingerprint = rd.fingerprint;
    std::vector<std::string> f;
    while (rd.row(f, 6)) {
      StreamFrame sf;
      sf.frame = std::lround(rd.number(f[0]));
      if (!r.frames.empty() && sf.frame != r.frames.back().frame + 1) rd.fail("frames are not consecutive");
      sf.label = rd.activity(f[1]);
      for (int k = 0; k < kNumActivities; ++k) sf.state.posterior(k) = rd.number(f[2 + static_cast<std::size_t>(k)]);
      sf.state.t = static_cast<long>(r.frames.size()) + 1;
      at[sf.frame] = r.frames.size();
      r.frames.push_back(std::move(sf));
    }
  }
  if (!predictions.empty()) {
    CsvReader rd(predictions, "frame,step,x,y,z,activity,model");
    std::vector<std::string> f;
    while (rd.row(f, 7)) {
      const auto it = at.find(std::lround(rd.number(f[0])));
      if (it == at.end()) rd.fail(fmt::format("frame {} is not in the recognition file", f[0]));
      auto& p = r.frames[it->second].prediction;
      if (std::lround(rd.number(f[1])) != static_cast<long>(p.path.size()) + 1) rd.fail("steps are not consecutive");
      p.path.emplace_back(rd.number(f[2]), rd.number(f[3]), rd.number(f[4]));
      p.intentions.push_back(rd.activity(f[5]));
      p.source_model = f[6];
      p.horizon_steps = static_cast<int>(p.path.size());
    }
  }
  r.transitions = detect_transitions(r.labels(), rate_hz, window_s);
  for (auto& t : r.transitions) t.detect_frame = r.frames[static_cast<std::size_t>(t.detect_frame)].frame;
  return r;
}

}  // namespace pedgpdm
