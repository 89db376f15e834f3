#include "pedgpdm/synthetic_gait.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <random>

namespace pedgpdm {

namespace {

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }
// integral of smoothstep over [0, u]
double smoothstep_int(double u) { return u * u * u - 0.5 * u * u * u * u; }

// Value moving from a to b along a smoothstep over `len` seconds, and the integral since start.
struct Ramp {
  double a, b, len;
  double value(double s) const {
    if (len <= 0.0 || s >= len) return b;
    return a + (b - a) * smoothstep(s / len);
  }
  double integral(double s) const {
    if (len <= 0.0) return b * s;
    if (s >= len) return a * len + (b - a) * len * 0.5 + b * (s - len);
    return a * s + (b - a) * len * smoothstep_int(s / len);
  }
};

struct Phase {
  double t0, t1;
  Ramp speed, gain;
  double d0;
  double phi0, phi_rate;  // left-leg gait phase, pi per step
};

// Body proportions as fractions of leg length.
constexpr double kThigh = 0.52, kShank = 0.48, kHipHalf = 0.11, kShoulderHalf = 0.22, kTorso = 0.6,
                 kNeck = 0.25;
constexpr double kSwing = 0.35, kKneeFlex = 0.6, kKneeStance = 0.05, kBob = 0.015, kLean = 0.04;

}  // namespace

void GaitParams::validate() const {
  if (!(leg_length > 0) || !(step_length > 0) || !(step_period > 0) || !(rate_hz > 0))
    throw ConfigError("gait: leg_length, step_length, step_period and rate_hz must be positive");
  if (accel_steps < 0) throw ConfigError("gait: accel_steps must be >= 0");
  if (!(noise_std >= 0)) throw ConfigError("gait: noise_std must be >= 0");
}

std::vector<ScriptStep> full_cycle_script(double stand_before, double starting, double walking, double stopping,
                                          double stand_after) {
  return {{Activity::Standing, stand_before},
          {Activity::Starting, starting},
          {Activity::Walking, walking},
          {Activity::Stopping, stopping},
          {Activity::Standing, stand_after}};
}

MotionSequence generate_gait(const GaitParams& p, const std::vector<ScriptStep>& script) {
  p.validate();
  if (script.empty()) throw ConfigError("gait: empty script");

  MotionSequence seq;
  seq.id = p.id;
  seq.subject = p.subject;
  seq.rate_hz = p.rate_hz;
  seq.orientation = p.orientation;
  seq.joints = canonical_joints();

  const double v_full = p.cruise_speed();
  const double pi = std::numbers::pi;
  std::vector<Phase> phases;
  double t = 0.0, v = 0.0, g = 0.0, d = 0.0, phi = -0.5 * pi;
  long frame = 0;
  for (const auto& step : script) {
    if (!(step.duration_s > 0)) throw ConfigError("gait: script durations must be positive");
    double dur = step.duration_s;
    if (step.activity == Activity::Walking) {
      // whole steps, so the walk ends on a foot strike
      dur = std::max(1.0, std::round(dur / p.step_period)) * p.step_period;
    }
    const double t1 = t + dur;
    const long end_frame = std::lround(t1 * p.rate_hz) - 1;
    if (end_frame < frame)
      throw ConfigError(fmt::format("gait: {} step of {} s is shorter than one frame", to_string(step.activity),
                                    step.duration_s));
    Phase ph{t, t1, {}, {}, d, phi, 0.0};
    switch (step.activity) {
      case Activity::Standing:
        ph.speed = {0.0, 0.0, 0.0};
        ph.gain = {0.0, 0.0, 0.0};
        break;
      case Activity::Starting:
        // the first step starts from feet together and ends on the leading foot strike
        ph.phi0 = -0.5 * pi;
        ph.phi_rate = pi / dur;
        ph.speed = {v, 0.5 * v_full, dur};
        ph.gain = {g, 1.0, dur};
        break;
      case Activity::Walking: {
        // a walk that follows standing or starting accelerates over accel_steps
        const double len = v < v_full ? std::min(dur, p.accel_steps * p.step_period) : 0.0;
        ph.phi_rate = pi / p.step_period;
        ph.speed = {v, v_full, len};
        ph.gain = {g, 1.0, len};
        if (phases.empty()) {
          // a clip that opens mid-walk is already at cruise speed
          ph.phi0 = 0.5 * pi;
          ph.speed = {v_full, v_full, 0.0};
          ph.gain = {1.0, 1.0, 0.0};
        }
        break;
      }
      case Activity::Stopping:
        ph.phi_rate = pi / dur;
        ph.speed = {v, 0.0, dur};
        ph.gain = {g, 0.0, dur};
        break;
    }
    phases.push_back(ph);
    seq.segments.push_back({step.activity, frame, end_frame});
    frame = end_frame + 1;
    v = ph.speed.value(dur);
    g = ph.gain.value(dur);
    d += ph.speed.integral(dur);
    phi = ph.phi0 + ph.phi_rate * dur;
    t = t1;
  }

  using namespace joint_names;
  const JointSet& js = seq.joints;
  const int head = js.require(kHead), cshoulders = js.require(kCenterShoulders),
            lshoulder = js.require(kLeftShoulder), rshoulder = js.require(kRightShoulder),
            chips = js.require(kCenterHips), lhip = js.require(kLeftHip), rhip = js.require(kRightHip),
            lknee = js.require(kLeftKnee), rknee = js.require(kRightKnee), lankle = js.require(kLeftAnkle),
            rankle = js.require(kRightAnkle);

  const double L = p.leg_length;
  const double h = p.orientation == Orientation::LeftToRight ? 1.0 : -1.0;
  const Vector3 fwd(h, 0.0, 0.0), left(0.0, h, 0.0), up(0.0, 0.0, 1.0);

  std::mt19937_64 rng(p.rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::size_t cur = 0;
  seq.frames.resize(static_cast<std::size_t>(frame));
  for (long k = 0; k < frame; ++k) {
    const double tk = static_cast<double>(k) / p.rate_hz;
    while (cur + 1 < phases.size() && tk >= phases[cur].t1) ++cur;
    const Phase& ph = phases[cur];
    const double s = tk - ph.t0;
    const double dist = ph.d0 + ph.speed.integral(s);
    const double gain = ph.gain.value(s);
    const double phi = ph.phi0 + ph.phi_rate * s;

    const Vector3 pelvis = p.start + dist * fwd + L * (1.0 - kBob * gain * std::cos(2.0 * phi)) * up;
    Eigen::Matrix3Xd P(3, js.size());
    auto leg = [&](int hip, int knee, int ankle, double side, double ph_leg) {
      const double thigh = gain * kSwing * std::sin(ph_leg);
      const double c = std::max(0.0, std::cos(ph_leg));
      const double flex = gain * (kKneeStance + kKneeFlex * c * c);
      const Vector3 hp = pelvis + side * kHipHalf * L * left;
      const Vector3 kn = hp + kThigh * L * (std::sin(thigh) * fwd - std::cos(thigh) * up);
      const Vector3 an = kn + kShank * L * (std::sin(thigh - flex) * fwd - std::cos(thigh - flex) * up);
      P.col(hip) = hp;
      P.col(knee) = kn;
      P.col(ankle) = an;
    };
    leg(lhip, lknee, lankle, 1.0, phi);
    leg(rhip, rknee, rankle, -1.0, phi + pi);
    P.col(chips) = pelvis;
    const Vector3 cs = pelvis + kTorso * L * up + kLean * L * gain * fwd;
    P.col(cshoulders) = cs;
    P.col(lshoulder) = cs + kShoulderHalf * L * left;
    P.col(rshoulder) = cs - kShoulderHalf * L * left;
    P.col(head) = cs + kNeck * L * up;

    if (p.noise_std > 0)
      for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] += p.noise_std * noise(rng);

    Frame& f = seq.frames[static_cast<std::size_t>(k)];
    f.index = k;
    f.time_s = tk;
    f.positions = std::move(P);
  }
  validate(seq);
  return seq;
}

}  // namespace pedgpdm
