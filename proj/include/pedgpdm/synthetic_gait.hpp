#pragma once

// Closed-form skeleton gait with exact activity labels, for end-to-end tests.

#include "pedgpdm/mocap.hpp"

#include <cstdint>

namespace pedgpdm {

struct GaitParams {
  double leg_length = 900.0;   // mm, thigh + shank
  double step_length = 600.0;  // mm
  double step_period = 0.6;    // s
  int accel_steps = 2;         // steps to reach full speed after gait initiation
  double rate_hz = 120.0;
  Orientation orientation = Orientation::LeftToRight;
  std::uint64_t rng_seed = 1;
  double noise_std = 0.0;  // mm, isotropic, added after labelling
  Vector3 start{0.0, 0.0, 0.0};
  std::string id = "synthetic";
  std::string subject = "synthetic";

  void validate() const;
  double cruise_speed() const { return step_length / step_period; }  // mm/s
};

struct ScriptStep {
  Activity activity;
  double duration_s;
};

/// Frames 0..T-1 on the canonical 11-joint set with one segment per script step.
MotionSequence generate_gait(const GaitParams& params, const std::vector<ScriptStep>& script);

/// stand -> start -> walk -> stop -> stand with the given durations (s).
std::vector<ScriptStep> full_cycle_script(double stand_before, double starting, double walking, double stopping,
                                          double stand_after);

}  // namespace pedgpdm
