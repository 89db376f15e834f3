#pragma once

// Run configuration shared by every command. Read from an INI file, overridden by
// flags, validated once before any output is written.

#include "pedgpdm/evaluation.hpp"
#include "pedgpdm/synthetic_gait.hpp"

#include <filesystem>

namespace pedgpdm {

struct RunConfig {
  // [data]
  std::vector<std::string> joints = canonical_joints().names();
  std::string ref_joint = joint_names::kRightHip;

  // [model]
  int q = 3;
  std::optional<double> kappa;  // D/q when unset
  int max_iters = 100;
  bool learn_hyperparameters = true;
  int stride = 1;

  // [recognition]
  std::array<double, kNumActivities> stay{0.995, 0.995, 0.995, 0.995};
  double window_ms = 50.0;
  double orientation_epsilon = 1.0;
  int orientation_window = 5;
  bool exclude_subject = true;

  // [prediction]
  int horizon_steps = 120;
  int refine_iters = 50;
  bool intentions = true;
  bool prerotate = false;

  // [evaluation]
  std::vector<double> tte_s{1.0, 0.5, 0.0, -0.5, -1.0};
  std::vector<double> horizon_s{0.5, 1.0};
  double match_window_s = 0.5;

  // [synth]
  GaitParams gait{};
  std::array<double, 5> script_s{1.0, 0.6, 2.0, 0.45, 1.0};

  // [run]
  std::uint64_t seed = 1;
  int threads = 1;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  /// Sets one value by `section.key`, as it would be read from the file.
  void set(std::string_view key, const std::string& value);

  /// Canonical `key = value` text, one line per key in a fixed order.
  std::string serialize() const;
  /// Hash of serialize().
  std::string fingerprint() const;

  JointSet joint_set() const { return JointSet(joints); }
  Tpm tpm() const { return Tpm::cycle(stay); }
  BuildOptions build_options() const;
  StreamOptions stream_options() const;
  MedGrid med_grid() const { return {tte_s, horizon_s}; }
};

/// Defaults overlaid with the INI file. Unknown sections or keys are errors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& source = "<memory>");

}  // namespace pedgpdm
