#pragma once

// Small sequence builders shared by the unit tests.

#include "pedgpdm/mocap.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace fixture {

using namespace pedgpdm;

/// T frames at `rate`; positions(c, j) = f(t, j, c).
inline MotionSequence sequence(const JointSet& joints, int T, double rate,
                               const std::function<double(int, int, int)>& f, std::string id = "seq") {
  MotionSequence s;
  s.id = id;
  s.subject = "subj";
  s.rate_hz = rate;
  s.orientation = Orientation::LeftToRight;
  s.joints = joints;
  for (int t = 0; t < T; ++t) {
    Frame fr;
    fr.index = t;
    fr.time_s = t / rate;
    fr.positions.resize(3, joints.size());
    for (int j = 0; j < joints.size(); ++j)
      for (int c = 0; c < 3; ++c) fr.positions(c, j) = f(t, j, c);
    s.frames.push_back(std::move(fr));
  }
  return s;
}

inline MotionSequence random_sequence(const JointSet& joints, int T, unsigned seed, std::string id = "seq") {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  return sequence(joints, T, 120.0, [&](int, int, int) { return u(rng); }, std::move(id));
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("pedgpdm-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace fixture
