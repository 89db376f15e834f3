#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pedgpdm {

using Vector3 = Eigen::Vector3d;

// State order is fixed everywhere (TPM rows, confusion matrix, posteriors).
enum class Activity : int { Standing = 0, Starting = 1, Stopping = 2, Walking = 3 };
inline constexpr int kNumActivities = 4;
inline constexpr std::array<Activity, kNumActivities> kAllActivities{
    Activity::Standing, Activity::Starting, Activity::Stopping, Activity::Walking};

enum class Orientation : int { LeftToRight = 0, RightToLeft = 1 };
inline constexpr std::array<Orientation, 2> kAllOrientations{Orientation::LeftToRight,
                                                            Orientation::RightToLeft};

inline int index_of(Activity a) { return static_cast<int>(a); }
inline Activity activity_from_index(int i) { return static_cast<Activity>(i); }

std::string_view to_string(Activity a);
std::string_view to_string(Orientation o);
std::optional<Activity> parse_activity(std::string_view s);
std::optional<Orientation> parse_orientation(std::string_view s);

/// Next activity in the gait cycle Standing -> Starting -> Walking -> Stopping -> Standing.
Activity cycle_successor(Activity a);

// Error categories map onto CLI exit codes (config 2, data 3, numerical 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// 64-bit FNV-1a; used for content hashes and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace pedgpdm
