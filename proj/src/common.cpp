#include "pedgpdm/common.hpp"

#include <cstdio>

namespace pedgpdm {

std::string_view to_string(Activity a) {
  switch (a) {
    case Activity::Standing: return "standing";
    case Activity::Starting: return "starting";
    case Activity::Stopping: return "stopping";
    case Activity::Walking: return "walking";
  }
  return "?";
}

std::string_view to_string(Orientation o) {
  return o == Orientation::LeftToRight ? "ltr" : "rtl";
}

std::optional<Activity> parse_activity(std::string_view s) {
  for (Activity a : kAllActivities)
    if (s == to_string(a)) return a;
  return std::nullopt;
}

std::optional<Orientation> parse_orientation(std::string_view s) {
  if (s == "ltr") return Orientation::LeftToRight;
  if (s == "rtl") return Orientation::RightToLeft;
  return std::nullopt;
}

Activity cycle_successor(Activity a) {
  switch (a) {
    case Activity::Standing: return Activity::Starting;
    case Activity::Starting: return Activity::Walking;
    case Activity::Walking: return Activity::Stopping;
    case Activity::Stopping: return Activity::Standing;
  }
  return a;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace pedgpdm
