#include "pedgpdm/mocap.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace pedgpdm {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

// Iterates lines with 1-based numbering.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  int line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    ++line_no;
    fn(line_no, trim(line));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
}

}  // namespace

JointSet::JointSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw DataError("empty joint name");
    if (!seen.insert(n).second) throw DataError(fmt::format("duplicate joint name '{}'", n));
  }
}

std::optional<int> JointSet::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

int JointSet::require(std::string_view name) const {
  auto i = find(name);
  if (!i) throw DataError(fmt::format("joint '{}' not present in joint set", name));
  return *i;
}

const JointSet& canonical_joints() {
  using namespace joint_names;
  static const JointSet set({kHead, kCenterShoulders, kLeftShoulder, kRightShoulder, kCenterHips,
                             kLeftHip, kRightHip, kLeftKnee, kRightKnee, kLeftAnkle, kRightAnkle});
  return set;
}

void validate(const MotionSequence& seq) {
  if (!(seq.rate_hz > 0) || !std::isfinite(seq.rate_hz))
    throw DataError(fmt::format("sequence '{}': rate_hz must be positive", seq.id));
  const int J = seq.joints.size();
  const double period = 1.0 / seq.rate_hz;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    if (f.positions.cols() != J)
      throw DataError(fmt::format("sequence '{}': frame {} has {} joints, expected {}", seq.id,
                                  f.index, f.positions.cols(), J));
    if (!f.positions.allFinite())
      throw DataError(fmt::format("sequence '{}': non-finite coordinate in frame {}", seq.id, f.index));
    if (i > 0) {
      const Frame& p = seq.frames[i - 1];
      if (f.index <= p.index || f.time_s <= p.time_s)
        throw DataError(fmt::format("sequence '{}': non-monotone frame {}", seq.id, f.index));
      const double expected = static_cast<double>(f.index - p.index) * period;
      if (std::abs((f.time_s - p.time_s) - expected) > 0.01 * expected)
        throw DataError(fmt::format("sequence '{}': frame {} time inconsistent with rate {}", seq.id,
                                    f.index, seq.rate_hz));
    }
  }
  long last_end = std::numeric_limits<long>::min();
  for (const auto& s : seq.segments) {
    if (s.start_frame > s.end_frame)
      throw DataError(fmt::format("sequence '{}': segment start after end", seq.id));
    if (s.start_frame <= last_end)
      throw DataError(fmt::format("sequence '{}': overlapping segments", seq.id));
    last_end = s.end_frame;
  }
}

MotionSequence parse_sequence_text(std::string_view text, const std::string& source) {
  MotionSequence seq;
  bool have_header = false;
  bool have_rate = false;
  for_each_line(text, [&](int line_no, std::string_view line) {
    auto fail = [&](const std::string& what) {
      throw DataError(fmt::format("{}: {} at line {}", source, what, line_no));
    };
    if (line.empty()) return;
    if (!have_header) {
      if (line.front() != '#') fail("malformed header");
      line.remove_prefix(1);
      std::istringstream ss{std::string(line)};
      std::string tok;
      bool have_joints = false;
      while (ss >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) fail(fmt::format("malformed header field '{}'", tok));
        std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
        if (key == "id") {
          seq.id = value;
        } else if (key == "subject") {
          seq.subject = value;
        } else if (key == "rate_hz") {
          if (!parse_number(value, seq.rate_hz) || !(seq.rate_hz > 0)) fail("malformed header rate_hz");
          have_rate = true;
        } else if (key == "orientation") {
          auto o = parse_orientation(value);
          if (!o) fail(fmt::format("malformed header orientation '{}'", value));
          seq.orientation = o;
        } else if (key == "joints") {
          std::vector<std::string> names;
          for (auto n : split(value, ';'))
            if (!n.empty()) names.emplace_back(n);
          try {
            seq.joints = JointSet(std::move(names));
          } catch (const DataError& e) {
            fail(fmt::format("malformed header ({})", e.what()));
          }
          have_joints = true;
        } else {
          fail(fmt::format("malformed header: unknown key '{}'", key));
        }
      }
      if (!have_rate || !have_joints || seq.joints.size() == 0) fail("malformed header");
      have_header = true;
      return;
    }
    if (line.front() == '#') return;
    auto fields = split(line, ',');
    const int J = seq.joints.size();
    if (fields.size() < 2 || (fields.size() - 2) % 3 != 0 ||
        static_cast<int>((fields.size() - 2) / 3) != J)
      fail(fmt::format("joint-count mismatch (expected {} joints)", J));
    Frame f;
    if (!parse_number(fields[0], f.index)) fail("malformed frame index");
    if (!parse_number(fields[1], f.time_s)) fail("malformed time");
    f.positions.resize(3, J);
    for (int j = 0; j < J; ++j)
      for (int c = 0; c < 3; ++c) {
        double v;
        if (!parse_number(fields[2 + 3 * j + c], v)) fail("malformed coordinate");
        if (!std::isfinite(v)) fail("non-finite coordinate");
        f.positions(c, j) = v;
      }
    if (!seq.frames.empty()) {
      const Frame& p = seq.frames.back();
      if (f.index <= p.index || f.time_s <= p.time_s) fail("non-monotone timestamps");
      const double expected = static_cast<double>(f.index - p.index) / seq.rate_hz;
      if (std::abs((f.time_s - p.time_s) - expected) > 0.01 * expected)
        fail("timestamp inconsistent with rate_hz");
    }
    seq.frames.push_back(std::move(f));
  });
  if (!have_header) throw DataError(fmt::format("{}: malformed header at line 1", source));
  validate(seq);
  return seq;
}

MotionSequence parse_sequence(const std::filesystem::path& path) {
  return parse_sequence_text(read_file(path), path.string());
}

std::string format_sequence(const MotionSequence& seq) {
  std::string out = fmt::format("# id={} subject={} rate_hz={}", seq.id, seq.subject, seq.rate_hz);
  if (seq.orientation) out += fmt::format(" orientation={}", to_string(*seq.orientation));
  out += " joints=";
  for (int j = 0; j < seq.joints.size(); ++j) {
    if (j) out += ';';
    out += seq.joints.names()[j];
  }
  out += '\n';
  for (const Frame& f : seq.frames) {
    out += fmt::format("{},{}", f.index, f.time_s);
    for (int j = 0; j < f.positions.cols(); ++j)
      out += fmt::format(",{},{},{}", f.positions(0, j), f.positions(1, j), f.positions(2, j));
    out += '\n';
  }
  return out;
}

void write_sequence(const MotionSequence& seq, const std::filesystem::path& path) {
  write_file(path, format_sequence(seq));
}

std::vector<Segment> parse_labels_text(std::string_view text, std::vector<std::string>* warnings,
                                       const std::string& source) {
  std::vector<Segment> segs;
  for_each_line(text, [&](int line_no, std::string_view line) {
    auto fail = [&](const std::string& what) {
      throw DataError(fmt::format("{}: {} at line {}", source, what, line_no));
    };
    if (line.empty() || line.front() == '#') return;
    auto fields = split(line, ',');
    if (fields.size() != 3) fail("malformed label row");
    if (trim(fields[0]) == "activity") return;  // optional header row
    auto act = parse_activity(trim(fields[0]));
    if (!act) fail(fmt::format("unknown activity '{}'", trim(fields[0])));
    Segment s{*act, 0, 0};
    if (!parse_number(fields[1], s.start_frame) || !parse_number(fields[2], s.end_frame))
      fail("malformed frame range");
    if (s.start_frame > s.end_frame) fail("segment start after end");
    if (!segs.empty()) {
      const Segment& p = segs.back();
      if (s.start_frame < p.start_frame) fail("segments out of order");
      if (s.start_frame <= p.end_frame) fail("overlapping segments");
      if (warnings && s.activity != cycle_successor(p.activity))
        warnings->push_back(fmt::format("{}: cycle-order violation {} -> {} at line {}", source,
                                        to_string(p.activity), to_string(s.activity), line_no));
    }
    segs.push_back(s);
  });
  return segs;
}

std::vector<Segment> parse_labels(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  return parse_labels_text(read_file(path), warnings, path.string());
}

std::string format_labels(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& s : segments)
    out += fmt::format("{},{},{}\n", to_string(s.activity), s.start_frame, s.end_frame);
  return out;
}

void write_labels(const std::vector<Segment>& segments, const std::filesystem::path& path) {
  write_file(path, format_labels(segments));
}

void attach_labels(MotionSequence& seq, std::vector<Segment> segments) {
  if (!segments.empty()) {
    if (seq.frames.empty()) throw DataError(fmt::format("sequence '{}' has no frames", seq.id));
    const long first = seq.frames.front().index, last = seq.frames.back().index;
    for (const auto& s : segments)
      if (s.start_frame < first || s.end_frame > last)
        throw DataError(fmt::format("sequence '{}': label range {}..{} outside frames {}..{}", seq.id,
                                    s.start_frame, s.end_frame, first, last));
  }
  seq.segments = std::move(segments);
  validate(seq);
}

MotionSequence select_joints(const MotionSequence& seq, const JointSet& subset) {
  std::vector<int> cols;
  cols.reserve(subset.size());
  for (const auto& name : subset.names()) {
    auto i = seq.joints.find(name);
    if (!i) throw DataError(fmt::format("sequence '{}': requested joint '{}' absent", seq.id, name));
    cols.push_back(*i);
  }
  MotionSequence out = seq;
  out.joints = subset;
  for (auto& f : out.frames) {
    Eigen::Matrix3Xd p(3, subset.size());
    for (int k = 0; k < subset.size(); ++k) p.col(k) = f.positions.col(cols[k]);
    f.positions = std::move(p);
  }
  return out;
}

std::vector<MotionSequence> crop_by_activity(const MotionSequence& seq) {
  if (seq.segments.empty())
    throw DataError(fmt::format("sequence '{}' has no activity segments", seq.id));
  std::vector<MotionSequence> out;
  for (std::size_t k = 0; k < seq.segments.size(); ++k) {
    const Segment& s = seq.segments[k];
    MotionSequence sub;
    sub.id = fmt::format("{}#{}-{}", seq.id, k, to_string(s.activity));
    sub.subject = seq.subject;
    sub.rate_hz = seq.rate_hz;
    sub.orientation = seq.orientation;
    sub.joints = seq.joints;
    for (const Frame& f : seq.frames)
      if (f.index >= s.start_frame && f.index <= s.end_frame) sub.frames.push_back(f);
    if (sub.frames.empty()) continue;
    sub.segments.push_back({s.activity, sub.frames.front().index, sub.frames.back().index});
    out.push_back(std::move(sub));
  }
  return out;
}

std::size_t CorpusSplit::num_sequences() const {
  std::size_t n = 0;
  for (const auto& [key, seqs] : buckets) n += seqs.size();
  return n;
}

std::size_t CorpusSplit::num_frames() const {
  std::size_t n = 0;
  for (const auto& [key, seqs] : buckets)
    for (const auto& s : seqs) n += s.frames.size();
  return n;
}

std::size_t CorpusSplit::num_observations() const {
  std::size_t n = 0;
  for (const auto& [key, seqs] : buckets)
    for (const auto& s : seqs) n += s.frames.empty() ? 0 : s.frames.size() - 1;
  return n;
}

CorpusSplit split_corpus(std::vector<MotionSequence> seqs) {
  CorpusSplit split;
  for (Orientation o : kAllOrientations)
    for (Activity a : kAllActivities) split.buckets[{o, a}];
  for (auto& s : seqs) {
    if (!s.orientation)
      throw DataError(fmt::format("sequence '{}': untagged orientation", s.id));
    std::set<Activity> acts;
    for (const auto& seg : s.segments) acts.insert(seg.activity);
    if (acts.size() != 1)
      throw DataError(fmt::format("sequence '{}' is not single-activity; crop it first", s.id));
    const BucketKey key{*s.orientation, *acts.begin()};
    split.buckets[key].push_back(std::move(s));
  }
  return split;
}

}  // namespace pedgpdm
