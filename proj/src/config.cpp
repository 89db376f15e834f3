#include "pedgpdm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace pedgpdm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find_first_of(",;", pos);
    const auto item = trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (!item.empty()) out.push_back(item);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, std::string_view v) {
  T x{};
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("config: '{}' is not a valid number for {}", s, key));
  return x;
}

bool parse_bool(const std::string& key, std::string_view v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(fmt::format("config: '{}' is not a boolean for {}", s, key));
}

std::vector<double> parse_doubles(const std::string& key, std::string_view v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<double>(key, item));
  return out;
}

template <std::size_t N>
std::array<double, N> parse_fixed(const std::string& key, std::string_view v) {
  const auto d = parse_doubles(key, v);
  std::array<double, N> out{};
  if (d.size() == 1) {
    out.fill(d[0]);
  } else if (d.size() == N) {
    std::copy(d.begin(), d.end(), out.begin());
  } else {
    throw ConfigError(fmt::format("config: {} needs 1 or {} values, got {}", key, N, d.size()));
  }
  return out;
}

std::string join(const auto& values) { return fmt::format("{}", fmt::join(values, ";")); }

struct Key {
  std::string section, name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Single table driving parsing and serialization.
const std::vector<Key>& keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> v;
    auto add = [&](std::string s, std::string n, auto set, auto get) {
      v.push_back({std::move(s), std::move(n), set, get});
    };
    using C = RunConfig;
    using S = const std::string&;
    add("data", "joints", [](C& c, S x) { c.joints = split_list(x); }, [](const C& c) { return join(c.joints); });
    add("data", "ref_joint", [](C& c, S x) { c.ref_joint = trim(x); }, [](const C& c) { return c.ref_joint; });

    add("model", "q", [](C& c, S x) { c.q = parse_number<int>("model.q", x); },
        [](const C& c) { return std::to_string(c.q); });
    add("model", "kappa",
        [](C& c, S x) {
          if (trim(x) == "auto")
            c.kappa.reset();
          else
            c.kappa = parse_number<double>("model.kappa", x);
        },
        [](const C& c) { return c.kappa ? fmt::format("{}", *c.kappa) : std::string("auto"); });
    add("model", "max_iters", [](C& c, S x) { c.max_iters = parse_number<int>("model.max_iters", x); },
        [](const C& c) { return std::to_string(c.max_iters); });
    add("model", "learn_hyperparameters",
        [](C& c, S x) { c.learn_hyperparameters = parse_bool("model.learn_hyperparameters", x); },
        [](const C& c) { return std::string(c.learn_hyperparameters ? "true" : "false"); });
    add("model", "stride", [](C& c, S x) { c.stride = parse_number<int>("model.stride", x); },
        [](const C& c) { return std::to_string(c.stride); });

    add("recognition", "self_transition",
        [](C& c, S x) { c.stay = parse_fixed<kNumActivities>("recognition.self_transition", x); },
        [](const C& c) { return join(c.stay); });
    add("recognition", "window_ms", [](C& c, S x) { c.window_ms = parse_number<double>("recognition.window_ms", x); },
        [](const C& c) { return fmt::format("{}", c.window_ms); });
    add("recognition", "orientation_epsilon",
        [](C& c, S x) { c.orientation_epsilon = parse_number<double>("recognition.orientation_epsilon", x); },
        [](const C& c) { return fmt::format("{}", c.orientation_epsilon); });
    add("recognition", "orientation_window",
        [](C& c, S x) { c.orientation_window = parse_number<int>("recognition.orientation_window", x); },
        [](const C& c) { return std::to_string(c.orientation_window); });
    add("recognition", "exclude_subject",
        [](C& c, S x) { c.exclude_subject = parse_bool("recognition.exclude_subject", x); },
        [](const C& c) { return std::string(c.exclude_subject ? "true" : "false"); });

    add("prediction", "horizon_steps",
        [](C& c, S x) { c.horizon_steps = parse_number<int>("prediction.horizon_steps", x); },
        [](const C& c) { return std::to_string(c.horizon_steps); });
    add("prediction", "refine_iters",
        [](C& c, S x) { c.refine_iters = parse_number<int>("prediction.refine_iters", x); },
        [](const C& c) { return std::to_string(c.refine_iters); });
    add("prediction", "intentions", [](C& c, S x) { c.intentions = parse_bool("prediction.intentions", x); },
        [](const C& c) { return std::string(c.intentions ? "true" : "false"); });
    add("prediction", "prerotate", [](C& c, S x) { c.prerotate = parse_bool("prediction.prerotate", x); },
        [](const C& c) { return std::string(c.prerotate ? "true" : "false"); });

    add("evaluation", "tte_s", [](C& c, S x) { c.tte_s = parse_doubles("evaluation.tte_s", x); },
        [](const C& c) { return join(c.tte_s); });
    add("evaluation", "horizon_s", [](C& c, S x) { c.horizon_s = parse_doubles("evaluation.horizon_s", x); },
        [](const C& c) { return join(c.horizon_s); });
    add("evaluation", "match_window_s",
        [](C& c, S x) { c.match_window_s = parse_number<double>("evaluation.match_window_s", x); },
        [](const C& c) { return fmt::format("{}", c.match_window_s); });

    add("synth", "leg_length", [](C& c, S x) { c.gait.leg_length = parse_number<double>("synth.leg_length", x); },
        [](const C& c) { return fmt::format("{}", c.gait.leg_length); });
    add("synth", "step_length", [](C& c, S x) { c.gait.step_length = parse_number<double>("synth.step_length", x); },
        [](const C& c) { return fmt::format("{}", c.gait.step_length); });
    add("synth", "step_period", [](C& c, S x) { c.gait.step_period = parse_number<double>("synth.step_period", x); },
        [](const C& c) { return fmt::format("{}", c.gait.step_period); });
    add("synth", "accel_steps", [](C& c, S x) { c.gait.accel_steps = parse_number<int>("synth.accel_steps", x); },
        [](const C& c) { return std::to_string(c.gait.accel_steps); });
    add("synth", "rate_hz", [](C& c, S x) { c.gait.rate_hz = parse_number<double>("synth.rate_hz", x); },
        [](const C& c) { return fmt::format("{}", c.gait.rate_hz); });
    add("synth", "noise_std", [](C& c, S x) { c.gait.noise_std = parse_number<double>("synth.noise_std", x); },
        [](const C& c) { return fmt::format("{}", c.gait.noise_std); });
    add("synth", "script_s", [](C& c, S x) { c.script_s = parse_fixed<5>("synth.script_s", x); },
        [](const C& c) { return join(c.script_s); });

    add("run", "seed", [](C& c, S x) { c.seed = parse_number<std::uint64_t>("run.seed", x); },
        [](const C& c) { return std::to_string(c.seed); });
    add("run", "threads", [](C& c, S x) { c.threads = parse_number<int>("run.threads", x); },
        [](const C& c) { return std::to_string(c.threads); });
    return v;
  }();
  return k;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

}  // namespace

void RunConfig::validate() const {
  require(!joints.empty(), "data.joints is empty");
  require(std::set<std::string>(joints.begin(), joints.end()).size() == joints.size(),
          "data.joints has duplicates");
  try {
    PoseGeometry::from(joint_set(), ref_joint);
  } catch (const DataError& e) {
    throw ConfigError(fmt::format("config: data.joints/ref_joint: {}", e.what()));
  }
  const int D = 6 * static_cast<int>(joints.size());
  require(q >= 1 && q < D, fmt::format("model.q must be in [1, {})", D));
  require(!kappa || *kappa > 0, "model.kappa must be positive or auto");
  require(max_iters >= 0, "model.max_iters must be >= 0");
  require(stride >= 1, "model.stride must be >= 1");
  try {
    tpm().validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("config: recognition.self_transition: {}", e.what()));
  }
  require(window_ms > 0, "recognition.window_ms must be positive");
  require(orientation_epsilon >= 0, "recognition.orientation_epsilon must be >= 0");
  require(orientation_window >= 1, "recognition.orientation_window must be >= 1");
  require(horizon_steps >= 0, "prediction.horizon_steps must be >= 0");
  require(refine_iters >= 0, "prediction.refine_iters must be >= 0");
  require(!tte_s.empty() && !horizon_s.empty(), "evaluation grids must not be empty");
  for (double h : horizon_s) require(h > 0, "evaluation.horizon_s values must be positive");
  require(match_window_s > 0, "evaluation.match_window_s must be positive");
  for (double d : script_s) require(d > 0, "synth.script_s values must be positive");
  try {
    gait.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("config: synth: {}", e.what()));
  }
  require(threads >= 1, "run.threads must be >= 1");
}

std::string RunConfig::serialize() const {
  std::string out, section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      section = k.section;
      out += fmt::format("[{}]\n", section);
    }
    out += fmt::format("{} = {}\n", k.name, k.get(*this));
  }
  return out;
}

void RunConfig::set(std::string_view key, const std::string& value) {
  const auto it = std::find_if(keys().begin(), keys().end(),
                               [&](const Key& k) { return k.section + "." + k.name == key; });
  if (it == keys().end()) throw ConfigError(fmt::format("config: unknown key {}", key));
  it->set(*this, value);
}

std::string RunConfig::fingerprint() const { return hex64(fnv1a64(serialize())); }

BuildOptions RunConfig::build_options() const {
  BuildOptions b;
  b.q = q;
  b.kappa = kappa;
  b.train.scg.max_iters = max_iters;
  b.train.learn_hyperparameters = learn_hyperparameters;
  b.threads = threads;
  b.stride = stride;
  return b;
}

StreamOptions RunConfig::stream_options() const {
  StreamOptions s;
  s.horizon_steps = horizon_steps;
  s.window_s = window_ms / 1000.0;
  s.orientation = {orientation_epsilon, orientation_window};
  s.predict.refine.max_iters = refine_iters;
  s.predict.intentions = intentions;
  s.prerotate = prerotate;
  return s;
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(fmt::format("{}: key '{}' outside a section", source, section));
    if (std::none_of(keys().begin(), keys().end(), [&](const Key& k) { return k.section == section; }))
      throw ConfigError(fmt::format("{}: unknown section [{}]", source, section));
    for (const auto& [name, value] : body) {
      const auto it = std::find_if(keys().begin(), keys().end(),
                                   [&](const Key& k) { return k.section == section && k.name == name; });
      if (it == keys().end()) throw ConfigError(fmt::format("{}: unknown key [{}] {}", source, section, name));
      it->set(c, value.data());
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

}  // namespace pedgpdm
