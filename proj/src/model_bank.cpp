#include "pedgpdm/model_bank.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace pedgpdm {

using json = nlohmann::json;

ModelBank::ModelBank(std::vector<BGpdmModel> models, JointSet joints, std::string ref_joint, int stride)
    : models_(std::move(models)), joints_(std::move(joints)), ref_joint_(std::move(ref_joint)), stride_(stride) {
  if (stride_ < 1) throw ConfigError("bank index stride must be >= 1");
  geometry_ = PoseGeometry::from(joints_, ref_joint_);
  std::stable_sort(models_.begin(), models_.end(),
                   [](const BGpdmModel& a, const BGpdmModel& b) { return a.source_id < b.source_id; });
  for (std::size_t i = 1; i < models_.size(); ++i)
    if (models_[i].source_id == models_[i - 1].source_id)
      throw DataError(fmt::format("duplicate model id '{}'", models_[i].source_id));

  const int dim3 = 3 * joints_.size();
  for (Orientation o : kAllOrientations)
    for (Activity a : kAllActivities) index_[{o, a}];

  // entries in (model id, frame) order so the first maximum is the tie-break winner
  std::map<BucketKey, std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>> cols;
  for (std::size_t mi = 0; mi < models_.size(); ++mi) {
    const BGpdmModel& m = models_[mi];
    if (m.D() != 2 * dim3)
      throw DataError(fmt::format("model '{}' has feature dimension {}, bank expects {}", m.source_id, m.D(),
                                  2 * dim3));
    const Eigen::MatrixXd native = m.scaling().invert_rows(m.Y());
    auto& bucket = index_[{m.orientation, m.activity}];
    auto& c = cols[{m.orientation, m.activity}];
    for (int t = 0; t < m.T(); t += stride_) {
      const Eigen::VectorXd row = native.row(t).transpose();
      bucket.entries.push_back({static_cast<int>(mi), t});
      c.emplace_back(comparable_pose(row.head(dim3), geometry_).coords, row.tail(dim3));
    }
  }
  for (auto& [key, bucket] : index_) {
    const auto& c = cols[key];
    bucket.poses.resize(dim3, static_cast<Eigen::Index>(c.size()));
    bucket.disps.resize(dim3, static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      bucket.poses.col(static_cast<Eigen::Index>(i)) = c[i].first;
      bucket.disps.col(static_cast<Eigen::Index>(i)) = c[i].second;
    }
  }
}

const BankBucket& ModelBank::bucket(Orientation o, Activity a) const { return index_.at({o, a}); }

PreparedQuery ModelBank::prepare(const Observation& obs) const {
  if (obs.pose.size() != 3 * joints_.size() || obs.disp.size() != 3 * joints_.size())
    throw DataError("observation dimension does not match the bank joint set");
  return {comparable_pose(obs.pose, geometry_).coords, obs.disp, features_ == Features::PoseAndDisplacement};
}

SimilarityHit ModelBank::nearest(const PreparedQuery& q, Activity a, Orientation o) const {
  const BankBucket& b = bucket(o, a);
  if (b.entries.empty())
    throw DataError(fmt::format("empty bucket ({}, {})", to_string(o), to_string(a)));
  const Eigen::VectorXd sse_pose = (b.poses.colwise() - q.pose).colwise().squaredNorm().transpose();
  const Eigen::VectorXd sse_disp = (b.disps.colwise() - q.disp).colwise().squaredNorm().transpose();
  Eigen::ArrayXd score = 1.0 / (1.0 + sse_pose.array());
  if (q.use_disp) score += 1.0 / (1.0 + sse_disp.array());
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < score.size(); ++i)
    if (score(i) > score(best)) best = i;
  const auto& e = b.entries[static_cast<std::size_t>(best)];
  return {models_[static_cast<std::size_t>(e.model)].source_id, e.model, e.frame, score(best), sse_pose(best),
          sse_disp(best)};
}

SimilarityHit ModelBank::nearest_any_orientation(const PreparedQuery& q, Activity a) const {
  std::optional<SimilarityHit> best;
  for (Orientation o : kAllOrientations) {
    if (bucket(o, a).entries.empty()) continue;
    auto h = nearest(q, a, o);
    if (!best || h.score > best->score) best = std::move(h);
  }
  if (!best) throw DataError(fmt::format("no models for activity {}", to_string(a)));
  return *best;
}

ModelBank ModelBank::without_subject(const std::string& subject) const {
  std::vector<BGpdmModel> kept;
  for (const auto& m : models_)
    if (m.subject != subject) kept.push_back(m);
  return ModelBank(std::move(kept), joints_, ref_joint_, stride_);
}

Observation ModelBank::training_observation(int model, int frame) const {
  const BGpdmModel& m = models_.at(static_cast<std::size_t>(model));
  return Observation::from_feature(m.scaling().invert(m.Y().row(frame).transpose()));
}

BGpdmModel train_sequence(const MotionSequence& seq, const std::string& ref_joint, int q,
                          std::optional<double> kappa, const TrainOptions& opts) {
  if (seq.frames.size() < 3)
    throw DataError(fmt::format("sequence '{}' needs at least 3 frames (2 observations)", seq.id));
  if (!seq.orientation) throw DataError(fmt::format("sequence '{}': untagged orientation", seq.id));
  if (seq.segments.size() != 1)
    throw DataError(fmt::format("sequence '{}' is not single-activity", seq.id));
  const auto obs = observations(seq, ref_joint);
  const Eigen::MatrixXd Y = feature_matrix(obs);
  FeatureScaling sc = fit_scaling(Y);
  const Eigen::MatrixXd Ys = sc.apply_rows(Y);
  const double k = kappa.value_or(default_kappa(static_cast<int>(Y.cols()), q));
  BGpdmModel m = train(Ys, q, k, opts, std::move(sc));
  m.source_id = seq.id;
  m.subject = seq.subject;
  m.activity = seq.segments.front().activity;
  m.orientation = *seq.orientation;
  return m;
}

ModelBank build_bank(const CorpusSplit& split, const JointSet& joints, const std::string& ref_joint,
                     const BuildOptions& opts, BuildReport* report) {
  std::vector<const MotionSequence*> work;
  std::size_t excluded = 0;
  for (const auto& [key, seqs] : split.buckets)
    for (const auto& s : seqs) {
      if (opts.exclude && opts.exclude(s)) {
        ++excluded;
        continue;
      }
      if (!(s.joints == joints))
        throw DataError(fmt::format("sequence '{}' joint set differs from the bank joint set", s.id));
      work.push_back(&s);
    }

  std::vector<std::optional<BGpdmModel>> results(work.size());
  std::vector<std::string> errors(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        results[i] = train_sequence(*work[i], ref_joint, opts.q, opts.kappa, opts.train);
      } catch (const Error& e) {
        errors[i] = fmt::format("{}: {}", work[i]->id, e.what());
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(opts.threads, static_cast<int>(work.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<BGpdmModel> models;
  std::vector<std::string> failures;
  std::map<BucketKey, int> requested, trained;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const BucketKey key{*work[i]->orientation, work[i]->segments.front().activity};
    ++requested[key];
    if (results[i]) {
      ++trained[key];
      models.push_back(std::move(*results[i]));
    } else {
      failures.push_back(errors[i]);
    }
  }
  for (const auto& [key, n] : requested)
    if (trained[key] == 0)
      throw DataError(fmt::format("bucket ({}, {}) ended empty; first failure: {}", to_string(key.first),
                                  to_string(key.second), failures.empty() ? "?" : failures.front()));
  if (report) {
    report->failures = failures;
    report->excluded = excluded;
  }
  return ModelBank(std::move(models), joints, ref_joint, opts.stride);
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(fmt::format("missing model file '{}'", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_bank(const ModelBank& bank, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create bank directory '{}': {}", dir.string(), ec.message()));
  json list = json::array();
  for (std::size_t i = 0; i < bank.models().size(); ++i) {
    const BGpdmModel& m = bank.models()[i];
    const std::string file = fmt::format("model_{:05d}.json", i);
    const std::string text = model_to_json(m);
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", (dir / file).string()));
    out << text;
    list.push_back({{"file", file},
                    {"id", m.source_id},
                    {"subject", m.subject},
                    {"activity", std::string(to_string(m.activity))},
                    {"orientation", std::string(to_string(m.orientation))},
                    {"hash", "fnv1a64:" + hex64(fnv1a64(text))}});
  }
  json manifest;
  manifest["format"] = "pedgpdm-bank";
  manifest["version"] = kBankFormatVersion;
  manifest["reference_joint"] = bank.ref_joint();
  manifest["joints"] = bank.joints().names();
  manifest["stride"] = bank.stride();
  manifest["model_count"] = bank.models().size();
  manifest["models"] = std::move(list);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write manifest in '{}'", dir.string()));
  out << manifest.dump(2) << '\n';
}

ModelBank load_bank(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw DataError(fmt::format("bank not found: '{}' has no manifest.json", dir.string()));
  try {
    const json manifest = json::parse(read_file(manifest_path));
    if (manifest.at("format") != "pedgpdm-bank") throw DataError("manifest: not a bank manifest");
    if (manifest.at("version").get<int>() != kBankFormatVersion)
      throw DataError(fmt::format("manifest: unsupported bank format version {}", manifest.at("version").dump()));
    const auto& list = manifest.at("models");
    if (manifest.at("model_count").get<std::size_t>() != list.size())
      throw DataError(fmt::format("manifest: model_count {} disagrees with {} listed models",
                                  manifest.at("model_count").get<std::size_t>(), list.size()));
    std::vector<BGpdmModel> models;
    for (const auto& e : list) {
      const std::string file = e.at("file").get<std::string>();
      const auto path = dir / file;
      if (!std::filesystem::exists(path)) throw DataError(fmt::format("missing model file '{}'", file));
      const std::string text = read_file(path);
      const std::string hash = "fnv1a64:" + hex64(fnv1a64(text));
      if (hash != e.at("hash").get<std::string>())
        throw DataError(fmt::format("integrity error: hash mismatch for model file '{}'", file));
      BGpdmModel m = model_from_json(text, path.string());
      if (m.source_id != e.at("id").get<std::string>())
        throw DataError(fmt::format("model file '{}' id does not match manifest", file));
      models.push_back(std::move(m));
    }
    return ModelBank(std::move(models), JointSet(manifest.at("joints").get<std::vector<std::string>>()),
                     manifest.at("reference_joint").get<std::string>(), manifest.at("stride").get<int>());
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed bank manifest ({})", e.what()));
  }
}

}  // namespace pedgpdm
