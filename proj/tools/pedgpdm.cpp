#include "pedgpdm/config.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <fstream>
#include <random>

using namespace pedgpdm;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSeqSuffix = ".seq.csv";
constexpr std::string_view kLabelSuffix = ".labels.csv";

struct Common {
  std::string config, bank, out, joints;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--bank", c.bank, "Model bank directory");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--joints", c.joints, "Joint subset, ';'-separated");
  cmd->add_option("--threads", c.threads, "Worker threads");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.joints.empty()) cfg.set("data.joints", c.joints);
  cfg.validate();
  return cfg;
}

std::string require_path(const std::string& p, std::string_view flag) {
  if (p.empty()) throw ConfigError(fmt::format("{} is required", flag));
  return p;
}

std::string stem_of(const fs::path& seq_file) {
  std::string name = seq_file.filename().string();
  if (name.ends_with(kSeqSuffix)) name.resize(name.size() - kSeqSuffix.size());
  return name;
}

fs::path labels_for(const fs::path& seq_file) {
  return seq_file.parent_path() / (stem_of(seq_file) + std::string(kLabelSuffix));
}

MotionSequence load_labelled(const fs::path& seq_file, const RunConfig& cfg, bool labels_required) {
  MotionSequence s = parse_sequence(seq_file);
  const fs::path lab = labels_for(seq_file);
  if (fs::exists(lab)) {
    std::vector<std::string> warnings;
    auto segs = parse_labels(lab, &warnings);
    for (const auto& w : warnings) fmt::print(stderr, "warning: {}\n", w);
    attach_labels(s, std::move(segs));
  } else if (labels_required) {
    throw DataError(fmt::format("labels not found for '{}' (expected '{}')", seq_file.string(), lab.string()));
  }
  return select_joints(s, cfg.joint_set());
}

std::vector<fs::path> sequence_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(fmt::format("directory not found: '{}'", dir.string()));
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename().string().ends_with(kSeqSuffix)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError(fmt::format("no '*{}' files in '{}'", kSeqSuffix, dir.string()));
  return out;
}

ModelBank open_bank(const std::string& dir) {
  if (dir.empty() || !fs::exists(fs::path(dir) / "manifest.json"))
    throw DataError(fmt::format("bank not found: '{}'", dir));
  return load_bank(dir);
}

ModelBank bank_for(const ModelBank& bank, const MotionSequence& seq, const RunConfig& cfg) {
  if (!cfg.exclude_subject) return bank;
  const bool present = std::any_of(bank.models().begin(), bank.models().end(),
                                   [&](const BGpdmModel& m) { return m.subject == seq.subject; });
  if (!present) return bank;
  fmt::print(stderr, "excluding subject '{}' from the bank\n", seq.subject);
  return bank.without_subject(seq.subject);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", p.string()));
  return out;
}

void write_run_config(const RunConfig& cfg, const fs::path& dir) {
  auto out = open_out(dir / "run.ini");
  fmt::print(out, "; fingerprint {}\n{}", cfg.fingerprint(), cfg.serialize());
}

void write_transitions(const StreamResult& r, double rate_hz, const fs::path& p, const std::string& fp) {
  auto out = open_out(p);
  fmt::print(out, "# config={}\nfrom,to,detect_frame,time_s\n", fp);
  for (const auto& t : r.transitions)
    fmt::print(out, "{},{},{},{}\n", to_string(t.from), to_string(t.to), t.detect_frame, t.detect_frame / rate_hz);
}

int cmd_train(const Common& c, const std::string& corpus, const std::vector<std::string>& exclude) {
  const RunConfig cfg = resolve(c);
  const fs::path bank_dir = require_path(c.bank.empty() ? c.out : c.bank, "--bank");
  std::vector<MotionSequence> crops;
  for (const auto& f : sequence_files(require_path(corpus, "--corpus"))) {
    const auto s = load_labelled(f, cfg, true);
    if (std::find(exclude.begin(), exclude.end(), s.subject) != exclude.end()) continue;
    for (auto& crop : crop_by_activity(s)) crops.push_back(std::move(crop));
  }
  const CorpusSplit split = split_corpus(std::move(crops));
  fmt::print("{:<14}{:<10}{:>10}{:>12}\n", "orientation", "activity", "sequences", "frames");
  for (const auto& [key, seqs] : split.buckets) {
    std::size_t frames = 0;
    for (const auto& s : seqs) frames += s.frames.size();
    fmt::print("{:<14}{:<10}{:>10}{:>12}\n", to_string(key.first), to_string(key.second), seqs.size(), frames);
  }
  fmt::print("total: {} sequences, {} frames, {} observations\n", split.num_sequences(), split.num_frames(),
             split.num_observations());

  BuildReport report;
  const ModelBank bank = build_bank(split, cfg.joint_set(), cfg.ref_joint, cfg.build_options(), &report);
  for (const auto& f : report.failures) fmt::print(stderr, "warning: training failed for {}\n", f);
  save_bank(bank, bank_dir);
  write_run_config(cfg, bank_dir);
  fmt::print("bank: {} models in '{}' (config {})\n", bank.models().size(), bank_dir.string(), cfg.fingerprint());
  return 0;
}

int cmd_online(const Common& c, const std::string& input, bool with_predictions) {
  const RunConfig cfg = resolve(c);
  const fs::path out_dir = require_path(c.out, "--out");
  const ModelBank full = open_bank(c.bank);
  const MotionSequence seq = load_labelled(require_path(input, "--input"), cfg, false);
  const ModelBank bank = bank_for(full, seq, cfg);

  StreamOptions opts = cfg.stream_options();
  if (!with_predictions) opts.predict_at = [](long) { return false; };
  const StreamResult r = predict_stream(seq, bank, cfg.tpm(), opts);

  fs::create_directories(out_dir);
  const std::string stem = stem_of(input), fp = cfg.fingerprint();
  {
    auto out = open_out(out_dir / (stem + ".recognition.csv"));
    write_recognition(r, out, fp);
  }
  write_transitions(r, seq.rate_hz, out_dir / (stem + ".transitions.csv"), fp);
  if (with_predictions) {
    auto out = open_out(out_dir / (stem + ".predictions.csv"));
    write_predictions(r, out, fp);
  }
  for (const auto& t : r.transitions)
    fmt::print("{} -> {} at frame {} ({:.3f} s)\n", to_string(t.from), to_string(t.to), t.detect_frame,
               t.detect_frame / seq.rate_hz);
  fmt::print("{} frames, {} transitions\n", r.frames.size(), r.transitions.size());
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& gt_dir, const std::string& pred_dir) {
  const RunConfig cfg = resolve(c);
  const fs::path out_dir = require_path(c.out, "--out");
  const fs::path preds = require_path(pred_dir, "--predictions");
  Evaluator ev(cfg.med_grid(), cfg.match_window_s);
  for (const auto& f : sequence_files(require_path(gt_dir, "--gt"))) {
    const auto gt = load_labelled(f, cfg, true);
    const std::string stem = stem_of(f);
    const fs::path rec = preds / (stem + ".recognition.csv"), pr = preds / (stem + ".predictions.csv");
    if (!fs::exists(rec)) throw DataError(fmt::format("no recognition output for '{}' in '{}'", stem, preds.string()));
    std::string fp;
    const auto r = read_stream(rec, fs::exists(pr) ? pr : fs::path(), gt.rate_hz, cfg.window_ms / 1000.0, &fp);
    if (fp != cfg.fingerprint())
      fmt::print(stderr, "warning: '{}' was produced with config {} (evaluating with {})\n", rec.string(), fp,
                 cfg.fingerprint());
    ev.add(gt, r);
  }
  const EvalReport rep = ev.finish(cfg.fingerprint());
  emit_report(rep, out_dir);
  const Prf m = prf(rep.confusion);
  fmt::print("frames: {}, accuracy: {:.2f}%\n", rep.confusion.total(), 100 * m.accuracy);
  for (Activity a : kAllActivities) {
    const auto& k = m.per_class[static_cast<std::size_t>(index_of(a))];
    fmt::print("  {:<9} precision {:6.2f}%  recall {:6.2f}%  F1 {:6.2f}%\n", to_string(a), 100 * k.precision,
               100 * k.recall, 100 * k.f1);
  }
  fmt::print("report written to '{}'\n", out_dir.string());
  return 0;
}

int cmd_synth(const Common& c, int count, bool vary) {
  const RunConfig cfg = resolve(c);
  const fs::path out_dir = require_path(c.out, "--out");
  if (count < 1) throw ConfigError("--count must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const auto& d = cfg.script_s;
  const auto script = full_cycle_script(d[0], d[1], d[2], d[3], d[4]);
  fs::create_directories(out_dir);
  for (int k = 0; k < count; ++k) {
    GaitParams p = cfg.gait;
    p.rng_seed = cfg.seed + static_cast<std::uint64_t>(k);
    p.orientation = k % 2 ? Orientation::RightToLeft : Orientation::LeftToRight;
    p.id = fmt::format("synth{}-{:03d}", cfg.seed, k);
    p.subject = p.id;
    if (vary) {
      const double s = 1.0 + jitter(rng);
      p.leg_length *= s;
      p.step_length *= s * (1.0 + jitter(rng));
      p.step_period *= 1.0 + jitter(rng);
    }
    const auto seq = generate_gait(p, script);
    write_sequence(seq, out_dir / (p.id + std::string(kSeqSuffix)));
    write_labels(seq.segments, out_dir / (p.id + std::string(kLabelSuffix)));
  }
  write_run_config(cfg, out_dir);
  fmt::print("{} sequences written to '{}'\n", count, out_dir.string());
  return 0;
}

int cmd_tune(const Common& c, const std::string& val_dir) {
  const RunConfig cfg = resolve(c);
  const ModelBank full = open_bank(c.bank);
  std::vector<TuningClip> clips;
  for (const auto& f : sequence_files(require_path(val_dir, "--validation"))) {
    const auto s = load_labelled(f, cfg, true);
    clips.push_back(tuning_clip(s, bank_for(full, s, cfg), cfg.stream_options().orientation));
  }
  const auto t = tune_tpm(clips);
  fmt::print("frame accuracy {:.4f} (configured TPM {:.4f})\n", t.accuracy, frame_accuracy(clips, cfg.tpm()));
  fmt::print("[recognition]\nself_transition = {};{};{};{}\n", t.stay[0], t.stay[1], t.stay[2], t.stay[3]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian path, pose and intention prediction with B-GPDM models"};
  app.require_subcommand(1);
  Common common;
  std::string corpus, input, gt, preds, validation;
  std::vector<std::string> exclude;
  int count = 10;
  bool vary = false;

  auto* train = app.add_subcommand("train", "Train a model bank from labelled sequences");
  add_common(train, common);
  train->add_option("--corpus", corpus, "Directory of *.seq.csv + *.labels.csv files")->required();
  train->add_option("--exclude-subject", exclude, "Leave out sequences of this subject");

  auto* recognize = app.add_subcommand("recognize", "Per-frame activity recognition");
  add_common(recognize, common);
  recognize->add_option("--input", input, "Sequence file")->required()->check(CLI::ExistingFile);

  auto* predict = app.add_subcommand("predict", "Recognition plus pose/path/intention prediction");
  add_common(predict, common);
  predict->add_option("--input", input, "Sequence file")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Metrics from recognition/prediction files");
  add_common(evaluate, common);
  evaluate->add_option("--gt", gt, "Directory of labelled ground-truth sequences")->required();
  evaluate->add_option("--predictions", preds, "Directory with recognize/predict outputs")->required();

  auto* synth = app.add_subcommand("synth", "Write labelled synthetic gait sequences");
  add_common(synth, common);
  synth->add_option("--count", count, "Number of sequences");
  synth->add_flag("--vary", vary, "Jitter body size, step length and period per sequence");

  auto* tune = app.add_subcommand("tune", "Fit per-state self-transitions on validation sequences");
  add_common(tune, common);
  tune->add_option("--validation", validation, "Directory of labelled validation sequences")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(common, corpus, exclude);
    if (*recognize) return cmd_online(common, input, false);
    if (*predict) return cmd_online(common, input, true);
    if (*evaluate) return cmd_evaluate(common, gt, preds);
    if (*synth) return cmd_synth(common, count, vary);
    if (*tune) return cmd_tune(common, validation);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return 4;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 3;
  }
  return 2;
}
