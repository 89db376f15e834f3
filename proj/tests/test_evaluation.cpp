#include "fixtures.hpp"
#include "pedgpdm/evaluation.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

using namespace pedgpdm;
using A = Activity;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10 Hz clip with a right hip moving at 100 mm/frame along x and two gait cycles.
MotionSequence cycle_fixture(Vector3 shift = Vector3::Zero()) {
  auto s = fixture::sequence(JointSet({"rightHip"}), 60, 10.0, [&](int t, int, int c) {
    return shift(c) + (c == 0 ? 100.0 * t : c == 2 ? 900.0 : 0.0);
  });
  s.segments = {{A::Standing, 0, 9},   {A::Starting, 10, 14}, {A::Walking, 15, 24}, {A::Stopping, 25, 29},
                {A::Standing, 30, 39}, {A::Starting, 40, 44}, {A::Walking, 45, 59}};
  return s;
}

// Stream with the given labels and, at selected frames, a path equal to the truth plus an offset.
StreamResult stream_of(const MotionSequence& gt, const std::vector<Activity>& labels,
                       const std::map<long, Vector3>& offsets, int horizon) {
  StreamResult r;
  const int rh = gt.joints.require(joint_names::kRightHip);
  for (std::size_t i = 1; i < gt.frames.size(); ++i) {
    StreamFrame f;
    f.frame = static_cast<long>(i);
    f.label = labels[i];
    if (auto it = offsets.find(f.frame); it != offsets.end()) {
      for (int k = 1; k <= horizon && i + static_cast<std::size_t>(k) < gt.frames.size(); ++k)
        f.prediction.path.push_back(gt.frames[i + static_cast<std::size_t>(k)].positions.col(rh) + it->second);
    }
    r.frames.push_back(std::move(f));
  }
  r.transitions = detect_transitions(r.labels(), gt.rate_hz);
  for (auto& t : r.transitions) t.detect_frame = r.frames[static_cast<std::size_t>(t.detect_frame)].frame;
  return r;
}

ConfusionMatrix reference_counts() {
  ConfusionMatrix c;
  c.counts << 72011, 1396, 174, 680,  //
      1451, 13313, 13, 6872,          //
      126, 0, 1951, 1720,             //
      262, 494, 1508, 200009;
  return c;
}

}  // namespace

TEST_CASE("confusion") {
  const std::vector<A> truth{A::Standing, A::Starting, A::Walking, A::Walking, A::Stopping};
  SUBCASE("perfect") {
    const auto c = confusion(truth, truth);
    CHECK(c.counts.diagonal().sum() == 5);
    CHECK(c.total() == 5);
    CHECK(c.accuracy() == 1.0);
    const auto m = prf(c);
    for (const auto& k : m.per_class) {
      CHECK(k.precision == 1.0);
      CHECK(k.recall == 1.0);
      CHECK(k.f1 == 1.0);
    }
  }
  SUBCASE("all walking on standing") {
    const std::vector<A> gt(7, A::Standing), pred(7, A::Walking);
    const auto c = confusion(pred, gt);
    CHECK(c.counts(0, 3) == 7);
    CHECK(c.counts.sum() == 7);
    CHECK(c.accuracy() == 0.0);
  }
  SUBCASE("empty class is flagged") {
    const std::vector<A> gt(4, A::Walking);
    const auto m = prf(confusion(gt, gt));
    CHECK(m.per_class[0].recall == 0.0);
    CHECK(m.per_class[0].recall_undefined);
    CHECK(m.per_class[0].precision_undefined);
    CHECK(m.per_class[0].f1 == 0.0);
    CHECK_FALSE(m.per_class[3].recall_undefined);
  }
  SUBCASE("length mismatch") { CHECK_THROWS_AS(confusion(truth, std::span(truth).first(3)), DataError); }
  SUBCASE("accumulation") {
    auto c = confusion(truth, truth);
    c += confusion(truth, truth);
    CHECK(c.total() == 10);
  }
}

TEST_CASE("rates from reference confusion counts") {
  const auto c = reference_counts();
  const auto m = prf(c);
  CHECK(std::abs(100 * m.accuracy - 95.13) < 0.05);
  const double precision[] = {97.51, 87.57, 53.51, 95.57};
  const double recall[] = {96.97, 61.49, 51.38, 98.88};
  const double f1[] = {97.24, 72.25, 52.42, 97.20};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(100 * m.per_class[i].precision - precision[i]) < 0.05);
    CHECK(std::abs(100 * m.per_class[i].recall - recall[i]) < 0.05);
    CHECK(std::abs(100 * m.per_class[i].f1 - f1[i]) < 0.05);
  }
}

TEST_CASE("gait events") {
  const auto s = cycle_fixture();
  CHECK(gait_events(s.segments, EventKind::Starting) == std::vector<long>{10, 40});
  CHECK(gait_events(s.segments, EventKind::Stopping) == std::vector<long>{30});
  CHECK(frame_labels(s)[12] == A::Starting);
  CHECK(frame_labels(s).size() == 60);
}

TEST_CASE("MED") {
  const auto gt = cycle_fixture();
  const auto labels = frame_labels(gt);
  MedGrid grid;
  grid.tte_s = {0.0};
  grid.horizon_s = {0.2};

  SUBCASE("exact predictions") {
    std::map<long, Vector3> off;
    for (long f = 1; f < 60; ++f) off[f] = Vector3::Zero();
    const auto r = stream_of(gt, labels, off, 10);
    std::size_t skipped = 0;
    auto s = med_samples(lookup(r), gt, EventKind::Starting, MedGrid{}, &skipped);
    const auto st = med_samples(lookup(r), gt, EventKind::Stopping, MedGrid{}, &skipped);
    s.insert(s.end(), st.begin(), st.end());
    CHECK_FALSE(s.empty());
    const auto t = aggregate_med(s, MedGrid{}, skipped);
    for (int k = 0; k < 2; ++k)
      for (const auto& row : t.combined[static_cast<std::size_t>(k)])
        for (const auto& c : row) {
          CHECK(c.mean == 0.0);
          CHECK(c.std == 0.0);
        }
  }
  SUBCASE("constant lateral offset") {
    std::map<long, Vector3> off;
    for (long f = 1; f < 60; ++f) off[f] = Vector3(100, 0, 0);
    const auto r = stream_of(gt, labels, off, 10);
    MedGrid g;
    g.tte_s = {0.5, 0.0, -0.5};
    g.horizon_s = {0.5, 1.0};
    const auto s = med_samples(lookup(r), gt, EventKind::Starting, g);
    CHECK(s.size() == 12);
    const auto t = aggregate_med(s, g);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t h = 0; h < 2; ++h) {
        CHECK(t.cell(EventKind::Starting, i, h).mean == doctest::Approx(100.0));
        CHECK(t.cell(EventKind::Starting, i, h).std == doctest::Approx(0.0));
        CHECK(t.cell(EventKind::Starting, i, h, true).mean == doctest::Approx(100.0));
      }
  }
  SUBCASE("two events by hand") {
    // offsets (3,4) and (-5,12): distances 5 and 13, lateral 3 and 5
    const auto r = stream_of(gt, labels, {{10, {3, 4, 0}}, {40, {-5, 12, 7}}, {30, {0, 0, 0}}}, 2);
    MedGrid g = grid;
    g.tte_s = {1.0, 0.0};
    std::size_t skipped = 0;
    auto s = med_samples(lookup(r), gt, EventKind::Starting, g, &skipped);
    const auto st = med_samples(lookup(r), gt, EventKind::Stopping, g, &skipped);
    s.insert(s.end(), st.begin(), st.end());
    // tte 1 s: event 10 issues at frame 0 and the stop at frame 20, neither predicted
    CHECK(skipped == 2);
    const auto t = aggregate_med(s, g, skipped);
    const auto& c = t.cell(EventKind::Starting, 1, 0);
    CHECK(c.count == 2);
    CHECK(c.mean == 9.0);
    CHECK(c.std == 4.0);
    CHECK(c.rmse == doctest::Approx(std::sqrt(97.0)));
    const auto& l = t.cell(EventKind::Starting, 1, 0, true);
    CHECK(l.mean == 4.0);
    CHECK(l.std == 1.0);
    CHECK(t.cell(EventKind::Stopping, 1, 0).count == 1);
    CHECK(t.cell(EventKind::Stopping, 1, 0).mean == 0.0);
    CHECK(t.cell(EventKind::Starting, 0, 0).count == 1);
    CHECK(t.cell(EventKind::Starting, 0, 0).mean == 0.0);
    CHECK(t.skipped == 2);

    SUBCASE("translation invariance") {
      const auto gt2 = cycle_fixture(Vector3(1000, -500, 30));
      const auto r2 = stream_of(gt2, labels, {{10, {3, 4, 0}}, {40, {-5, 12, 7}}, {30, {0, 0, 0}}}, 2);
      const auto s2 = med_samples(lookup(r2), gt2, EventKind::Starting, g);
      const auto t2 = aggregate_med(s2, g);
      CHECK(t2.cell(EventKind::Starting, 1, 0).mean == c.mean);
      CHECK(t2.cell(EventKind::Starting, 1, 0).std == c.std);
    }
  }
  SUBCASE("lateral never exceeds combined") {
    std::mt19937 rng(2);
    std::normal_distribution<double> n(0.0, 50.0);
    std::map<long, Vector3> off;
    for (long f = 1; f < 60; ++f) off[f] = Vector3(n(rng), n(rng), n(rng));
    const auto r = stream_of(gt, labels, off, 10);
    const MedGrid g{{0.5, 0.0, -0.5}, {0.5, 1.0}};
    const auto t = aggregate_med(med_samples(lookup(r), gt, EventKind::Starting, g), g);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t h = 0; h < 2; ++h)
        CHECK(t.cell(EventKind::Starting, i, h, true).mean <= t.cell(EventKind::Starting, i, h).mean);
  }
  SUBCASE("off-grid sample") {
    MedSample s{EventKind::Starting, "x", 1, 0.3, 0.2, 1.0, 1.0};
    CHECK_THROWS_AS(aggregate_med(std::span(&s, 1), grid), DataError);
  }
}

TEST_CASE("delay statistics") {
  SUBCASE("zeros") {
    const std::vector<double> d(5, 0.0);
    const auto s = delay_stats(d);
    CHECK(s.mean == 0.0);
    CHECK(s.median == 0.0);
    CHECK(s.std == 0.0);
    const auto c = accuracy_curve(d, 5, 0.0, 0.0, 0.1);
    REQUIRE(c.size() == 1);
    CHECK(c[0].accuracy == 1.0);
  }
  SUBCASE("closed form") {
    const std::vector<double> d{-0.1, 0.0, 0.1};
    const auto s = delay_stats(d);
    CHECK(s.mean == doctest::Approx(0.0));
    CHECK(s.median == 0.0);
    CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 300.0)));
    CHECK(s.std == doctest::Approx(0.0816).epsilon(1e-3));
  }
  SUBCASE("direct recomputation") {
    std::mt19937 rng(8);
    std::normal_distribution<double> n(-0.28, 0.16);
    std::vector<double> d(41);
    for (auto& v : d) v = n(rng);
    double sum = 0;
    for (double v : d) sum += v;
    const double mean = sum / 41;
    double var = 0;
    for (double v : d) var += (v - mean) * (v - mean);
    auto sorted = d;
    std::sort(sorted.begin(), sorted.end());
    const auto s = delay_stats(d);
    CHECK(s.count == 41);
    CHECK(s.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(s.std == doctest::Approx(std::sqrt(var / 41)).epsilon(1e-14));
    CHECK(s.median == sorted[20]);
  }
  SUBCASE("accuracy curve") {
    const std::vector<double> d{-0.2, 0.0, 0.125, 0.3};
    const auto c = accuracy_curve(d, 5, -0.5, 0.5, 0.125);
    REQUIRE(c.size() == 9);
    CHECK(c.front().accuracy == 0.0);
    CHECK(c[4].tau_s == doctest::Approx(0.0));
    CHECK(c[4].accuracy == doctest::Approx(0.4));
    CHECK(c[5].accuracy == doctest::Approx(0.6));
    CHECK(c.back().accuracy == doctest::Approx(0.8));
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].accuracy >= c[i - 1].accuracy);
    CHECK_THROWS_AS(accuracy_curve(d, 5, 0.5, -0.5, 0.1), ConfigError);
  }
}

TEST_CASE("evaluator and report files") {
  const auto gt = cycle_fixture();
  auto labels = frame_labels(gt);
  // recognition one frame late at each boundary
  for (const auto& seg : gt.segments)
    if (seg.start_frame > 0) labels[static_cast<std::size_t>(seg.start_frame)] = labels[static_cast<std::size_t>(seg.start_frame - 1)];
  std::map<long, Vector3> off;
  for (long f = 1; f < 60; ++f) off[f] = Vector3(10, 20, 0);
  const auto r = stream_of(gt, labels, off, 10);

  Evaluator ev;
  ev.add(gt, r);
  const auto rep = ev.finish("fp123");
  CHECK(rep.confusion.total() == 59);
  CHECK(rep.confusion.counts.trace() == 59 - 6);
  std::size_t matched = 0;
  for (const auto& t : rep.transitions) {
    matched += t.matched;
    for (double d : t.delays_s) CHECK(d == doctest::Approx(0.1));
  }
  CHECK(matched == 6);
  REQUIRE(rep.stop_to_standing_s.size() == 1);
  CHECK(rep.standing_events == 1);

  fixture::TempDir a("eval-a"), b("eval-b");
  emit_report(rep, a.path);
  emit_report(rep, b.path);
  for (const char* f : {"report.json", "confusion.csv", "med.csv", "delays.csv"}) {
    REQUIRE(std::filesystem::exists(a.path / f));
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
  const auto j = nlohmann::json::parse(slurp(a.path / "report.json"));
  CHECK(j["config"] == "fp123");
  CHECK(j["recognition"]["total"] == 59);
  CHECK(j["transitions"]["overall"]["matched"] == 6);
  CHECK(slurp(a.path / "confusion.csv").rfind("actual,standing,starting,stopping,walking\n", 0) == 0);

  const auto back = read_med_csv(a.path / "med.csv");
  REQUIRE(back.size() == rep.med_samples.size());
  const auto t = aggregate_med(back, rep.med.grid, rep.med.skipped);
  for (int k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < t.grid.tte_s.size(); ++i)
      for (std::size_t h = 0; h < t.grid.horizon_s.size(); ++h) {
        const auto kind = static_cast<EventKind>(k);
        CHECK(t.cell(kind, i, h).count == rep.med.cell(kind, i, h).count);
        CHECK(t.cell(kind, i, h).mean == doctest::Approx(rep.med.cell(kind, i, h).mean).epsilon(1e-12));
        CHECK(t.cell(kind, i, h).std == doctest::Approx(rep.med.cell(kind, i, h).std).epsilon(1e-12));
        CHECK(t.cell(kind, i, h, true).mean == doctest::Approx(rep.med.cell(kind, i, h, true).mean).epsilon(1e-12));
      }

  SUBCASE("frame count mismatch") {
    Evaluator e2;
    StreamResult shorter = r;
    shorter.frames.pop_back();
    CHECK_THROWS_AS(e2.add(gt, shorter), DataError);
  }
  SUBCASE("unwritable directory") {
    const auto file = a.path / "plain";
    std::ofstream(file) << "x";
    CHECK_THROWS_AS(emit_report(rep, file / "sub"), DataError);
  }
}
