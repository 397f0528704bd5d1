#include "test_util.hpp"

#include <sstream>

using namespace vlafp;
using Catch::Approx;

namespace {

ThresholdRow enumerate(const std::vector<ScoredSegment>& s, double t) {
  ThresholdRow r;
  for (const auto& x : s) {
    if (x.score >= t) (x.positive ? r.tp : r.fp)++;
    else if (x.positive) r.fn++;
  }
  r.precision = r.tp + r.fp == 0 ? 0.0 : double(r.tp) / double(r.tp + r.fp);
  r.recall = double(r.tp) / double(r.tp + r.fn);
  r.f1 = r.tp == 0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

const std::vector<Waveform>& corpus() {
  static const auto c = [] {
    SynthSpec spec;
    spec.n_audios = 6;
    spec.min_duration = spec.max_duration = 4.0;
    return generate(spec);
  }();
  return c;
}

Fingerprinter<double> random_fingerprinter() {
  Fingerprinter<double> fp;
  Rng rng(3);
  fp.weights = init_weights<double>(fp.config, rng, 0.1);
  return fp;
}

SegmenterConfig fixed_1s() {
  SegmenterConfig c;
  c.method = SegmentMethod::Fixed;
  return c;
}

}  // namespace

TEST_CASE("hand-built score list") {
  const std::vector<ScoredSegment> s{{0, 1, 0.9, true}, {1, 1, 0.8, false}, {2, 1, 0.4, true}};
  const auto r = sweep_thresholds(s);
  REQUIRE(r.sweep.size() == 4);
  REQUIRE(std::isinf(r.sweep[0].threshold));
  REQUIRE(r.sweep[0].f1 == 0.0);
  REQUIRE(r.sweep[1].f1 == Approx(2.0 / 3.0));
  REQUIRE(r.sweep[1].precision == 1.0);
  REQUIRE(r.sweep[1].recall == 0.5);
  REQUIRE(r.best.threshold == 0.4);
  REQUIRE(r.best.f1 == Approx(0.8));
  REQUIRE(r.best.precision == Approx(2.0 / 3.0));
  REQUIRE(r.best.recall == 1.0);
}

TEST_CASE("sweep agrees with exhaustive enumeration") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredSegment> s(1 + rng.index(25));
    for (auto& x : s) {
      x.score = std::round(rng.uniform(-1.0, 1.0) * 8.0) / 8.0;
      x.positive = rng.uniform() < 0.4;
    }
    s[0].positive = true;
    const auto r = sweep_thresholds(s);
    double best = -1.0, best_t = 0.0;
    std::vector<double> ts{kInf};
    for (const auto& x : s) ts.push_back(x.score);
    std::sort(ts.begin(), ts.end(), std::greater<>());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    REQUIRE(r.sweep.size() == ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto e = enumerate(s, ts[i]);
      const auto& got = r.sweep[i];
      REQUIRE(got.threshold == ts[i]);
      REQUIRE(got.tp == e.tp);
      REQUIRE(got.fp == e.fp);
      REQUIRE(got.fn == e.fn);
      REQUIRE(got.precision == e.precision);
      REQUIRE(got.recall == e.recall);
      REQUIRE(got.f1 == Approx(e.f1).margin(1e-15));
      REQUIRE(got.f1 >= 0.0);
      REQUIRE(got.f1 <= 1.0);
      REQUIRE((got.f1 == 0.0) == (got.tp == 0));
      if (e.f1 > best) {
        best = e.f1;
        best_t = ts[i];
      }
      REQUIRE(r.best.f1 >= got.f1);
    }
    REQUIRE(r.best.threshold == best_t);
  }
}

TEST_CASE("zero positives is an error") {
  const std::vector<ScoredSegment> s{{0, 1, 0.3, false}};
  REQUIRE_THROWS_AS(sweep_thresholds(s), Error);
}

TEST_CASE("majority overlap labels") {
  REQUIRE(majority_overlap(0.0, 1.0, 0.4, 3.0));
  REQUIRE_FALSE(majority_overlap(0.0, 1.0, 0.5, 3.0));
  REQUIRE(majority_overlap(2.5, 1.0, 0.0, 3.01));
  REQUIRE_FALSE(majority_overlap(5.0, 1.0, 0.0, 3.0));
}

TEST_CASE("broadcast span bookkeeping") {
  const auto& c = corpus();
  AugmentConfig none;
  set_stages(none, "none");
  BroadcastOptions opts;
  opts.n_others = 3;
  opts.commercial_position = 0;
  Rng rng(2);
  const auto b = simulate_broadcast(c[0], std::span(c).subspan(1, 3), none, rng, opts);
  REQUIRE(b.span_start == 0.0);
  REQUIRE(b.span_end == c[0].duration());
  REQUIRE(b.order.front() == 0);
  REQUIRE(b.audio.size() == 4 * c[0].size());

  AugmentConfig ts;
  set_stages(ts, "ts");
  ts.ts_range = {1.25, 1.25};
  opts.commercial_position = 2;
  Rng r1(3), r2(3);
  const auto s = simulate_broadcast(c[0], std::span(c).subspan(1, 3), ts, r1, opts);
  REQUIRE(s.span_start == Approx(2.0 * c[0].duration() / 1.25));
  REQUIRE(s.span_end - s.span_start == Approx(c[0].duration() / 1.25));
  REQUIRE(simulate_broadcast(c[0], std::span(c).subspan(1, 3), ts, r2, opts).audio.samples == s.audio.samples);
}

TEST_CASE("undistorted self-match reaches F1 of one") {
  const auto fp = random_fingerprinter();
  AugmentConfig none;
  set_stages(none, "none");
  BroadcastOptions opts;
  opts.n_others = 5;
  Rng rng(4);
  const auto run = run_cbr(fp, corpus()[0], 0, std::span(corpus()).subspan(1, 5), fixed_1s(), none, rng, opts);
  REQUIRE(run.result.best.f1 == 1.0);

  std::stringstream dump;
  write_scores_csv(dump, run.scored);
  std::string line;
  std::getline(dump, line);
  std::vector<ScoredSegment> parsed;
  while (std::getline(dump, line)) {
    ScoredSegment s;
    char comma;
    int pos;
    std::istringstream row(line);
    row >> s.start >> comma >> s.duration >> comma >> s.score >> comma >> pos;
    s.positive = pos == 1;
    parsed.push_back(s);
  }
  const auto again = sweep_thresholds(parsed);
  REQUIRE(again.best.f1 == Approx(run.result.best.f1));
  REQUIRE(again.best.tp == run.result.best.tp);
}

TEST_CASE("dtr lookup arithmetic") {
  for (int k : {1, 2, 3, 5, 6, 10}) {
    REQUIRE(dtr_lookup_count(k) == static_cast<std::size_t>(2 * k - 1));
    const auto w = testing::sine(300.0, k);
    REQUIRE(dtr_windows(w, k).size() == static_cast<std::size_t>(2 * k - 1));
    const auto shorter = w.slice(0, w.size() - 900);
    const auto padded = dtr_windows(shorter, k);
    REQUIRE(padded.size() == static_cast<std::size_t>(2 * k - 1));
    REQUIRE(padded.back().size() == 8000);
  }
}

TEST_CASE("majority vote") {
  const std::vector<Match> aab{{7, 0.9}, {7, 0.5}, {3, 0.99}};
  REQUIRE(majority_vote(aab).audio_id == 7);
  REQUIRE(majority_vote(aab).count == 2);
  const std::vector<Match> tie{{4, 0.5}, {2, 0.6}};
  REQUIRE(majority_vote(tie).audio_id == 2);
  const std::vector<Match> exact{{4, 0.5}, {2, 0.5}};
  REQUIRE(majority_vote(exact).audio_id == 2);
}

TEST_CASE("undistorted dtr queries hit their source") {
  const auto fp = random_fingerprinter();
  const auto& c = corpus();
  std::vector<std::uint64_t> ids(c.size());
  std::iota(ids.begin(), ids.end(), 0);
  FingerprintIndex db(fp.config.d);
  index_audios(db, fp, c, ids, fixed_1s());
  AugmentConfig none;
  set_stages(none, "none");
  Rng rng(5);
  const std::vector<double> durations{1, 2, 3};
  DtrQueryOptions opts;
  opts.per_target = 2;
  const auto queries = make_dtr_queries(c, ids, durations, none, rng, opts);
  REQUIRE(queries.size() == 3 * 6 * 2);
  for (const auto& q : queries) REQUIRE(std::fmod(q.offset, 0.5) == 0.0);
  const auto report = dtr_evaluate(db, fp, queries);
  double prev = 0.0;
  for (const auto& [k, rate] : report.hit_rates) {
    REQUIRE(rate == 1.0);
    REQUIRE(rate >= prev);
    prev = rate;
  }
  for (const auto& q : report.queries) REQUIRE(q.lookups == static_cast<std::size_t>(2 * q.duration - 1));
}

TEST_CASE("entries keep per-audio segment ordinals") {
  const auto fp = random_fingerprinter();
  const std::vector<std::uint64_t> ids{10, 20};
  FingerprintIndex idx(fp.config.d);
  index_audios(idx, fp, std::span(corpus()).subspan(0, 2), ids, fixed_1s());
  REQUIRE(idx.size() == 14);
  REQUIRE(idx.entry(0).audio_id == 10);
  REQUIRE(idx.entry(7).audio_id == 20);
  REQUIRE(idx.entry(7).segment_ord == 0);
  REQUIRE(idx.entry(8).start_time == 0.5f);
}
