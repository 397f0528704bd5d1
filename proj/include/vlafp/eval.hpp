#pragma once

#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>

#include "vlafp/augment.hpp"
#include "vlafp/features.hpp"
#include "vlafp/index.hpp"
#include "vlafp/segmentation.hpp"

namespace vlafp {

/// Turns audio excerpts into fingerprints with a fixed model, packing up to
/// `batch_segments` excerpts per forward pass.
template <typename T = float>
struct Fingerprinter {
  Weights<T> weights;
  ModelConfig config;
  std::size_t batch_segments = 64;
  std::size_t threads = 1;

  Matrix<T> embed(std::span<const Waveform> excerpts) const {
    const MelConfig mel = mel_config_for(config);
    const std::size_t n = excerpts.size();
    Matrix<T> out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.d));
    const std::size_t chunks = (n + batch_segments - 1) / batch_segments;
    parallel_for(chunks, threads, [&](std::size_t c) {
      const std::size_t begin = c * batch_segments;
      const std::size_t count = std::min(batch_segments, n - begin);
      std::vector<Matrix<T>> feats;
      feats.reserve(count);
      for (std::size_t i = 0; i < count; ++i) feats.push_back(segment_features<T>(excerpts[begin + i], mel));
      out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) =
          fingerprint_batch(weights, config, pack_segments<T>(feats));
    });
    return out;
  }
};

template <typename T>
std::vector<float> row_as_floats(const Matrix<T>& m, Eigen::Index row) {
  std::vector<float> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(m(row, j));
  return v;
}

/// Index entries for already segmented audio. Fingerprints are renormalized
/// after the cast to float.
template <typename T>
std::vector<IndexEntry> make_entries(const Matrix<T>& fps, std::span<const Segment> segments) {
  require(static_cast<std::size_t>(fps.rows()) == segments.size(), "make_entries: fingerprint/segment count mismatch");
  std::vector<IndexEntry> out;
  std::map<std::uint64_t, std::uint32_t> ord;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    IndexEntry e;
    e.vector = row_as_floats(fps, static_cast<Eigen::Index>(i));
    double sq = 0.0;
    for (float v : e.vector) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    for (auto& v : e.vector) v = static_cast<float>(v / norm);
    e.audio_id = segments[i].audio_id;
    e.segment_ord = ord[segments[i].audio_id]++;
    e.start_time = static_cast<float>(segments[i].start_time);
    e.duration = static_cast<float>(segments[i].duration);
    out.push_back(std::move(e));
  }
  return out;
}

/// Segments, fingerprints and indexes a set of audios with the given ids.
template <typename T>
void index_audios(FingerprintIndex& index, const Fingerprinter<T>& fp, std::span<const Waveform> audios,
                  std::span<const std::uint64_t> ids, const SegmenterConfig& seg_cfg) {
  require(audios.size() == ids.size(), "index_audios: one id per audio required");
  std::vector<Segment> segs;
  std::vector<Waveform> excerpts;
  for (std::size_t a = 0; a < audios.size(); ++a)
    for (auto& s : segment(audios[a], seg_cfg, ids[a])) {
      excerpts.push_back(extract_segment(audios[a], s, seg_cfg.frame_hop));
      segs.push_back(std::move(s));
    }
  for (auto& e : make_entries(fp.embed(excerpts), segs)) index.insert(std::move(e));
}

// ---------------------------------------------------------------------------
// Commercial-broadcast retrieval

struct BroadcastOptions {
  std::size_t n_others = 19;
  std::optional<std::size_t> commercial_position;  // slot in the stream; random if unset
};

struct Broadcast {
  Waveform audio;
  std::vector<std::size_t> order;  // 0 = commercial, i + 1 = others[i]
  double span_start = 0.0;         // commercial span in seconds, post-distortion
  double span_end = 0.0;
  AugmentDraw draw;
};

/// Concatenates the commercial and `n_others` other audios in shuffled order
/// and distorts the whole stream.
inline Broadcast simulate_broadcast(const Waveform& commercial, std::span<const Waveform> others, const AugmentConfig& aug, Rng& rng,
                                    const BroadcastOptions& opts = {}) {
  require(others.size() >= opts.n_others,
          "simulate_broadcast: need " + std::to_string(opts.n_others) + " other audios, got " + std::to_string(others.size()));
  const std::size_t slots = opts.n_others + 1;
  Broadcast b;
  b.order.resize(opts.n_others);
  for (std::size_t i = 0; i < opts.n_others; ++i) b.order[i] = i + 1;
  rng.shuffle(b.order.begin(), b.order.end());
  const std::size_t pos = opts.commercial_position ? *opts.commercial_position : rng.index(slots);
  require(pos < slots, "simulate_broadcast: commercial position out of range");
  b.order.insert(b.order.begin() + static_cast<std::ptrdiff_t>(pos), 0);

  std::vector<Waveform> parts;
  std::size_t before = 0;
  for (std::size_t k = 0; k < b.order.size(); ++k) {
    const Waveform& piece = b.order[k] == 0 ? commercial : others[b.order[k] - 1];
    require(piece.sample_rate == commercial.sample_rate, "simulate_broadcast: sample rate mismatch");
    if (k < pos) before += piece.size();
    parts.push_back(piece);
  }
  const Waveform clean = concat(parts);
  const double rate = commercial.sample_rate;
  b.span_start = static_cast<double>(before) / rate;
  b.span_end = static_cast<double>(before + commercial.size()) / rate;
  if (aug.any()) {
    b.audio = augment_chain(clean, aug, rng, &b.draw);
    if (b.draw.stretch) {
      b.span_start /= *b.draw.stretch;
      b.span_end /= *b.draw.stretch;
    }
  } else {
    b.audio = clean;
  }
  return b;
}

struct ScoredSegment {
  double start = 0.0;
  double duration = 0.0;
  double score = 0.0;
  bool positive = false;
};

/// A segment is a ground-truth positive when more than half of it overlaps
/// [span_start, span_end).
inline bool majority_overlap(double start, double duration, double span_start, double span_end) {
  const double overlap = std::max(0.0, std::min(start + duration, span_end) - std::max(start, span_start));
  return overlap > 0.5 * duration;
}

struct ThresholdRow {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct CbrResult {
  std::vector<ThresholdRow> sweep;  // thresholds descending, +inf first
  ThresholdRow best;
};

/// Metrics at threshold t: a segment is predicted positive when score >= t.
inline ThresholdRow metrics_at(std::span<const ScoredSegment> scored, double threshold) {
  ThresholdRow r;
  r.threshold = threshold;
  for (const auto& s : scored) {
    const bool predicted = s.score >= threshold;
    if (predicted && s.positive) ++r.tp;
    else if (predicted) ++r.fp;
    else if (s.positive) ++r.fn;
  }
  r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

/// Sweeps every observed score plus +inf; the best row maximizes F1, ties
/// going to the higher threshold.
inline CbrResult sweep_thresholds(std::span<const ScoredSegment> scored) {
  require(!scored.empty(), "cbr: no scored segments");
  require(std::any_of(scored.begin(), scored.end(), [](const ScoredSegment& s) { return s.positive; }),
          "cbr: ground truth has no positive segments; recall undefined");
  std::vector<double> thresholds{kInf};
  for (const auto& s : scored) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  CbrResult out;
  for (double t : thresholds) {
    out.sweep.push_back(metrics_at(scored, t));
    if (out.sweep.size() == 1 || out.sweep.back().f1 > out.best.f1) out.best = out.sweep.back();
  }
  return out;
}

/// Top-1 score of each broadcast segment against the commercial index,
/// labelled by majority overlap with the ground-truth span.
template <typename T>
std::vector<ScoredSegment> score_broadcast(const FingerprintIndex& commercial_index, const Matrix<T>& fps,
                                           std::span<const Segment> segments, double span_start, double span_end) {
  require(!commercial_index.empty(), "cbr: empty commercial index");
  require(static_cast<std::size_t>(fps.rows()) == segments.size(), "cbr: fingerprint/segment count mismatch");
  std::vector<ScoredSegment> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto hits = commercial_index.search(row_as_floats(fps, static_cast<Eigen::Index>(i)), 1);
    out.push_back({segments[i].start_time, segments[i].duration, hits.front().score,
                   majority_overlap(segments[i].start_time, segments[i].duration, span_start, span_end)});
  }
  return out;
}

template <typename T>
CbrResult cbr_evaluate(const FingerprintIndex& commercial_index, const Matrix<T>& fps, std::span<const Segment> segments,
                       double span_start, double span_end) {
  const auto scored = score_broadcast(commercial_index, fps, segments, span_start, span_end);
  return sweep_thresholds(scored);
}

struct CbrRun {
  Broadcast broadcast;
  std::vector<ScoredSegment> scored;
  CbrResult result;
};

/// End-to-end CBR for one commercial: index its segments, simulate and
/// segment a broadcast, score and sweep.
template <typename T>
CbrRun run_cbr(const Fingerprinter<T>& fp, const Waveform& commercial, std::uint64_t commercial_id, std::span<const Waveform> others,
               const SegmenterConfig& seg_cfg, const AugmentConfig& aug, Rng& rng, const BroadcastOptions& opts = {}) {
  FingerprintIndex idx(fp.config.d);
  const std::uint64_t ids[] = {commercial_id};
  index_audios(idx, fp, std::span(&commercial, 1), ids, seg_cfg);
  CbrRun run;
  run.broadcast = simulate_broadcast(commercial, others, aug, rng, opts);
  const auto segs = segment(run.broadcast.audio, seg_cfg, 0);
  std::vector<Waveform> excerpts;
  for (const auto& s : segs) excerpts.push_back(extract_segment(run.broadcast.audio, s, seg_cfg.frame_hop));
  const auto fps = fp.embed(excerpts);
  run.scored = score_broadcast(idx, fps, segs, run.broadcast.span_start, run.broadcast.span_end);
  run.result = sweep_thresholds(run.scored);
  return run;
}

inline void write_cbr_csv(std::ostream& os, const CbrResult& r) {
  os << "threshold,tp,fp,fn,precision,recall,f1\n" << std::setprecision(9);
  for (const auto& row : r.sweep)
    os << row.threshold << ',' << row.tp << ',' << row.fp << ',' << row.fn << ',' << row.precision << ',' << row.recall << ','
       << row.f1 << '\n';
  os << "best:" << r.best.threshold << ',' << r.best.tp << ',' << r.best.fp << ',' << r.best.fn << ',' << r.best.precision << ','
     << r.best.recall << ',' << r.best.f1 << '\n';
}

inline void write_scores_csv(std::ostream& os, std::span<const ScoredSegment> scored) {
  os << "start_s,duration_s,score,positive\n" << std::setprecision(9);
  for (const auto& s : scored) os << s.start << ',' << s.duration << ',' << s.score << ',' << (s.positive ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Dummy-target retrieval

inline constexpr double kDtrWindow = 1.0;
inline constexpr double kDtrHop = 0.5;

/// Number of 1 s windows at 0.5 s hop in a k-second query: 2k - 1.
inline std::size_t dtr_lookup_count(double seconds, double window = kDtrWindow, double hop = kDtrHop) {
  require(seconds >= window, "dtr: query shorter than one window");
  return static_cast<std::size_t>(std::floor((seconds - window) / hop + 1e-9)) + 1;
}

/// Query windows of a nominal `seconds`-long query, zero padded if the
/// (distorted) audio is shorter.
inline std::vector<Waveform> dtr_windows(const Waveform& query, double seconds) {
  const std::size_t n = dtr_lookup_count(seconds);
  const auto win = static_cast<std::size_t>(std::llround(kDtrWindow * query.sample_rate));
  const auto hop = static_cast<std::size_t>(std::llround(kDtrHop * query.sample_rate));
  std::vector<Waveform> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) out.push_back(query.slice(j * hop, win));
  return out;
}

struct Match {
  std::uint64_t audio_id = 0;
  double score = 0.0;
};

struct Vote {
  std::uint64_t audio_id = 0;
  std::size_t count = 0;
  double score_sum = 0.0;
};

/// Most frequent audio among per-window top-1 matches; ties go to the
/// higher summed score, then the lower audio id.
inline Vote majority_vote(std::span<const Match> matches) {
  require(!matches.empty(), "majority_vote: no matches");
  std::map<std::uint64_t, Vote> tally;
  for (const auto& m : matches) {
    auto& v = tally[m.audio_id];
    v.audio_id = m.audio_id;
    ++v.count;
    v.score_sum += m.score;
  }
  Vote best = tally.begin()->second;
  for (const auto& [id, v] : tally)
    if (v.count > best.count || (v.count == best.count && v.score_sum > best.score_sum)) best = v;
  return best;
}

struct DtrQuery {
  std::uint64_t source_id = 0;
  double duration = 0.0;  // nominal seconds
  double offset = 0.0;    // start within the source, seconds
  Waveform audio;
};

struct DtrQueryOptions {
  std::size_t per_target = 1;
  double offset_grid = kDtrHop;  // query starts are multiples of this
};

/// One distorted excerpt per (target, duration, repeat). Durations longer
/// than the source are cropped with a warning.
inline std::vector<DtrQuery> make_dtr_queries(std::span<const Waveform> targets, std::span<const std::uint64_t> ids,
                                              std::span<const double> durations, const AugmentConfig& aug, Rng& rng,
                                              const DtrQueryOptions& opts = {}) {
  require(targets.size() == ids.size(), "dtr: one id per target required");
  std::vector<DtrQuery> out;
  for (double k : durations) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const Waveform& src = targets[t];
      double len = k;
      if (len > src.duration()) {
        std::cerr << "warning: query duration " << k << " s exceeds target " << ids[t] << " (" << src.duration()
                  << " s); cropping\n";
        len = std::floor(src.duration() / kDtrHop) * kDtrHop;
      }
      for (std::size_t r = 0; r < opts.per_target; ++r) {
        const auto slots = static_cast<std::size_t>(std::floor((src.duration() - len) / opts.offset_grid + 1e-9)) + 1;
        const double offset = static_cast<double>(rng.index(slots)) * opts.offset_grid;
        const auto begin = static_cast<std::size_t>(std::llround(offset * src.sample_rate));
        const auto count = static_cast<std::size_t>(std::llround(len * src.sample_rate));
        Waveform excerpt = src.slice(begin, count);
        if (aug.any()) excerpt = augment_chain(excerpt, aug, rng);
        out.push_back({ids[t], len, offset, std::move(excerpt)});
      }
    }
  }
  return out;
}

struct DtrQueryResult {
  std::uint64_t source_id = 0;
  double duration = 0.0;
  std::size_t lookups = 0;
  Vote vote;
  bool hit = false;
};

struct DtrReport {
  std::vector<DtrQueryResult> queries;
  std::vector<std::pair<double, double>> hit_rates;  // (duration, rate), durations ascending
};

template <typename T>
DtrReport dtr_evaluate(const FingerprintIndex& database, const Fingerprinter<T>& fp, std::span<const DtrQuery> queries) {
  require(!database.empty(), "dtr: empty database");
  DtrReport report;
  std::vector<Waveform> windows;
  std::vector<std::size_t> first;
  for (const auto& q : queries) {
    first.push_back(windows.size());
    for (auto& w : dtr_windows(q.audio, q.duration)) windows.push_back(std::move(w));
  }
  first.push_back(windows.size());
  const auto fps = fp.embed(windows);
  std::vector<Match> matches(windows.size());
  parallel_for(windows.size(), fp.threads, [&](std::size_t i) {
    const auto hit = database.search(row_as_floats(fps, static_cast<Eigen::Index>(i)), 1).front();
    matches[i] = {database.entry(hit.entry).audio_id, hit.score};
  });
  std::map<double, std::pair<std::size_t, std::size_t>> per_duration;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    DtrQueryResult r;
    r.source_id = queries[qi].source_id;
    r.duration = queries[qi].duration;
    r.lookups = first[qi + 1] - first[qi];
    r.vote = majority_vote(std::span(matches).subspan(first[qi], r.lookups));
    r.hit = r.vote.audio_id == r.source_id;
    auto& [hits, total] = per_duration[r.duration];
    hits += r.hit ? 1 : 0;
    ++total;
    report.queries.push_back(r);
  }
  for (const auto& [k, ht] : per_duration)
    report.hit_rates.emplace_back(k, static_cast<double>(ht.first) / static_cast<double>(ht.second));
  return report;
}

inline void write_dtr_csv(std::ostream& os, const DtrReport& r) {
  os << "duration,hit_rate\n" << std::setprecision(9);
  for (const auto& [k, rate] : r.hit_rates) os << k << ',' << rate << '\n';
}

inline void write_dtr_queries_csv(std::ostream& os, const DtrReport& r) {
  os << "source_id,duration,lookups,retrieved_id,votes,score_sum,hit\n" << std::setprecision(9);
  for (const auto& q : r.queries)
    os << q.source_id << ',' << q.duration << ',' << q.lookups << ',' << q.vote.audio_id << ',' << q.vote.count << ','
       << q.vote.score_sum << ',' << (q.hit ? 1 : 0) << '\n';
}

}  // namespace vlafp
