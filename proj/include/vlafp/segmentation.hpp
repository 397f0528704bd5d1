#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlafp/dsp.hpp"
#include "vlafp/pelt.hpp"

namespace vlafp {

enum class SegmentMethod { Main, NoSilence, Pelt, Waveform, Fixed };

inline std::string to_string(SegmentMethod m) {
  switch (m) {
    case SegmentMethod::Main: return "main";
    case SegmentMethod::NoSilence: return "nosilence";
    case SegmentMethod::Pelt: return "pelt";
    case SegmentMethod::Waveform: return "waveform";
    case SegmentMethod::Fixed: return "fixed";
  }
  return "unknown";
}

inline SegmentMethod parse_segment_method(const std::string& s) {
  if (s == "main") return SegmentMethod::Main;
  if (s == "nosilence" || s == "no-silence") return SegmentMethod::NoSilence;
  if (s == "pelt") return SegmentMethod::Pelt;
  if (s == "waveform") return SegmentMethod::Waveform;
  if (s == "fixed") return SegmentMethod::Fixed;
  throw Error("unknown segmentation method: " + s);
}

struct SegmenterConfig {
  double t_min = 0.5;
  double t_max = 5.0;
  double theta = 1.0;  // +inf admits every frame
  std::size_t stft_window = 1024;
  std::size_t frame_hop = 256;
  SegmentMethod method = SegmentMethod::Main;
  std::optional<double> pelt_penalty;  // default: 2 ln(n) var(series)
  std::size_t pelt_jump = 1;
  double silence_db = -60.0;
  std::size_t waveform_bins = 64;
  double fixed_window = 1.0;  // seconds, Fixed method only
  double fixed_hop = 0.5;

  void validate() const {
    require(t_min > 0.0 && t_min <= t_max, "segmenter: need 0 < t_min <= t_max");
    require(theta >= 0.0, "segmenter: theta must be >= 0");
    require(frame_hop > 0 && stft_window >= frame_hop, "segmenter: need stft_window >= frame_hop > 0");
    require(pelt_jump >= 1, "segmenter: pelt jump must be >= 1");
  }
};

/// Contiguous span of an audio. Frame-grid methods set start_frame/n_frames
/// in units of `frame_hop` samples; `skipped_frames` lists silent frames
/// inside the span that are excluded from the segment (NoSilence only).
struct Segment {
  std::uint64_t audio_id = 0;
  std::size_t start_frame = 0;
  std::size_t n_frames = 0;
  std::vector<std::size_t> skipped_frames;
  std::size_t start_sample = 0;
  std::size_t n_samples = 0;
  double start_time = 0.0;
  double duration = 0.0;

  std::size_t active_frames() const { return n_frames - skipped_frames.size(); }
};

/// Running mean / population std of the statistic inside the window.
struct EntropyStats {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t count = 0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  double stddev() const { return count == 0 ? 0.0 : std::sqrt(std::max(0.0, m2 / static_cast<double>(count))); }
};

inline std::size_t frames_for_min(double seconds, double sample_rate, std::size_t hop) {
  const double frames = seconds * sample_rate / static_cast<double>(hop);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(frames - 1e-9)));
}

inline std::size_t frames_for_max(double seconds, double sample_rate, std::size_t hop) {
  const double frames = seconds * sample_rate / static_cast<double>(hop);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(frames + 1e-9)));
}

struct FrameRun {
  std::size_t start = 0;
  std::size_t length = 0;
  std::vector<std::size_t> skipped;
};

/// Greedy z-score segment growth over a per-frame statistic. A window is
/// filled to `n_min` frames (skipping frames flagged in `skip`), then each
/// following frame is absorbed while |x - mean| / std < theta and the window
/// holds fewer than `n_max` frames.
inline std::vector<FrameRun> grow_segments(std::span<const double> stat, std::size_t n_min, std::size_t n_max, double theta,
                                           std::span<const bool> skip = {}) {
  require(n_min >= 1 && n_min <= n_max, "grow_segments: need 1 <= n_min <= n_max");
  require(skip.empty() || skip.size() == stat.size(), "grow_segments: skip mask size mismatch");
  std::vector<FrameRun> runs;
  const std::size_t n = stat.size();
  std::size_t pos = 0;
  while (pos < n) {
    FrameRun run{pos, 0, {}};
    EntropyStats stats;
    std::size_t last = pos;
    while (stats.count < n_min && pos < n) {
      if (!skip.empty() && skip[pos]) {
        if (stats.count == 0) run.start = pos + 1;
        else run.skipped.push_back(pos);
        ++pos;
        continue;
      }
      stats.add(stat[pos]);
      last = pos++;
    }
    if (stats.count == 0) break;
    while (stats.count < n_max && pos < n) {
      const double sigma = stats.stddev();
      const double z = sigma < 1e-9 ? 0.0 : std::abs(stat[pos] - stats.mean) / sigma;
      if (!(z < theta)) break;
      stats.add(stat[pos]);
      last = pos++;
    }
    run.length = last + 1 - run.start;
    std::erase_if(run.skipped, [&](std::size_t f) { return f > last; });
    runs.push_back(std::move(run));
  }
  return runs;
}

/// Shannon entropy (nats) of a 64-bin (by default) histogram of |x| over
/// the block's absolute-amplitude range.
inline double waveform_entropy(std::span<const double> block, std::size_t bins = 64) {
  if (block.empty()) return 0.0;
  double lo = kInf, hi = 0.0;
  for (double v : block) {
    lo = std::min(lo, std::abs(v));
    hi = std::max(hi, std::abs(v));
  }
  if (hi - lo <= 0.0) return 0.0;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : block) {
    auto b = static_cast<std::size_t>((std::abs(v) - lo) / (hi - lo) * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(block.size());
    h -= p * std::log(p);
  }
  return h;
}

inline std::vector<double> waveform_entropy_series(const Waveform& w, std::size_t hop, std::size_t bins = 64) {
  const std::size_t n = (w.size() + hop - 1) / hop;
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t begin = j * hop;
    out[j] = waveform_entropy(std::span(w.samples).subspan(begin, std::min(hop, w.size() - begin)), bins);
  }
  return out;
}

inline Segment make_frame_segment(std::uint64_t audio_id, const FrameRun& run, std::size_t hop, double sample_rate) {
  Segment s;
  s.audio_id = audio_id;
  s.start_frame = run.start;
  s.n_frames = run.length;
  s.skipped_frames = run.skipped;
  s.start_sample = run.start * hop;
  s.n_samples = run.length * hop;
  s.start_time = static_cast<double>(s.start_sample) / sample_rate;
  s.duration = static_cast<double>(s.active_frames() * hop) / sample_rate;
  return s;
}

namespace detail {

inline std::vector<Segment> runs_to_segments(std::uint64_t audio_id, const std::vector<FrameRun>& runs, const SegmenterConfig& cfg,
                                             double sample_rate) {
  std::vector<Segment> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(make_frame_segment(audio_id, r, cfg.frame_hop, sample_rate));
  return out;
}

inline std::vector<Segment> grow_on_series(const Waveform& w, std::span<const double> series, const SegmenterConfig& cfg,
                                           std::uint64_t audio_id, std::span<const bool> skip = {}) {
  cfg.validate();
  const std::size_t n_min = frames_for_min(cfg.t_min, w.sample_rate, cfg.frame_hop);
  const std::size_t n_max = std::max(n_min, frames_for_max(cfg.t_max, w.sample_rate, cfg.frame_hop));
  return runs_to_segments(audio_id, grow_segments(series, n_min, n_max, cfg.theta, skip), cfg, w.sample_rate);
}

// Shorter than one hop: a single zero-padded segment.
inline std::vector<Segment> short_input_segment(const Waveform& w, const SegmenterConfig& cfg, std::uint64_t audio_id) {
  return runs_to_segments(audio_id, {FrameRun{0, 1, {}}}, cfg, w.sample_rate);
}

}  // namespace detail

/// Spectral-entropy z-score segmentation.
inline std::vector<Segment> segment_main(const Waveform& w, const SegmenterConfig& cfg, std::uint64_t audio_id = 0) {
  cfg.validate();
  if (w.empty()) return {};
  if (w.size() < cfg.frame_hop) return detail::short_input_segment(w, cfg, audio_id);
  const auto series = spectral_entropy_series(w, cfg.stft_window, cfg.frame_hop);
  return detail::grow_on_series(w, series, cfg, audio_id);
}

/// As segment_main, but frames more than |silence_db| below the peak are
/// skipped while a window is being filled to its minimum length.
inline std::vector<Segment> segment_no_silence(const Waveform& w, const SegmenterConfig& cfg, std::uint64_t audio_id = 0) {
  cfg.validate();
  if (w.empty()) return {};
  const auto levels = frame_rms_db(w, cfg.frame_hop);
  // std::vector<bool> is not contiguous, so the mask lives in a plain array.
  const auto silent = std::make_unique<bool[]>(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) silent[i] = levels[i] < cfg.silence_db;
  const auto series = spectral_entropy_series(w, cfg.stft_window, cfg.frame_hop);
  return detail::grow_on_series(w, series, cfg, audio_id, std::span<const bool>(silent.get(), levels.size()));
}

/// Splits runs longer than n_max into near-equal pieces.
inline std::vector<FrameRun> split_long_runs(const std::vector<FrameRun>& runs, std::size_t n_max) {
  std::vector<FrameRun> out;
  for (const auto& r : runs) {
    if (r.length <= n_max) {
      out.push_back(r);
      continue;
    }
    const std::size_t pieces = (r.length + n_max - 1) / n_max;
    std::size_t start = r.start;
    for (std::size_t p = 0; p < pieces; ++p) {
      const std::size_t len = r.length / pieces + (p < r.length % pieces ? 1 : 0);
      out.push_back({start, len, {}});
      start += len;
    }
  }
  return out;
}

/// PELT change points on the spectral-entropy series, min segment length
/// T_min, then over-long segments split to respect T_max.
inline std::vector<Segment> segment_pelt(const Waveform& w, const SegmenterConfig& cfg, std::uint64_t audio_id = 0) {
  cfg.validate();
  if (w.empty()) return {};
  if (w.size() < cfg.frame_hop) return detail::short_input_segment(w, cfg, audio_id);
  const auto series = spectral_entropy_series(w, cfg.stft_window, cfg.frame_hop);
  const std::size_t n_min = frames_for_min(cfg.t_min, w.sample_rate, cfg.frame_hop);
  const std::size_t n_max = std::max(n_min, frames_for_max(cfg.t_max, w.sample_rate, cfg.frame_hop));
  const double penalty = cfg.pelt_penalty.value_or(default_pelt_penalty(series));
  const auto cps = pelt_l2(series, penalty, n_min, cfg.pelt_jump);
  std::vector<FrameRun> runs;
  std::size_t begin = 0;
  for (std::size_t end : cps.ends) {
    runs.push_back({begin, end - begin, {}});
    begin = end;
  }
  return detail::runs_to_segments(audio_id, split_long_runs(runs, n_max), cfg, w.sample_rate);
}

/// z-score segmentation driven by the waveform-amplitude entropy of each
/// hop-sized block instead of the spectral entropy.
inline std::vector<Segment> segment_waveform(const Waveform& w, const SegmenterConfig& cfg, std::uint64_t audio_id = 0) {
  cfg.validate();
  if (w.empty()) return {};
  if (w.size() < cfg.frame_hop) return detail::short_input_segment(w, cfg, audio_id);
  const auto series = waveform_entropy_series(w, cfg.frame_hop, cfg.waveform_bins);
  return detail::grow_on_series(w, series, cfg, audio_id);
}

/// Overlapping fixed windows. Full windows start every `hop` seconds; if the
/// last full window does not reach the end (or none fits), one more window
/// at the next hop position is emitted and zero padded.
inline std::vector<Segment> segment_fixed(const Waveform& w, double window, double hop, std::uint64_t audio_id = 0,
                                          std::size_t frame_hop = 256) {
  require(hop > 0.0 && window >= hop, "segment_fixed: need window >= hop > 0");
  const auto win = static_cast<std::size_t>(std::llround(window * w.sample_rate));
  const auto step = static_cast<std::size_t>(std::llround(hop * w.sample_rate));
  require(win > 0 && step > 0, "segment_fixed: window too short for the sample rate");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + win <= w.size(); s += step) starts.push_back(s);
  if (starts.empty()) starts.push_back(0);
  else if (starts.back() + win < w.size()) starts.push_back(starts.back() + step);
  std::vector<Segment> out;
  out.reserve(starts.size());
  for (std::size_t s : starts) {
    Segment seg;
    seg.audio_id = audio_id;
    seg.start_sample = s;
    seg.n_samples = win;
    seg.start_frame = s / frame_hop;
    seg.n_frames = (win + frame_hop - 1) / frame_hop;
    seg.start_time = static_cast<double>(s) / w.sample_rate;
    seg.duration = static_cast<double>(win) / w.sample_rate;
    out.push_back(std::move(seg));
  }
  return out;
}

inline std::vector<Segment> segment(const Waveform& w, const SegmenterConfig& cfg, std::uint64_t audio_id = 0) {
  switch (cfg.method) {
    case SegmentMethod::Main: return segment_main(w, cfg, audio_id);
    case SegmentMethod::NoSilence: return segment_no_silence(w, cfg, audio_id);
    case SegmentMethod::Pelt: return segment_pelt(w, cfg, audio_id);
    case SegmentMethod::Waveform: return segment_waveform(w, cfg, audio_id);
    case SegmentMethod::Fixed: return segment_fixed(w, cfg.fixed_window, cfg.fixed_hop, audio_id, cfg.frame_hop);
  }
  throw Error("segment: unknown method");
}

/// Audio of one segment: its samples with skipped frames removed, zero
/// padded where the span runs past the end of the source.
inline Waveform extract_segment(const Waveform& w, const Segment& s, std::size_t frame_hop = 256) {
  if (s.skipped_frames.empty()) return w.slice(s.start_sample, s.n_samples);
  Waveform out{{}, w.sample_rate};
  out.samples.reserve(s.active_frames() * frame_hop);
  std::size_t next_skip = 0;
  for (std::size_t f = s.start_frame; f < s.start_frame + s.n_frames; ++f) {
    if (next_skip < s.skipped_frames.size() && s.skipped_frames[next_skip] == f) {
      ++next_skip;
      continue;
    }
    const auto block = w.slice(f * frame_hop, frame_hop);
    out.samples.insert(out.samples.end(), block.samples.begin(), block.samples.end());
  }
  return out;
}

}  // namespace vlafp
