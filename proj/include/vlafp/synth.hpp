#pragma once

#include <cmath>
#include <vector>

#include "vlafp/audio.hpp"
#include "vlafp/common.hpp"

namespace vlafp {

struct SynthSpec {
  std::size_t n_audios = 50;
  double min_duration = 10.0;
  double max_duration = 10.0;
  double sample_rate = 8000.0;
  std::uint64_t seed = 7;
  double max_correlation = 0.5;

  void validate() const {
    require(n_audios >= 1, "synth: n_audios must be >= 1");
    require(min_duration > 0.0 && min_duration <= max_duration, "synth: need 0 < min_duration <= max_duration");
    require(sample_rate > 0.0, "synth: sample rate must be positive");
  }
};

/// |<a, b>| / (|a| |b|) over the common prefix; 0 if either is silent.
inline double normalized_correlation(const Waveform& a, const Waveform& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ab += a.samples[i] * b.samples[i];
    aa += a.samples[i] * a.samples[i];
    bb += b.samples[i] * b.samples[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return std::abs(ab) / std::sqrt(aa * bb);
}

namespace detail {

inline double envelope(std::size_t i, std::size_t n, double attack, double rate) {
  const double t = static_cast<double>(i) / rate;
  const double rest = static_cast<double>(n - i) / rate;
  return std::min({1.0, t / attack, rest / attack}) * std::exp(-1.5 * t / (static_cast<double>(n) / rate));
}

inline void add_note(std::vector<double>& out, std::size_t start, std::size_t len, double f0, std::size_t harmonics, double amp,
                     double rate, Rng& rng) {
  const double nyquist = rate / 2.0;
  std::vector<double> phases(harmonics);
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    const double env = envelope(i, len, 0.01, rate);
    double v = 0.0;
    for (std::size_t h = 0; h < harmonics; ++h) {
      const double f = f0 * static_cast<double>(h + 1);
      if (f >= nyquist * 0.95) break;
      v += std::sin(2.0 * M_PI * f * t + phases[h]) / static_cast<double>(h + 1);
    }
    out[start + i] += amp * env * v;
  }
}

inline void add_chirp(std::vector<double>& out, std::size_t start, std::size_t len, double f_begin, double f_end, double amp,
                      double rate) {
  double phase = 0.0;
  for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(len);
    const double f = f_begin * std::pow(f_end / f_begin, frac);
    phase += 2.0 * M_PI * f / rate;
    out[start + i] += amp * envelope(i, len, 0.005, rate) * std::sin(phase);
  }
}

/// One-pole low-passed white noise; `smooth` in [0, 1) sets the colour.
inline void add_noise_burst(std::vector<double>& out, std::size_t start, std::size_t len, double smooth, double amp, double rate,
                            Rng& rng) {
  double state = 0.0;
  for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
    state = smooth * state + (1.0 - smooth) * rng.normal();
    out[start + i] += amp * envelope(i, len, 0.003, rate) * state / std::sqrt(1.0 - smooth);
  }
}

inline double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

}  // namespace detail

/// Random sequence of overlapping events (harmonic notes, chords, chirps,
/// noise bursts, short silences), peak normalized to 0.9.
inline Waveform synth_audio(double seconds, double sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<double> out(n, 0.0);
  std::size_t cursor = 0;
  while (cursor < n) {
    const double kind = rng.uniform();
    const auto len = static_cast<std::size_t>(rng.uniform(0.1, 0.6) * sample_rate);
    const double amp = rng.uniform(0.3, 1.0);
    if (kind < 0.35) {
      detail::add_note(out, cursor, len, detail::log_uniform(rng, 110.0, 1600.0), 1 + rng.index(6), amp, sample_rate, rng);
    } else if (kind < 0.55) {
      const double root = detail::log_uniform(rng, 110.0, 800.0);
      static constexpr double kRatios[] = {1.0, 1.25, 1.5, 1.335, 1.6, 2.0};
      const std::size_t voices = 2 + rng.index(2);
      for (std::size_t v = 0; v < voices; ++v)
        detail::add_note(out, cursor, len, root * kRatios[rng.index(6)], 1 + rng.index(4), amp / static_cast<double>(voices),
                         sample_rate, rng);
    } else if (kind < 0.75) {
      detail::add_chirp(out, cursor, len, detail::log_uniform(rng, 200.0, 3500.0), detail::log_uniform(rng, 200.0, 3500.0), amp,
                        sample_rate);
    } else if (kind < 0.93) {
      detail::add_noise_burst(out, cursor, len, rng.uniform(0.0, 0.95), amp * 0.5, sample_rate, rng);
    } else {
      cursor += static_cast<std::size_t>(rng.uniform(0.05, 0.25) * sample_rate);
      continue;
    }
    cursor += static_cast<std::size_t>(static_cast<double>(len) * rng.uniform(0.4, 1.0));
  }
  const double peak = peak_abs(out);
  if (peak > 0.0)
    for (auto& v : out) v *= 0.9 / peak;
  return {std::move(out), sample_rate};
}

/// Deterministic corpus; audio i is drawn from the seed-derived stream i and
/// redrawn (next attempt stream) while it correlates too strongly with an
/// earlier audio.
inline std::vector<Waveform> generate(const SynthSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  std::vector<Waveform> corpus;
  corpus.reserve(spec.n_audios);
  for (std::size_t i = 0; i < spec.n_audios; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      require(attempt < 100, "synth: could not generate a distinguishable audio");
      Rng rng = root.derive(i).derive(attempt);
      const double seconds = rng.uniform(spec.min_duration, spec.max_duration);
      Waveform w = synth_audio(seconds, spec.sample_rate, rng);
      bool distinct = true;
      for (const auto& prev : corpus)
        if (normalized_correlation(prev, w) >= spec.max_correlation) {
          distinct = false;
          break;
        }
      if (distinct) {
        corpus.push_back(std::move(w));
        break;
      }
    }
  }
  return corpus;
}

/// Alternating pure tone and silence blocks, starting with the tone.
inline Waveform tone_silence_alternation(double tone_seconds, double silence_seconds, std::size_t cycles, double freq = 440.0,
                                         double sample_rate = 8000.0) {
  std::vector<double> out;
  const auto tone = static_cast<std::size_t>(std::llround(tone_seconds * sample_rate));
  const auto gap = static_cast<std::size_t>(std::llround(silence_seconds * sample_rate));
  for (std::size_t c = 0; c < cycles; ++c) {
    for (std::size_t i = 0; i < tone; ++i) out.push_back(0.8 * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sample_rate));
    out.insert(out.end(), gap, 0.0);
  }
  return {std::move(out), sample_rate};
}

/// Alternating pure tone and white noise blocks, starting with the tone.
inline Waveform tone_noise_alternation(double tone_seconds, double noise_seconds, std::size_t cycles, std::uint64_t seed,
                                       double freq = 440.0, double sample_rate = 8000.0) {
  Rng rng(seed);
  std::vector<double> out;
  const auto tone = static_cast<std::size_t>(std::llround(tone_seconds * sample_rate));
  const auto noise = static_cast<std::size_t>(std::llround(noise_seconds * sample_rate));
  for (std::size_t c = 0; c < cycles; ++c) {
    for (std::size_t i = 0; i < tone; ++i) out.push_back(0.8 * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sample_rate));
    for (std::size_t i = 0; i < noise; ++i) out.push_back(0.3 * rng.normal());
  }
  return {std::move(out), sample_rate};
}

}  // namespace vlafp
