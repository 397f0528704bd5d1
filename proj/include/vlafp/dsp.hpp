#pragma once

#include <complex>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "vlafp/audio.hpp"
#include "vlafp/fft.hpp"
#include "vlafp/matrix.hpp"

namespace vlafp {

inline constexpr double kEpsilon = 1e-12;

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline const std::vector<double>& cached_hann(std::size_t n) {
  thread_local std::map<std::size_t, std::vector<double>> cache;
  auto& w = cache[n];
  if (w.size() != n) w = hann_window(n);
  return w;
}

using Spectrum = std::vector<std::complex<double>>;

struct StftFrameSeq {
  std::vector<Spectrum> frames;
  std::size_t window_size = 0;
  std::size_t hop = 0;
  double sample_rate = 0.0;

  std::size_t n_frames() const { return frames.size(); }
  std::size_t n_bins() const { return window_size / 2 + 1; }
};

/// One-sided spectrum of the Hann-windowed block starting at `begin`,
/// zero padded past the end of the signal.
inline Spectrum windowed_spectrum(std::span<const double> x, std::size_t begin, std::size_t window) {
  const auto& hann = cached_hann(window);
  std::vector<std::complex<double>> buf(window);
  for (std::size_t i = 0; i < window; ++i) {
    const std::size_t k = begin + i;
    buf[i] = k < x.size() ? x[k] * hann[i] : 0.0;
  }
  fft_plan(window).forward(buf);
  buf.resize(window / 2 + 1);
  return buf;
}

inline std::size_t stft_frame_count(std::size_t n, std::size_t window, std::size_t hop) {
  return n >= window ? (n - window) / hop + 1 : 1;
}

/// Non-centered STFT: frame i covers samples [i*hop, i*hop + window).
inline StftFrameSeq stft(const Waveform& w, std::size_t window_size, std::size_t hop) {
  require(hop > 0 && window_size >= hop, "stft: need window_size >= hop > 0");
  require(!w.empty(), "stft: empty input");
  StftFrameSeq out;
  out.window_size = window_size;
  out.hop = hop;
  out.sample_rate = w.sample_rate;
  const std::size_t count = stft_frame_count(w.size(), window_size, hop);
  out.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.frames.push_back(windowed_spectrum(w.samples, i * hop, window_size));
  return out;
}

/// Shannon entropy (nats) of the normalized power distribution |X_i|^2.
inline double spectral_entropy(std::span<const std::complex<double>> frame) {
  require(!frame.empty(), "spectral_entropy: empty frame");
  double total = 0.0;
  for (const auto& x : frame) total += std::norm(x);
  if (total < kEpsilon) return 0.0;
  double h = 0.0;
  for (const auto& x : frame) {
    const double p = std::norm(x) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

/// Spectral entropy of every hop-sized frame of `w`; frame j is analysed
/// with the window starting at j*hop, so there are ceil(n/hop) frames.
inline std::vector<double> spectral_entropy_series(const Waveform& w, std::size_t window, std::size_t hop) {
  require(hop > 0 && window >= hop, "spectral_entropy_series: need window >= hop > 0");
  const std::size_t n = (w.size() + hop - 1) / hop;
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = spectral_entropy(windowed_spectrum(w.samples, j * hop, window));
  return out;
}

struct MelConfig {
  std::size_t n_mels = 256;
  std::size_t window = 1024;
  std::size_t hop = 256;
  double fmin = 300.0;
  double fmax = 4000.0;
  double dynamic_range_db = 80.0;
};

struct MelSpectrogram {
  Matrix<double> data;  // T x F, dB
  std::size_t n_mels = 0;
  double fmin = 0.0;
  double fmax = 0.0;

  std::size_t n_frames() const { return static_cast<std::size_t>(data.rows()); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// HTK-style triangular filters with unit peak; F x (window/2 + 1).
inline Matrix<double> mel_filterbank(std::size_t n_mels, std::size_t window, double sample_rate, double fmin, double fmax) {
  require(n_mels >= 1, "mel_filterbank: need at least one band");
  require(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0, "mel_filterbank: need 0 <= fmin < fmax <= sample_rate/2");
  const std::size_t bins = window / 2 + 1;
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  edges.front() = fmin;
  edges.back() = fmax;
  Matrix<double> fb = Matrix<double>::Zero(static_cast<Eigen::Index>(n_mels), static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(window);
      double v = 0.0;
      if (f > lo && f <= center) v = (f - lo) / (center - lo);
      else if (f > center && f < hi) v = (hi - f) / (hi - center);
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return fb;
}

/// Mel band centre frequencies in Hz.
inline std::vector<double> mel_centers(std::size_t n_mels, double fmin, double fmax) {
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  std::vector<double> c(n_mels);
  for (std::size_t i = 0; i < n_mels; ++i)
    c[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i + 1) / static_cast<double>(n_mels + 1));
  return c;
}

inline const Matrix<double>& cached_filterbank(const MelConfig& cfg, double sample_rate) {
  struct Entry {
    MelConfig cfg;
    double rate;
    Matrix<double> fb;
  };
  thread_local std::deque<Entry> cache;
  for (const auto& e : cache)
    if (e.rate == sample_rate && e.cfg.n_mels == cfg.n_mels && e.cfg.window == cfg.window && e.cfg.fmin == cfg.fmin &&
        e.cfg.fmax == cfg.fmax)
      return e.fb;
  cache.push_back({cfg, sample_rate, mel_filterbank(cfg.n_mels, cfg.window, sample_rate, cfg.fmin, cfg.fmax)});
  return cache.back().fb;
}

/// Log-mel spectrogram: power STFT -> mel filterbank -> dB, floored at
/// (max - dynamic range).
inline MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {}) {
  require(cfg.fmin < cfg.fmax && cfg.fmax <= w.sample_rate / 2.0, "mel_spectrogram: need fmin < fmax <= sample_rate/2");
  require(w.size() >= cfg.hop, "mel_spectrogram: waveform shorter than one hop");
  const auto& fb = cached_filterbank(cfg, w.sample_rate);
  const std::size_t frames = stft_frame_count(w.size(), cfg.window, cfg.hop);
  const std::size_t bins = cfg.window / 2 + 1;
  Matrix<double> power(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
  for (std::size_t t = 0; t < frames; ++t) {
    const auto spec = windowed_spectrum(w.samples, t * cfg.hop, cfg.window);
    for (std::size_t k = 0; k < bins; ++k) power(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = std::norm(spec[k]);
  }
  MelSpectrogram out;
  out.n_mels = cfg.n_mels;
  out.fmin = cfg.fmin;
  out.fmax = cfg.fmax;
  out.data = power * fb.transpose();
  out.data = out.data.unaryExpr([](double p) { return 10.0 * std::log10(p + kEpsilon); });
  const double floor_db = out.data.maxCoeff() - cfg.dynamic_range_db;
  out.data = out.data.cwiseMax(floor_db);
  return out;
}

/// Per-frame RMS level in dB relative to the waveform's peak absolute
/// sample. Frames are consecutive blocks of `frame_len` samples (last one
/// may be short); a zero-energy frame reports -infinity.
inline std::vector<double> frame_rms_db(const Waveform& w, std::size_t frame_len) {
  require(frame_len > 0, "frame_rms_db: frame_len must be positive");
  const double peak = peak_abs(w.samples);
  const std::size_t n = (w.size() + frame_len - 1) / frame_len;
  std::vector<double> out(n, -kInf);
  if (peak <= 0.0) return out;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t begin = j * frame_len;
    const std::size_t len = std::min(frame_len, w.size() - begin);
    const double rms = std::sqrt(mean_power(std::span(w.samples).subspan(begin, len)));
    out[j] = rms > 0.0 ? std::min(0.0, 20.0 * std::log10(rms / peak)) : -kInf;
  }
  return out;
}

}  // namespace vlafp
