#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "vlafp/dsp.hpp"

namespace vlafp {

namespace detail {

inline std::vector<double> inverse_one_sided(const Spectrum& half, std::size_t window) {
  std::vector<std::complex<double>> full(window);
  for (std::size_t k = 0; k < half.size(); ++k) full[k] = half[k];
  for (std::size_t k = 1; k < window / 2; ++k) full[window - k] = std::conj(half[k]);
  fft_plan(window).inverse(full);
  std::vector<double> out(window);
  for (std::size_t i = 0; i < window; ++i) out[i] = full[i].real();
  return out;
}

inline double wrap_phase(double x) { return x - 2.0 * M_PI * std::round(x / (2.0 * M_PI)); }

}  // namespace detail

/// Phase-vocoder time stretch. factor > 1 speeds up; output length is
/// round(len / factor).
inline Waveform time_stretch(const Waveform& w, double factor, std::size_t window = 1024, std::size_t hop = 256) {
  require(factor > 0.0, "time_stretch: factor must be positive");
  require(factor >= 0.5 && factor <= 2.0, "time_stretch: factor must lie in [0.5, 2.0]");
  if (w.empty()) return w;
  const std::size_t n = w.size();
  const std::size_t pad = window / 2;
  std::vector<double> padded(n + 2 * pad + window, 0.0);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));
  const std::size_t frames = (n + 2 * pad - window + hop - 1) / hop + 1;
  std::vector<Spectrum> spectra(frames);
  for (std::size_t t = 0; t < frames; ++t) spectra[t] = windowed_spectrum(padded, t * hop, window);

  const std::size_t bins = window / 2 + 1;
  std::vector<double> phase(bins), omega(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    phase[k] = std::arg(spectra[0][k]);
    omega[k] = 2.0 * M_PI * static_cast<double>(k) * static_cast<double>(hop) / static_cast<double>(window);
  }

  std::vector<Spectrum> stretched;
  const Spectrum zeros(bins);
  for (double t = 0.0; t < static_cast<double>(frames); t += factor) {
    const auto i = static_cast<std::size_t>(t);
    const double a = t - static_cast<double>(i);
    const Spectrum& x0 = spectra[i];
    const Spectrum& x1 = i + 1 < frames ? spectra[i + 1] : zeros;
    Spectrum frame(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag = (1.0 - a) * std::abs(x0[k]) + a * std::abs(x1[k]);
      frame[k] = std::polar(mag, phase[k]);
      const double dphi = detail::wrap_phase(std::arg(x1[k]) - std::arg(x0[k]) - omega[k]);
      phase[k] += omega[k] + dphi;
    }
    stretched.push_back(std::move(frame));
  }

  const auto& hann = cached_hann(window);
  std::vector<double> y((stretched.size() - 1) * hop + window, 0.0), wsum(y.size(), 0.0);
  for (std::size_t t = 0; t < stretched.size(); ++t) {
    const auto block = detail::inverse_one_sided(stretched[t], window);
    for (std::size_t i = 0; i < window; ++i) {
      y[t * hop + i] += block[i] * hann[i];
      wsum[t * hop + i] += hann[i] * hann[i];
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i)
    if (wsum[i] > 1e-8) y[i] /= wsum[i];

  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) / factor));
  Waveform out{std::vector<double>(target, 0.0), w.sample_rate};
  for (std::size_t i = 0; i < target && pad + i < y.size(); ++i) out.samples[i] = y[pad + i];
  return out;
}

struct MixResult {
  Waveform audio;
  bool snr_undefined = false;  // input was silent; output is the scaled noise alone
};

/// Adds a random excerpt of `noise` (looped to length) scaled so that
/// 10 log10(P_signal / P_noise) == snr_db.
inline MixResult mix_background(const Waveform& w, const Waveform& noise, double snr_db, Rng& rng) {
  require(std::isfinite(snr_db), "mix_background: snr_db must be finite");
  require(!noise.empty(), "mix_background: empty noise");
  std::vector<double> excerpt(w.size());
  const std::size_t offset = rng.index(noise.size());
  for (std::size_t i = 0; i < w.size(); ++i) excerpt[i] = noise.samples[(offset + i) % noise.size()];
  const double p_noise = mean_power(excerpt);
  require(w.empty() || p_noise > 0.0, "mix_background: noise excerpt is silent");
  const double p_signal = mean_power(w.samples);
  MixResult out{w, p_signal <= 0.0};
  if (w.empty()) return out;
  const double reference = out.snr_undefined ? 1.0 : p_signal;
  const double gain = std::sqrt(reference / (p_noise * std::pow(10.0, snr_db / 10.0)));
  for (std::size_t i = 0; i < w.size(); ++i) out.audio.samples[i] += gain * excerpt[i];
  return out;
}

/// Linear convolution of two real sequences via one complex FFT of a + ib.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t full = a.size() + b.size() - 1;
  const std::size_t n = next_power_of_two(full);
  std::vector<std::complex<double>> z(n);
  for (std::size_t i = 0; i < a.size(); ++i) z[i].real(a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) z[i].imag(b[i]);
  const auto& plan = fft_plan(n);
  plan.forward(z);
  std::vector<std::complex<double>> prod(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto zk = z[k];
    const auto zc = std::conj(z[(n - k) % n]);
    const double ar = 0.5 * (zk.real() + zc.real()), ai = 0.5 * (zk.imag() + zc.imag());
    const double br = 0.5 * (zk.imag() - zc.imag()), bi = -0.5 * (zk.real() - zc.real());
    prod[k] = {ar * br - ai * bi, ar * bi + ai * br};
  }
  plan.inverse(prod);
  std::vector<double> out(full);
  for (std::size_t i = 0; i < full; ++i) out[i] = prod[i].real();
  return out;
}

/// Convolves with `ir`, truncates to the input length and rescales so the
/// output peak equals the input peak.
inline Waveform convolve_ir(const Waveform& w, const Waveform& ir) {
  require(!ir.empty(), "convolve_ir: empty impulse response");
  if (w.empty()) return w;
  auto full = fft_convolve(w.samples, ir.samples);
  full.resize(w.size());
  const double peak_in = peak_abs(w.samples);
  const double peak_out = peak_abs(full);
  if (peak_out > 0.0)
    for (auto& v : full) v *= peak_in / peak_out;
  return {std::move(full), w.sample_rate};
}

struct AugmentConfig {
  bool enable_ts = true;
  bool enable_bg = true;
  bool enable_ir = true;
  std::pair<double, double> ts_range{0.8, 1.2};
  std::pair<double, double> snr_range_db{1.0, 10.0};
  std::vector<Waveform> bg_pool;
  std::vector<Waveform> ir_pool;

  void validate() const {
    require(ts_range.first > 0.0 && ts_range.first <= ts_range.second, "augment: invalid time-stretch range");
    require(snr_range_db.first <= snr_range_db.second, "augment: snr range must be ordered");
    require(!enable_bg || !bg_pool.empty(), "augment: background stage enabled with an empty pool");
    require(!enable_ir || !ir_pool.empty(), "augment: impulse-response stage enabled with an empty pool");
  }

  bool any() const { return enable_ts || enable_bg || enable_ir; }
};

/// Parameters drawn by one augment_chain call.
struct AugmentDraw {
  std::optional<double> stretch;
  std::optional<std::size_t> noise_index;
  std::optional<double> snr_db;
  std::optional<std::size_t> ir_index;
};

/// TS -> BG -> IR, each stage only if enabled, parameters drawn from rng.
inline Waveform augment_chain(const Waveform& w, const AugmentConfig& cfg, Rng& rng, AugmentDraw* draw = nullptr) {
  cfg.validate();
  AugmentDraw local;
  Waveform out = w;
  if (cfg.enable_ts) {
    local.stretch = rng.uniform(cfg.ts_range.first, cfg.ts_range.second);
    out = time_stretch(out, *local.stretch);
  }
  if (cfg.enable_bg) {
    local.noise_index = rng.index(cfg.bg_pool.size());
    local.snr_db = rng.uniform(cfg.snr_range_db.first, cfg.snr_range_db.second);
    out = mix_background(out, cfg.bg_pool[*local.noise_index], *local.snr_db, rng).audio;
  }
  if (cfg.enable_ir) {
    local.ir_index = rng.index(cfg.ir_pool.size());
    out = convolve_ir(out, cfg.ir_pool[*local.ir_index]);
  }
  if (draw) *draw = local;
  return out;
}

/// Parses "ts,bg,ir" style stage lists ("none" disables all).
inline void set_stages(AugmentConfig& cfg, const std::string& list) {
  bool ts = false, bg = false, ir = false;
  if (list != "none" && !list.empty()) {
    std::size_t begin = 0;
    while (begin <= list.size()) {
      const std::size_t end = std::min(list.find(',', begin), list.size());
      const std::string stage = list.substr(begin, end - begin);
      if (stage == "ts") ts = true;
      else if (stage == "bg") bg = true;
      else if (stage == "ir") ir = true;
      else throw Error("unknown augmentation stage: " + stage);
      begin = end + 1;
    }
  }
  cfg.enable_ts = ts;
  cfg.enable_bg = bg;
  cfg.enable_ir = ir;
}

/// Colored background noises (white, pink, brown, hum) for desk-scale runs.
inline std::vector<Waveform> synthetic_noise_pool(std::size_t count, double seconds, std::uint64_t seed, double sample_rate = 8000.0) {
  std::vector<Waveform> pool;
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng(seed).derive(i);
    Waveform w{std::vector<double>(n), sample_rate};
    switch (i % 4) {
      case 0:
        for (auto& s : w.samples) s = rng.normal();
        break;
      case 1: {  // pink via Paul Kellet's filter
        double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
        for (auto& s : w.samples) {
          const double white = rng.normal();
          b0 = 0.99886 * b0 + white * 0.0555179;
          b1 = 0.99332 * b1 + white * 0.0750759;
          b2 = 0.96900 * b2 + white * 0.1538520;
          b3 = 0.86650 * b3 + white * 0.3104856;
          b4 = 0.55000 * b4 + white * 0.5329522;
          b5 = -0.7616 * b5 - white * 0.0168980;
          s = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
          b6 = white * 0.115926;
        }
        break;
      }
      case 2: {  // brown, leaky integrator
        double acc = 0.0;
        for (auto& s : w.samples) {
          acc = 0.995 * acc + rng.normal();
          s = acc;
        }
        break;
      }
      default: {  // mains-like hum with harmonics over a noise floor
        const double f0 = rng.uniform(50.0, 120.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double t = static_cast<double>(k) / sample_rate;
          double v = 0.3 * rng.normal();
          for (int h = 1; h <= 4; ++h) v += std::sin(2.0 * M_PI * f0 * h * t) / h;
          w.samples[k] = v;
        }
      }
    }
    const double peak = peak_abs(w.samples);
    for (auto& s : w.samples) s *= 0.5 / peak;
    pool.push_back(std::move(w));
  }
  return pool;
}

/// Exponentially decaying random room responses with a direct path at t=0.
inline std::vector<Waveform> synthetic_ir_pool(std::size_t count, std::uint64_t seed, double sample_rate = 8000.0) {
  std::vector<Waveform> pool;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng(seed).derive(i);
    const double rt60 = rng.uniform(0.05, 0.4);
    const auto n = static_cast<std::size_t>(rt60 * sample_rate);
    const double decay = 6.9078 / (rt60 * sample_rate);  // ln(1000): -60 dB at rt60
    Waveform ir{std::vector<double>(std::max<std::size_t>(n, 1), 0.0), sample_rate};
    ir.samples[0] = 1.0;
    const double tail_gain = rng.uniform(0.1, 0.5);
    for (std::size_t k = 1; k < ir.size(); ++k) ir.samples[k] = tail_gain * rng.normal() * std::exp(-decay * static_cast<double>(k));
    pool.push_back(std::move(ir));
  }
  return pool;
}

}  // namespace vlafp
