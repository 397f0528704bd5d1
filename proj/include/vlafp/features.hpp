#pragma once

#include "vlafp/dsp.hpp"
#include "vlafp/model.hpp"

namespace vlafp {

/// Mel front end whose band count matches the model input width.
inline MelConfig mel_config_for(const ModelConfig& cfg) {
  MelConfig m;
  m.n_mels = cfg.f_bins;
  return m;
}

/// Model input for one audio excerpt: log-mel rescaled to [0, 1] by
/// (dB - max) / dynamic_range + 1, then standardized to zero mean and unit
/// variance over the whole excerpt. Excerpts shorter than one STFT window
/// are zero padded.
template <typename T = float>
Matrix<T> segment_features(const Waveform& w, const MelConfig& cfg) {
  Waveform padded = w;
  if (padded.size() < cfg.window) padded.samples.resize(cfg.window, 0.0);
  const auto mel = mel_spectrogram(padded, cfg);
  const double top = mel.data.maxCoeff();
  Matrix<double> x = ((mel.data.array() - top) / cfg.dynamic_range_db + 1.0).matrix();
  const double mean = x.mean();
  const double sd = std::sqrt((x.array() - mean).square().mean());
  x = ((x.array() - mean) / std::max(sd, 1e-6)).matrix();
  return x.template cast<T>();
}

}  // namespace vlafp
