#include "test_util.hpp"

using namespace vlafp;
using Catch::Approx;

namespace {

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t)
      out[k] += x[t] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n));
  return out;
}

}  // namespace

TEST_CASE("fft matches a naive DFT for power-of-two and odd sizes") {
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 8u, 15u, 64u, 100u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto y = x;
    fft_plan(n).forward(y);
    const auto ref = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) REQUIRE(std::abs(y[k] - ref[k]) < 1e-9);
    fft_plan(n).inverse(y);
    for (std::size_t k = 0; k < n; ++k) REQUIRE(std::abs(y[k] - x[k]) < 1e-12);
  }
}

TEST_CASE("stft frame count") {
  const Waveform w{std::vector<double>(8000, 0.1), 8000.0};
  REQUIRE(stft(w, 1024, 256).n_frames() == 28);
  REQUIRE(stft(w, 1024, 256).n_bins() == 513);
  const Waveform zeros{std::vector<double>(1024, 0.0), 8000.0};
  const auto z = stft(zeros, 1024, 256);
  REQUIRE(z.n_frames() == 1);
  for (const auto& x : z.frames[0]) REQUIRE(std::abs(x) == 0.0);
}

TEST_CASE("1 kHz tone peaks at bin 128 in every frame") {
  const auto s = stft(testing::sine(1000.0, 1.0), 1024, 256);
  for (const auto& frame : s.frames) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < frame.size(); ++k)
      if (std::abs(frame[k]) > std::abs(frame[best])) best = k;
    REQUIRE(best == 128);
  }
}

TEST_CASE("spectral entropy closed forms") {
  std::vector<std::complex<double>> frame(16, 0.0);
  frame[3] = 2.0;
  REQUIRE(spectral_entropy(frame) == 0.0);
  frame[5] = 2.0;
  REQUIRE(spectral_entropy(frame) == Approx(std::log(2.0)).epsilon(1e-12));
  std::vector<std::complex<double>> flat(40, std::complex<double>(0.3, 0.4));
  REQUIRE(spectral_entropy(flat) == Approx(std::log(40.0)).epsilon(1e-12));
  REQUIRE(spectral_entropy(std::vector<std::complex<double>>(8, 0.0)) == 0.0);
}

TEST_CASE("entropy series has one value per hop") {
  const auto w = testing::sine(300.0, 1.0);
  REQUIRE(spectral_entropy_series(w, 1024, 256).size() == 32);
}

TEST_CASE("mel spectrogram respects the 80 dB dynamic range") {
  MelConfig cfg;
  REQUIRE(cfg.n_mels == 256);
  REQUIRE(cfg.window == 1024);
  REQUIRE(cfg.hop == 256);
  REQUIRE(cfg.fmin == 300.0);
  REQUIRE(cfg.fmax == 4000.0);
  REQUIRE(cfg.dynamic_range_db == 80.0);
  Waveform w = testing::sine(500.0, 1.0);
  const auto n = testing::white_noise(1.0, 3, 8000.0, 0.01);
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] += n.samples[i];
  const auto m = mel_spectrogram(w, cfg);
  REQUIRE(m.data.cols() == 256);
  REQUIRE(m.n_frames() == 28);
  REQUIRE(m.data.maxCoeff() - m.data.minCoeff() <= 80.0 + 1e-9);
}

TEST_CASE("mel spectrogram of silence is constant") {
  const Waveform w{std::vector<double>(4000, 0.0), 8000.0};
  const auto m = mel_spectrogram(w);
  REQUIRE(m.data.maxCoeff() == m.data.minCoeff());
}

TEST_CASE("mel filterbank rows are triangles inside the band") {
  const auto fb = mel_filterbank(32, 1024, 8000.0, 300.0, 4000.0);
  REQUIRE(fb.rows() == 32);
  REQUIRE(fb.cols() == 513);
  REQUIRE(fb.minCoeff() >= 0.0);
  for (Eigen::Index r = 0; r < fb.rows(); ++r) REQUIRE(fb.row(r).maxCoeff() > 0.0);
  const double bin_hz = 8000.0 / 1024.0;
  for (Eigen::Index k = 0; k < fb.cols(); ++k)
    if (static_cast<double>(k) * bin_hz < 300.0 - bin_hz || static_cast<double>(k) * bin_hz > 4000.0 + bin_hz)
      REQUIRE(fb.col(k).maxCoeff() == 0.0);
}

TEST_CASE("frame rms in dB relative to the peak") {
  Waveform w{std::vector<double>(256 * 3, 1.0), 8000.0};
  for (std::size_t i = 256; i < 512; ++i) w.samples[i] = 0.001;
  for (std::size_t i = 512; i < 768; ++i) w.samples[i] = 0.0;
  const auto db = frame_rms_db(w, 256);
  REQUIRE(db.size() == 3);
  REQUIRE(db[0] == Approx(0.0).margin(1e-12));
  REQUIRE(db[1] == Approx(-60.0).epsilon(1e-12));
  REQUIRE(std::isinf(db[2]));
  REQUIRE(db[2] < 0.0);
}

TEST_CASE("features are standardized per excerpt") {
  const auto f = segment_features<double>(testing::sine(700.0, 0.5), mel_config_for(ModelConfig{}));
  REQUIRE(f.cols() == 64);
  REQUIRE(std::abs(f.mean()) < 1e-9);
  REQUIRE(std::sqrt((f.array() - f.mean()).square().mean()) == Approx(1.0).epsilon(1e-9));
  const auto tiny = segment_features<float>(Waveform{std::vector<double>(300, 0.1), 8000.0}, mel_config_for(ModelConfig{}));
  REQUIRE(tiny.rows() == 1);
}
