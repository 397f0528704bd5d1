#include "test_util.hpp"

using namespace vlafp;
using Catch::Approx;

namespace {

std::vector<double> naive_convolve(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

double snr_db(const Waveform& clean, const Waveform& mixed) {
  std::vector<double> noise(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) noise[i] = mixed.samples[i] - clean.samples[i];
  return 10.0 * std::log10(mean_power(clean.samples) / mean_power(noise));
}

}  // namespace

TEST_CASE("time stretch output length") {
  const double hop = 256.0;
  const auto one = time_stretch(testing::sine(440.0, 1.0), 1.0);
  REQUIRE(std::abs(static_cast<double>(one.size()) - 8000.0) <= hop);
  const auto fast = time_stretch(testing::sine(440.0, 3.0), 1.5);
  REQUIRE(std::abs(static_cast<double>(fast.size()) - 16000.0) <= hop);
  const auto slow = time_stretch(testing::sine(440.0, 1.0), 0.8);
  REQUIRE(std::abs(static_cast<double>(slow.size()) - 10000.0) <= hop);
  for (double f : {0.8, 0.93, 1.1, 1.2}) {
    const auto w = testing::white_noise(2.0, 3);
    REQUIRE(std::abs(static_cast<double>(time_stretch(w, f).size()) - 16000.0 / f) <= hop);
  }
  REQUIRE_THROWS_AS(time_stretch(one, 0.0), Error);
}

TEST_CASE("identity stretch keeps a tone's pitch and level") {
  const auto w = testing::sine(1000.0, 1.0);
  const auto out = time_stretch(w, 1.0);
  double err = 0.0;
  for (std::size_t i = 1024; i < 7000; ++i) err = std::max(err, std::abs(out.samples[i] - w.samples[i]));
  REQUIRE(err < 0.05);
}

TEST_CASE("stretched tone keeps its pitch") {
  const auto out = time_stretch(testing::sine(1000.0, 2.0), 1.2);
  const auto s = stft(out.slice(2048, 4096), 1024, 512);
  for (const auto& frame : s.frames) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < frame.size(); ++k)
      if (std::abs(frame[k]) > std::abs(frame[best])) best = k;
    REQUIRE(best == 128);
  }
}

TEST_CASE("mix_background realizes the requested snr") {
  const auto w = testing::sine(440.0, 1.0);
  const auto pool = synthetic_noise_pool(4, 2.0, 8);
  Rng rng(1);
  for (const auto& noise : pool)
    for (double snr : {1.0, 5.5, 10.0, -3.0}) REQUIRE(std::abs(snr_db(w, mix_background(w, noise, snr, rng).audio) - snr) < 0.1);
  const auto quiet = mix_background(w, pool[0], 60.0, rng).audio;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    num += (quiet.samples[i] - w.samples[i]) * (quiet.samples[i] - w.samples[i]);
    den += w.samples[i] * w.samples[i];
  }
  REQUIRE(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("mixing into silence flags an undefined snr") {
  const Waveform silent{std::vector<double>(800, 0.0), 8000.0};
  Rng rng(2);
  const auto r = mix_background(silent, testing::white_noise(0.5, 1), 5.0, rng);
  REQUIRE(r.snr_undefined);
  REQUIRE(mean_power(r.audio.samples) > 0.0);
}

TEST_CASE("fft convolution matches the direct sum") {
  Rng rng(4);
  for (std::size_t trial = 0; trial < 6; ++trial) {
    std::vector<double> a(1 + rng.index(3000)), b(1 + rng.index(900));
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const auto fast = fft_convolve(a, b);
    const auto ref = naive_convolve(a, b);
    REQUIRE(fast.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::abs(fast[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("convolve_ir against the direct oracle") {
  const auto w = testing::white_noise(0.5, 9);
  const auto ir = synthetic_ir_pool(1, 5)[0];
  const auto out = convolve_ir(w, ir);
  auto ref = naive_convolve(w.samples, ir.samples);
  ref.resize(w.size());
  const double scale = peak_abs(w.samples) / peak_abs(ref);
  REQUIRE(out.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(std::abs(out.samples[i] - scale * ref[i]) < 1e-6);
}

TEST_CASE("impulse responses that are pure delays") {
  const auto w = testing::sine(300.0, 0.2);
  const auto same = convolve_ir(w, Waveform{{1.0}, 8000.0});
  for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(same.samples[i] == Approx(w.samples[i]).margin(1e-12));
  Waveform delay{std::vector<double>(11, 0.0), 8000.0};
  delay.samples[10] = 1.0;
  const auto shifted = convolve_ir(w, delay);
  for (std::size_t i = 0; i < 10; ++i) REQUIRE(std::abs(shifted.samples[i]) < 1e-12);
  for (std::size_t i = 10; i < w.size(); ++i) REQUIRE(shifted.samples[i] == Approx(w.samples[i - 10]).margin(1e-12));
}

TEST_CASE("augment chain") {
  AugmentConfig cfg;
  cfg.bg_pool = synthetic_noise_pool(3, 1.0, 1);
  cfg.ir_pool = synthetic_ir_pool(3, 2);
  const auto w = testing::sine(500.0, 1.0);

  SECTION("defaults draw snr from 1 to 10 dB and stretch from 0.8 to 1.2") {
    REQUIRE(cfg.snr_range_db == std::pair(1.0, 10.0));
    REQUIRE(cfg.ts_range == std::pair(0.8, 1.2));
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      AugmentDraw d;
      augment_chain(testing::sine(500.0, 0.3), cfg, rng, &d);
      REQUIRE(*d.snr_db >= 1.0);
      REQUIRE(*d.snr_db <= 10.0);
      REQUIRE(*d.stretch >= 0.8);
      REQUIRE(*d.stretch <= 1.2);
    }
  }
  SECTION("all stages disabled is the identity") {
    set_stages(cfg, "none");
    Rng rng(1);
    REQUIRE(augment_chain(w, cfg, rng).samples == w.samples);
  }
  SECTION("same seed gives identical output") {
    Rng a(7), b(7);
    REQUIRE(augment_chain(w, cfg, a).samples == augment_chain(w, cfg, b).samples);
  }
  SECTION("without time stretch the length is preserved") {
    set_stages(cfg, "bg,ir");
    REQUIRE_FALSE(cfg.enable_ts);
    Rng rng(5);
    AugmentDraw d;
    REQUIRE(augment_chain(w, cfg, rng, &d).size() == w.size());
    REQUIRE_FALSE(d.stretch.has_value());
    REQUIRE(d.ir_index.has_value());
  }
  SECTION("stage lists are validated") {
    REQUIRE_THROWS_AS(set_stages(cfg, "ts,xx"), Error);
    cfg.bg_pool.clear();
    Rng rng(1);
    REQUIRE_THROWS_AS(augment_chain(w, cfg, rng), Error);
  }
}

TEST_CASE("synthetic pools are deterministic and well formed") {
  const auto a = synthetic_noise_pool(8, 1.0, 4), b = synthetic_noise_pool(8, 1.0, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].samples == b[i].samples);
    REQUIRE(peak_abs(a[i].samples) == Approx(0.5));
  }
  for (const auto& ir : synthetic_ir_pool(8, 3)) {
    REQUIRE(ir.samples[0] == 1.0);
    REQUIRE(ir.duration() <= 0.4);
  }
}
