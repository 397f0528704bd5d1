#include "test_util.hpp"

using namespace vlafp;

TEST_CASE("generation is deterministic") {
  SynthSpec spec;
  spec.n_audios = 4;
  const auto a = generate(spec), b = generate(spec);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].samples == b[i].samples);
  spec.seed = 8;
  REQUIRE(generate(spec)[0].samples != a[0].samples);
}

TEST_CASE("default desk corpus") {
  const SynthSpec spec;
  REQUIRE(spec.n_audios == 50);
  REQUIRE(spec.min_duration == 10.0);
  REQUIRE(spec.max_duration == 10.0);
  const auto c = generate(spec);
  REQUIRE(c.size() == 50);
  for (const auto& w : c) {
    REQUIRE(w.duration() == 10.0);
    REQUIRE(w.sample_rate == 8000.0);
    REQUIRE(peak_abs(w.samples) <= 0.9 + 1e-12);
  }
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j) REQUIRE(normalized_correlation(c[i], c[j]) < 0.5);
}

TEST_CASE("duration range") {
  SynthSpec spec;
  spec.n_audios = 10;
  spec.min_duration = 2.0;
  spec.max_duration = 6.0;
  for (const auto& w : generate(spec)) {
    REQUIRE(w.duration() >= 2.0);
    REQUIRE(w.duration() <= 6.0);
  }
  spec.n_audios = 0;
  REQUIRE_THROWS_AS(generate(spec), Error);
}

TEST_CASE("correlation oracle") {
  const auto a = testing::sine(440.0, 1.0);
  REQUIRE(normalized_correlation(a, a) == Catch::Approx(1.0));
  Waveform neg = a;
  for (auto& v : neg.samples) v = -v;
  REQUIRE(normalized_correlation(a, neg) == Catch::Approx(1.0));
  REQUIRE(normalized_correlation(a, testing::sine(1234.0, 1.0)) < 0.05);
}

TEST_CASE("alternation signals") {
  const auto w = tone_silence_alternation(1.0, 2.0, 2);
  REQUIRE(w.size() == 48000);
  for (std::size_t i = 8000; i < 24000; ++i) REQUIRE(w.samples[i] == 0.0);
  REQUIRE(peak_abs(std::span(w.samples).subspan(0, 8000)) > 0.7);
  const auto n = tone_noise_alternation(1.0, 1.0, 3, 4);
  REQUIRE(n.size() == 48000);
  REQUIRE(tone_noise_alternation(1.0, 1.0, 3, 4).samples == n.samples);
}
