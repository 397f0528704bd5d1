// Segments a small synthetic corpus, fingerprints it with an untrained
// desk-scale model and looks up a distorted excerpt.
#include <iostream>

#include "vlafp/vlafp.hpp"

int main() {
  using namespace vlafp;

  SynthSpec spec;
  spec.n_audios = 8;
  spec.min_duration = spec.max_duration = 6.0;
  const auto corpus = generate(spec);

  SegmenterConfig seg;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto segs = segment(corpus[i], seg, i);
    std::cout << "audio " << i << ": " << segs.size() << " segments, first " << segs.front().duration << " s\n";
  }

  Fingerprinter<float> fp;
  Rng rng(1);
  fp.weights = init_weights<float>(fp.config, rng);

  SegmenterConfig fixed;
  fixed.method = SegmentMethod::Fixed;
  std::vector<std::uint64_t> ids(corpus.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  FingerprintIndex index(fp.config.d);
  index_audios(index, fp, corpus, ids, fixed);
  std::cout << "indexed " << index.size() << " fingerprints, " << FingerprintIndex::file_size(index.size(), index.dim())
            << " bytes on disk\n";

  AugmentConfig aug;
  aug.enable_ts = false;
  aug.bg_pool = synthetic_noise_pool(4, 5.0, 2);
  aug.ir_pool = synthetic_ir_pool(4, 3);
  Rng qrng(4);
  const std::vector<double> durations{3.0};
  const auto queries = make_dtr_queries(std::span(corpus).subspan(5, 1), std::span(ids).subspan(5, 1), durations, aug, qrng);
  const auto report = dtr_evaluate(index, fp, queries);
  const auto& q = report.queries.front();
  std::cout << "query from audio " << q.source_id << " (" << q.lookups << " lookups) -> audio " << q.vote.audio_id << " with "
            << q.vote.count << " votes\n";
}
