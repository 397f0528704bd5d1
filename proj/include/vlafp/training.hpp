#pragma once

#include <functional>
#include <iostream>
#include <sstream>

#include "vlafp/augment.hpp"
#include "vlafp/features.hpp"
#include "vlafp/model.hpp"
#include "vlafp/segmentation.hpp"

namespace vlafp {

struct TrainConfig {
  double tau = 0.05;
  std::size_t batch_size = 60;  // total items: anchors and their positives
  std::size_t n_pos = 3;
  double lr = 1e-5;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t threads = 1;

  std::size_t groups_per_batch() const { return std::max<std::size_t>(1, batch_size / (n_pos + 1)); }

  void validate() const {
    require(tau > 0.0, "train: tau must be positive");
    require(n_pos >= 1, "train: n_pos must be >= 1");
    require(batch_size >= n_pos + 1, "train: batch_size must hold at least one anchor group");
    require(lr >= 0.0, "train: learning rate must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: Adam betas must be in [0, 1)");
  }
};

/// Positive sets for consecutive groups of `group_size` items: each item's
/// positives are the other members of its group.
inline std::vector<std::vector<std::size_t>> group_positives(std::size_t n_groups, std::size_t group_size) {
  std::vector<std::vector<std::size_t>> pos(n_groups * group_size);
  for (std::size_t g = 0; g < n_groups; ++g)
    for (std::size_t i = 0; i < group_size; ++i)
      for (std::size_t j = 0; j < group_size; ++j)
        if (i != j) pos[g * group_size + i].push_back(g * group_size + j);
  return pos;
}

struct TrainingBatch {
  PackedBatch<float> packed;
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::size_t> sources;  // source segment index per anchor group
};

/// For each chosen source segment: the clean segment followed by n_pos
/// augmented copies. Item seeds are drawn from `rng` up front, so the result
/// does not depend on the thread count.
inline TrainingBatch build_batch(std::span<const Waveform> segments, std::span<const std::size_t> chosen, const TrainConfig& cfg,
                                 const AugmentConfig& aug, const MelConfig& mel, Rng& rng) {
  require(!segments.empty(), "build_batch: empty corpus");
  require(!chosen.empty(), "build_batch: no source segments chosen");
  const std::size_t group = cfg.n_pos + 1;
  const std::size_t items = chosen.size() * group;
  std::vector<std::uint64_t> seeds(items);
  for (auto& s : seeds) s = rng.next_u64();
  std::vector<Matrix<float>> feats(items);
  parallel_for(items, cfg.threads, [&](std::size_t i) {
    const auto src = chosen[i / group];
    require(src < segments.size(), "build_batch: source index out of range");
    if (i % group == 0) {
      feats[i] = segment_features<float>(segments[src], mel);
    } else {
      Rng item_rng(seeds[i]);
      feats[i] = segment_features<float>(augment_chain(segments[src], aug, item_rng), mel);
    }
  });
  TrainingBatch b;
  b.packed = pack_segments<float>(feats);
  b.positives = group_positives(chosen.size(), group);
  b.sources.assign(chosen.begin(), chosen.end());
  return b;
}

/// Draws distinct source segments and builds one batch. A corpus smaller
/// than the requested anchor count yields a smaller batch with a warning.
inline TrainingBatch sample_batch(std::span<const Waveform> segments, const TrainConfig& cfg, const AugmentConfig& aug,
                                  const MelConfig& mel, Rng& rng) {
  require(!segments.empty(), "sample_batch: empty corpus");
  std::size_t anchors = cfg.groups_per_batch();
  if (segments.size() < anchors) {
    std::cerr << "warning: corpus has " << segments.size() << " segments, fewer than " << anchors
              << " requested anchors; using a smaller batch\n";
    anchors = segments.size();
  }
  std::vector<std::size_t> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  order.resize(anchors);
  return build_batch(segments, order, cfg, aug, mel, rng);
}

template <typename T>
class Adam {
 public:
  Adam(const Weights<T>& like, const TrainConfig& cfg)
      : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), m_(zeros(like)), v_(zeros(like)) {}

  void step(Weights<T>& w, const Weights<T>& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(eps_);
    visit_weights(
        [&](const std::string&, Matrix<T>& p, const Matrix<T>& g, Matrix<T>& m, Matrix<T>& v) {
          m = b1 * m + (T(1) - b1) * g;
          v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
          p.array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + eps);
        },
        w, grad, m_, v_);
  }

  std::size_t steps() const { return t_; }

 private:
  static Weights<T> zeros(const Weights<T>& like) {
    Weights<T> z = like;
    visit_weights([](const std::string&, Matrix<T>& m) { m.setZero(); }, z);
    return z;
  }

  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Weights<T> m_, v_;
};

template <typename T>
struct LossAndGrad {
  T loss = 0;
  Weights<T> grad;
};

/// Summed SupCon loss of a packed batch and its parameter gradient.
template <typename T>
LossAndGrad<T> loss_and_gradient(const Weights<T>& weights, const ModelConfig& cfg, const PackedBatch<T>& batch,
                                 const std::vector<std::vector<std::size_t>>& positives, double tau) {
  batch.validate();
  ad::Tape<T> tape;
  const auto w = bind_weights(tape, weights, true);
  const auto z = forward(tape, w, cfg, tape.constant(batch.frames), batch.spans);
  const auto loss = ad::supcon(tape, z, positives, static_cast<T>(tau));
  tape.backward(loss);
  return {tape.value(loss)(0, 0), collect_gradients(tape, w)};
}

template <typename T>
std::string weight_norm_summary(const Weights<T>& w) {
  std::ostringstream os;
  bool first = true;
  visit_weights(
      [&](const std::string& name, const Matrix<T>& m) {
        os << (first ? "" : ", ") << name << '=' << static_cast<double>(m.norm());
        first = false;
      },
      w);
  return os.str();
}

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;  // summed batch loss / batch items, averaged over the epoch
  std::size_t batches = 0;
};

struct TrainResult {
  Weights<float> weights;
  std::vector<double> epoch_loss;
};

/// Adam over shuffled anchor groups; one epoch visits every source segment
/// once. Throws on a non-finite loss.
inline TrainResult train(std::span<const Waveform> segments, const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const AugmentConfig& aug, const Weights<float>* init = nullptr,
                         const std::function<void(const EpochReport&)>& on_epoch = {}) {
  cfg.validate();
  model_cfg.validate();
  require(!segments.empty(), "train: empty corpus");
  Rng rng(cfg.seed);
  TrainResult result;
  if (init) {
    result.weights = *init;
  } else {
    Rng init_rng = rng.derive(0);
    result.weights = init_weights<float>(model_cfg, init_rng);
  }
  const MelConfig mel = mel_config_for(model_cfg);
  Adam<float> adam(result.weights, cfg);
  Rng data_rng = rng.derive(1);
  std::size_t groups = cfg.groups_per_batch();
  if (segments.size() < groups) {
    std::cerr << "warning: corpus has " << segments.size() << " segments, fewer than " << groups
              << " requested anchors; using a smaller batch\n";
    groups = segments.size();
  }
  std::vector<std::size_t> order(segments.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    data_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += groups) {
      const std::size_t count = std::min(groups, order.size() - begin);
      if (count < 2 && order.size() >= 2) continue;  // a lone group has no negatives
      const auto batch = build_batch(segments, std::span(order).subspan(begin, count), cfg, aug, mel, data_rng);
      auto lg = loss_and_gradient<float>(result.weights, model_cfg, batch.packed, batch.positives, cfg.tau);
      if (!std::isfinite(lg.loss))
        throw Error("non-finite loss at epoch " + std::to_string(e) + " batch " + std::to_string(batches) +
                    "; weight norms: " + weight_norm_summary(result.weights));
      adam.step(result.weights, lg.grad, cfg.lr);
      loss_sum += static_cast<double>(lg.loss) / static_cast<double>(batch.positives.size());
      ++batches;
    }
    const EpochReport report{e, batches ? loss_sum / static_cast<double>(batches) : 0.0, batches};
    result.epoch_loss.push_back(report.mean_loss);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

/// Segments every audio and returns the segment excerpts, in audio order.
inline std::vector<Waveform> collect_segments(std::span<const Waveform> audios, const SegmenterConfig& seg_cfg) {
  std::vector<Waveform> out;
  for (std::size_t a = 0; a < audios.size(); ++a)
    for (const auto& s : segment(audios[a], seg_cfg, a)) out.push_back(extract_segment(audios[a], s, seg_cfg.frame_hop));
  return out;
}

}  // namespace vlafp
