#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vlafp/audio.hpp"
#include "vlafp/autodiff.hpp"
#include "vlafp/common.hpp"
#include "vlafp/matrix.hpp"

namespace vlafp {

struct ModelConfig {
  std::size_t f_bins = 64;
  std::size_t d1 = 32;
  std::size_t d2 = 32;
  std::size_t d = 32;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 4;
  std::size_t d_head = 8;
  double ffn_alpha = 1.0;
  double eps = 1e-6;

  /// Gated FFN hidden width ceil(alpha * 2/3 * 4 * d2).
  std::size_t ffn_hidden() const {
    return static_cast<std::size_t>(std::ceil(ffn_alpha * (2.0 / 3.0) * 4.0 * static_cast<double>(d2) - 1e-9));
  }

  void validate() const {
    require(f_bins >= 1 && d1 >= 1 && d2 >= 1 && d >= 1 && n_blocks >= 1 && n_heads >= 1 && d_head >= 1,
            "model config: all dimensions must be >= 1");
    require(d1 == d2, "model config: d1 must equal d2 (frame residual stream)");
    require(ffn_alpha > 0.0 && ffn_hidden() >= 1, "model config: ffn_alpha must be positive");
    require(eps >= 0.0, "model config: eps must be >= 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Full-scale configuration (d = 256, L = 4, H = 8).
inline ModelConfig full_scale_model_config() {
  ModelConfig c;
  c.f_bins = 256;
  c.d1 = c.d2 = c.d = 256;
  c.n_blocks = 4;
  c.n_heads = 8;
  c.d_head = 256;
  c.ffn_alpha = 32.0;
  return c;
}

template <typename M>
struct BlockWeights {
  M attn_norm, attn_q, attn_k, attn_v, attn_o;
  M ffn_norm, ffn_w1, ffn_w2, ffn_w3;
  M cross_q_norm, cross_kv_norm, cross_q, cross_k, cross_v, cross_o;
};

/// All trainable tensors. `M` is a matrix type or a tape node id.
/// seg_init holds the per-head projections side by side: head h uses
/// columns [h*d, (h+1)*d).
template <typename M>
struct ModelWeights {
  M w0, b0, seg_init;
  std::vector<BlockWeights<M>> blocks;
};

template <typename T>
using Weights = ModelWeights<Matrix<T>>;

/// Calls f(name, field_of_w...) for every tensor, in a fixed order. All
/// arguments must already hold the same number of blocks.
template <typename F, typename First, typename... Rest>
void visit_weights(F&& f, First& first, Rest&... rest) {
  f(std::string("w0"), first.w0, rest.w0...);
  f(std::string("b0"), first.b0, rest.b0...);
  f(std::string("seg_init"), first.seg_init, rest.seg_init...);
  for (std::size_t l = 0; l < first.blocks.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
#define VLAFP_VISIT(field) f(p + #field, first.blocks[l].field, rest.blocks[l].field...)
    VLAFP_VISIT(attn_norm);
    VLAFP_VISIT(attn_q);
    VLAFP_VISIT(attn_k);
    VLAFP_VISIT(attn_v);
    VLAFP_VISIT(attn_o);
    VLAFP_VISIT(ffn_norm);
    VLAFP_VISIT(ffn_w1);
    VLAFP_VISIT(ffn_w2);
    VLAFP_VISIT(ffn_w3);
    VLAFP_VISIT(cross_q_norm);
    VLAFP_VISIT(cross_kv_norm);
    VLAFP_VISIT(cross_q);
    VLAFP_VISIT(cross_k);
    VLAFP_VISIT(cross_v);
    VLAFP_VISIT(cross_o);
#undef VLAFP_VISIT
  }
}

inline bool is_gain(const std::string& name) { return name.ends_with("norm"); }

/// Zero-valued weights with the shapes implied by `cfg` (gains at one).
template <typename T>
Weights<T> zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  using I = Eigen::Index;
  const auto F = static_cast<I>(cfg.f_bins), d1 = static_cast<I>(cfg.d1), d2 = static_cast<I>(cfg.d2),
             d = static_cast<I>(cfg.d), hd = static_cast<I>(cfg.n_heads * cfg.d_head), m = static_cast<I>(cfg.ffn_hidden()),
             H = static_cast<I>(cfg.n_heads);
  Weights<T> w;
  w.w0 = Matrix<T>::Zero(F, d1);
  w.b0 = Matrix<T>::Zero(1, d1);
  w.seg_init = Matrix<T>::Zero(d2, H * d);
  w.blocks.resize(cfg.n_blocks);
  for (auto& b : w.blocks) {
    b.attn_norm = Matrix<T>::Ones(1, d2);
    b.attn_q = b.attn_k = b.attn_v = Matrix<T>::Zero(d2, hd);
    b.attn_o = Matrix<T>::Zero(hd, d2);
    b.ffn_norm = Matrix<T>::Ones(1, d2);
    b.ffn_w1 = b.ffn_w3 = Matrix<T>::Zero(d2, m);
    b.ffn_w2 = Matrix<T>::Zero(m, d2);
    b.cross_q_norm = Matrix<T>::Ones(1, d);
    b.cross_kv_norm = Matrix<T>::Ones(1, d2);
    b.cross_q = Matrix<T>::Zero(d, hd);
    b.cross_k = b.cross_v = Matrix<T>::Zero(d2, hd);
    b.cross_o = Matrix<T>::Zero(hd, d);
  }
  return w;
}

/// Weight matrices ~ N(0, std^2); bias zero; RMSNorm gains one.
template <typename T>
Weights<T> init_weights(const ModelConfig& cfg, Rng& rng, double std_dev = 0.02) {
  Weights<T> w = zero_weights<T>(cfg);
  visit_weights(
      [&](const std::string& name, Matrix<T>& m) {
        if (name == "b0" || is_gain(name)) return;
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(std_dev * rng.normal());
      },
      w);
  return w;
}

template <typename To, typename From>
Weights<To> cast_weights(const Weights<From>& src) {
  Weights<To> out;
  out.blocks.resize(src.blocks.size());
  visit_weights([](const std::string&, Matrix<To>& dst, const Matrix<From>& s) { dst = s.template cast<To>(); }, out, src);
  return out;
}

template <typename T>
std::size_t parameter_count(const Weights<T>& w) {
  std::size_t n = 0;
  visit_weights([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); }, w);
  return n;
}

template <typename T>
bool all_finite(const Weights<T>& w) {
  bool ok = true;
  visit_weights([&](const std::string&, const Matrix<T>& m) { ok = ok && m.allFinite(); }, w);
  return ok;
}

/// Places weights on a tape as variables (trainable) or constants.
template <typename T>
ModelWeights<ad::Id> bind_weights(ad::Tape<T>& tape, const Weights<T>& w, bool trainable) {
  ModelWeights<ad::Id> ids;
  ids.blocks.resize(w.blocks.size());
  visit_weights(
      [&](const std::string&, const Matrix<T>& m, ad::Id& id) { id = trainable ? tape.variable(m) : tape.constant(m); }, w,
      ids);
  return ids;
}

template <typename T>
Weights<T> collect_gradients(const ad::Tape<T>& tape, const ModelWeights<ad::Id>& ids) {
  Weights<T> g;
  g.blocks.resize(ids.blocks.size());
  visit_weights([&](const std::string&, Matrix<T>& dst, const ad::Id& id) { dst = tape.grad(id); }, g, ids);
  return g;
}

/// Frames of several segments stacked row-wise; attention never crosses a span.
template <typename T>
struct PackedBatch {
  Matrix<T> frames;
  std::vector<RowSpan> spans;

  void validate() const {
    std::size_t cursor = 0;
    for (const auto& s : spans) {
      require(s.length >= 1, "packed batch: empty span");
      require(s.offset >= cursor, "packed batch: spans overlap or are out of order");
      cursor = s.offset + s.length;
    }
    require(cursor <= static_cast<std::size_t>(frames.rows()), "packed batch: span exceeds frame count");
  }
};

/// Packs per-segment T_i x F feature matrices into one batch.
template <typename T>
PackedBatch<T> pack_segments(std::span<const Matrix<T>> segments) {
  PackedBatch<T> b;
  std::size_t rows = 0;
  for (const auto& s : segments) {
    require(s.rows() >= 1, "pack_segments: segment with no frames");
    require(segments.front().cols() == s.cols(), "pack_segments: feature width mismatch");
    b.spans.push_back({rows, static_cast<std::size_t>(s.rows())});
    rows += static_cast<std::size_t>(s.rows());
  }
  b.frames.resize(static_cast<Eigen::Index>(rows), segments.empty() ? 0 : segments.front().cols());
  for (std::size_t i = 0; i < segments.size(); ++i)
    b.frames.middleRows(static_cast<Eigen::Index>(b.spans[i].offset), segments[i].rows()) = segments[i];
  return b;
}

inline std::vector<AttentionBlock> self_attention_blocks(std::span<const RowSpan> spans) {
  std::vector<AttentionBlock> out;
  out.reserve(spans.size());
  for (const auto& s : spans) out.push_back({s, s});
  return out;
}

/// Segment i owns query rows [i*H, (i+1)*H) and attends to its own frames.
inline std::vector<AttentionBlock> cross_attention_blocks(std::span<const RowSpan> spans, std::size_t n_heads) {
  std::vector<AttentionBlock> out;
  out.reserve(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) out.push_back({{i * n_heads, n_heads}, spans[i]});
  return out;
}

template <typename T>
ad::Id self_attention(ad::Tape<T>& t, const BlockWeights<ad::Id>& p, const ModelConfig& cfg, ad::Id x,
                      std::span<const AttentionBlock> mask) {
  const auto q = ad::matmul(t, x, p.attn_q);
  const auto k = ad::matmul(t, x, p.attn_k);
  const auto v = ad::matmul(t, x, p.attn_v);
  return ad::matmul(t, ad::attention(t, q, k, v, mask, cfg.n_heads, cfg.d_head), p.attn_o);
}

template <typename T>
ad::Id ffn(ad::Tape<T>& t, const BlockWeights<ad::Id>& p, ad::Id x) {
  const auto gate = ad::silu(t, ad::matmul(t, x, p.ffn_w1));
  return ad::matmul(t, ad::hadamard(t, gate, ad::matmul(t, x, p.ffn_w3)), p.ffn_w2);
}

/// h + Attn(RMSNorm(h)), then + FFN(RMSNorm(.)).
template <typename T>
ad::Id block_frames(ad::Tape<T>& t, const BlockWeights<ad::Id>& p, const ModelConfig& cfg, ad::Id h,
                    std::span<const AttentionBlock> mask) {
  const T eps = static_cast<T>(cfg.eps);
  h = ad::add(t, h, self_attention(t, p, cfg, ad::rms_norm(t, h, p.attn_norm, eps), mask));
  return ad::add(t, h, ffn(t, p, ad::rms_norm(t, h, p.ffn_norm, eps)));
}

/// Mean-pools each span's frames and projects per head; H rows per span.
template <typename T>
ad::Id init_segment_embeddings(ad::Tape<T>& t, ad::Id seg_init, const ModelConfig& cfg, ad::Id frames,
                               std::span<const RowSpan> spans) {
  const auto pooled = ad::matmul(t, ad::span_mean(t, frames, spans), seg_init);
  return ad::reshape(t, pooled, static_cast<Eigen::Index>(spans.size() * cfg.n_heads), static_cast<Eigen::Index>(cfg.d));
}

/// s + MultiHead(RMSNorm(s) as queries, RMSNorm(frames) as keys/values) W_O.
template <typename T>
ad::Id cross_attention_block(ad::Tape<T>& t, const BlockWeights<ad::Id>& p, const ModelConfig& cfg, ad::Id s, ad::Id frames,
                             std::span<const AttentionBlock> mask) {
  const T eps = static_cast<T>(cfg.eps);
  const auto sn = ad::rms_norm(t, s, p.cross_q_norm, eps);
  const auto fn = ad::rms_norm(t, frames, p.cross_kv_norm, eps);
  const auto q = ad::matmul(t, sn, p.cross_q);
  const auto k = ad::matmul(t, fn, p.cross_k);
  const auto v = ad::matmul(t, fn, p.cross_v);
  return ad::add(t, s, ad::matmul(t, ad::attention(t, q, k, v, mask, cfg.n_heads, cfg.d_head), p.cross_o));
}

/// Full forward pass over a packed batch; returns the node holding one unit
/// fingerprint row per span.
template <typename T>
ad::Id forward(ad::Tape<T>& t, const ModelWeights<ad::Id>& w, const ModelConfig& cfg, ad::Id frames,
               std::span<const RowSpan> spans) {
  require(!spans.empty(), "forward: no segments");
  require(t.value(frames).cols() == static_cast<Eigen::Index>(cfg.f_bins), "forward: feature width != f_bins");
  require(t.value(frames).allFinite(), "forward: non-finite input");
  const auto self_mask = self_attention_blocks(spans);
  const auto cross_mask = cross_attention_blocks(spans, cfg.n_heads);
  std::vector<RowSpan> head_groups;
  for (std::size_t i = 0; i < spans.size(); ++i) head_groups.push_back({i * cfg.n_heads, cfg.n_heads});

  ad::Id h = ad::add_row(t, ad::matmul(t, frames, w.w0), w.b0);
  ad::Id s = 0;
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    h = block_frames(t, w.blocks[l], cfg, h, self_mask);
    if (l == 0) s = init_segment_embeddings(t, w.seg_init, cfg, h, spans);
    s = cross_attention_block(t, w.blocks[l], cfg, s, h, cross_mask);
  }
  return ad::l2_normalize_rows(t, ad::span_mean(t, s, head_groups));
}

/// One fingerprint row per span of the batch.
template <typename T>
Matrix<T> fingerprint_batch(const Weights<T>& weights, const ModelConfig& cfg, const PackedBatch<T>& batch) {
  batch.validate();
  ad::Tape<T> tape;
  const auto w = bind_weights(tape, weights, false);
  const auto z = forward(tape, w, cfg, tape.constant(batch.frames), batch.spans);
  return tape.value(z);
}

/// Fingerprint of a single T x F feature matrix.
template <typename T>
RowVector<T> fingerprint(const Weights<T>& weights, const ModelConfig& cfg, const Matrix<T>& features) {
  require(features.rows() >= 1, "fingerprint: segment has no frames");
  PackedBatch<T> b{features, {{0, static_cast<std::size_t>(features.rows())}}};
  return fingerprint_batch(weights, cfg, b).row(0);
}

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const Weights<T>& w) {
  auto out = detail::open_output(path);
  out.write("VLFP", 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (std::size_t v : {cfg.f_bins, cfg.d1, cfg.d2, cfg.d, cfg.n_blocks, cfg.n_heads, cfg.d_head})
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  detail::put_le<double>(out, cfg.ffn_alpha);
  detail::put_le<double>(out, cfg.eps);
  std::uint32_t count = 0;
  visit_weights([&](const std::string&, const Matrix<T>&) { ++count; }, w);
  detail::put_le<std::uint32_t>(out, count);
  visit_weights(
      [&](const std::string& name, const Matrix<T>& m) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_le<std::uint32_t>(out, 2);
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_le<float>(out, static_cast<float>(m.data()[i]));
      },
      w);
  require(static_cast<bool>(out), "failed writing checkpoint: " + path);
}

template <typename T>
struct Checkpoint {
  ModelConfig config;
  Weights<T> weights;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  auto in = detail::open_input(path);
  char magic[4] = {};
  in.read(magic, 4);
  require(in && std::string(magic, 4) == "VLFP", "not a VLFP checkpoint: " + path);
  const auto version = detail::get_le<std::uint32_t>(in);
  require(version == kCheckpointVersion, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint<T> ck;
  auto& c = ck.config;
  for (std::size_t* v : {&c.f_bins, &c.d1, &c.d2, &c.d, &c.n_blocks, &c.n_heads, &c.d_head})
    *v = detail::get_le<std::uint32_t>(in);
  c.ffn_alpha = detail::get_le<double>(in);
  c.eps = detail::get_le<double>(in);
  ck.weights = zero_weights<T>(c);
  std::uint32_t expected = 0;
  visit_weights([&](const std::string&, const Matrix<T>&) { ++expected; }, ck.weights);
  require(detail::get_le<std::uint32_t>(in) == expected, "checkpoint tensor count mismatch: " + path);
  visit_weights(
      [&](const std::string& name, Matrix<T>& m) {
        const auto len = detail::get_le<std::uint32_t>(in);
        std::string got(len, '\0');
        in.read(got.data(), len);
        require(in && got == name, "checkpoint: expected tensor " + name + ", found " + got);
        require(detail::get_le<std::uint32_t>(in) == 2, "checkpoint: tensor " + name + " is not rank 2");
        const auto rows = detail::get_le<std::uint32_t>(in);
        const auto cols = detail::get_le<std::uint32_t>(in);
        require(rows == m.rows() && cols == m.cols(), "checkpoint: shape mismatch for " + name);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(detail::get_le<float>(in));
      },
      ck.weights);
  require(static_cast<bool>(in), "truncated checkpoint: " + path);
  return ck;
}

}  // namespace vlafp
