#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlafp/audio.hpp"
#include "vlafp/common.hpp"

namespace vlafp {

struct IndexEntry {
  std::vector<float> vector;
  std::uint64_t audio_id = 0;
  std::uint32_t segment_ord = 0;
  float start_time = 0.0f;
  float duration = 0.0f;
};

struct SearchHit {
  std::size_t entry = 0;  // position in the index
  double score = 0.0;
};

/// Inner product accumulated in double, in component order.
inline double dot_score(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

/// Exact inner-product index over unit vectors, append-only.
class FingerprintIndex {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;
  static constexpr std::size_t kEntryMetadataBytes = 8 + 4 + 4 + 4;
  static constexpr double kUnitTolerance = 1e-4;

  explicit FingerprintIndex(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<IndexEntry>& entries() const { return entries_; }

  void insert(IndexEntry e) {
    if (dim_ == 0 && entries_.empty()) dim_ = e.vector.size();
    require(e.vector.size() == dim_,
            "index: dimension mismatch (index " + std::to_string(dim_) + ", entry " + std::to_string(e.vector.size()) + ")");
    double sq = 0.0;
    for (float v : e.vector) {
      require(std::isfinite(v), "index: non-finite vector component");
      sq += static_cast<double>(v) * v;
    }
    require(std::abs(std::sqrt(sq) - 1.0) <= kUnitTolerance, "index: vector is not unit norm");
    entries_.push_back(std::move(e));
  }

  static FingerprintIndex build(std::size_t dim, std::vector<IndexEntry> entries) {
    FingerprintIndex idx(dim);
    for (auto& e : entries) idx.insert(std::move(e));
    return idx;
  }

  /// Orders hits by score descending, then (audio_id, segment_ord, position) ascending.
  bool ranks_before(const SearchHit& a, const SearchHit& b) const {
    if (a.score != b.score) return a.score > b.score;
    const auto& ea = entries_[a.entry];
    const auto& eb = entries_[b.entry];
    if (ea.audio_id != eb.audio_id) return ea.audio_id < eb.audio_id;
    if (ea.segment_ord != eb.segment_ord) return ea.segment_ord < eb.segment_ord;
    return a.entry < b.entry;
  }

  std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const {
    require(k >= 1, "index search: k must be >= 1");
    if (entries_.empty()) return {};
    require(query.size() == dim_, "index search: query dimension mismatch");
    std::vector<SearchHit> hits(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) hits[i] = {i, dot_score(query, entries_[i].vector)};
    const std::size_t keep = std::min(k, hits.size());
    const auto cmp = [this](const SearchHit& a, const SearchHit& b) { return ranks_before(a, b); };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), cmp);
    hits.resize(keep);
    return hits;
  }

  std::vector<std::vector<SearchHit>> search_many(const std::vector<std::vector<float>>& queries, std::size_t k,
                                                  std::size_t threads = 1) const {
    std::vector<std::vector<SearchHit>> out(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = search(queries[i], k); });
    return out;
  }

  static std::uint64_t file_size(std::uint64_t count, std::uint64_t dim) {
    return kHeaderBytes + count * (4 * dim + kEntryMetadataBytes);
  }

  void save(const std::string& path) const {
    auto out = detail::open_output(path);
    out.write("VLIX", 4);
    detail::put_le<std::uint32_t>(out, kVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    detail::put_le<std::uint64_t>(out, entries_.size());
    for (const auto& e : entries_) {
      detail::put_le<std::uint64_t>(out, e.audio_id);
      detail::put_le<std::uint32_t>(out, e.segment_ord);
      detail::put_le<float>(out, e.start_time);
      detail::put_le<float>(out, e.duration);
      for (float v : e.vector) detail::put_le<float>(out, v);
    }
    require(static_cast<bool>(out), "failed writing index: " + path);
  }

  static FingerprintIndex load(const std::string& path) {
    auto in = detail::open_input(path);
    char magic[4] = {};
    in.read(magic, 4);
    require(in && std::string(magic, 4) == "VLIX", "not a VLIX index file: " + path);
    const auto version = detail::get_le<std::uint32_t>(in);
    require(version == kVersion, "unsupported index version " + std::to_string(version) + " in " + path);
    FingerprintIndex idx(detail::get_le<std::uint32_t>(in));
    const auto count = detail::get_le<std::uint64_t>(in);
    require(static_cast<bool>(in), "truncated index header: " + path);
    idx.entries_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      IndexEntry e;
      e.audio_id = detail::get_le<std::uint64_t>(in);
      e.segment_ord = detail::get_le<std::uint32_t>(in);
      e.start_time = detail::get_le<float>(in);
      e.duration = detail::get_le<float>(in);
      e.vector.resize(idx.dim_);
      for (auto& v : e.vector) v = detail::get_le<float>(in);
      require(static_cast<bool>(in), "truncated index file: " + path);
      idx.entries_.push_back(std::move(e));
    }
    return idx;
  }

 private:
  std::size_t dim_;
  std::vector<IndexEntry> entries_;
};

}  // namespace vlafp
