#pragma once

#include <span>
#include <vector>

#include "vlafp/common.hpp"

namespace vlafp {

/// Sum of squared deviations from the mean over [begin, end), via prefix sums.
class L2SegmentCost {
 public:
  explicit L2SegmentCost(std::span<const double> x) : s1_(x.size() + 1, 0.0), s2_(x.size() + 1, 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      s1_[i + 1] = s1_[i] + x[i];
      s2_[i + 1] = s2_[i] + x[i] * x[i];
    }
  }

  double operator()(std::size_t begin, std::size_t end) const {
    const double n = static_cast<double>(end - begin);
    const double s = s1_[end] - s1_[begin];
    return std::max(0.0, (s2_[end] - s2_[begin]) - s * s / n);
  }

 private:
  std::vector<double> s1_, s2_;
};

struct ChangePoints {
  std::vector<std::size_t> ends;  // segment end indices, last == n
  double cost = 0.0;              // sum of segment costs + penalty * (segments - 1)
};

/// Penalized cost of a segmentation given by its end indices, using a
/// two-pass mean for each segment.
inline double segmentation_cost(std::span<const double> x, std::span<const std::size_t> ends, double penalty) {
  double total = 0.0;
  std::size_t begin = 0;
  for (std::size_t end : ends) {
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += x[i];
    mean /= static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) total += (x[i] - mean) * (x[i] - mean);
    begin = end;
  }
  return total + penalty * static_cast<double>(ends.empty() ? 0 : ends.size() - 1);
}

/// PELT change-point search for a piecewise-constant mean (L2 cost).
/// Interior change points are restricted to multiples of `jump` and every
/// segment has at least `min_size` samples. Exact: pruned candidates stay
/// admissible until `min_size` steps after their pruning time, the earliest
/// point at which the pruning certificate can be used.
inline ChangePoints pelt_l2(std::span<const double> x, double penalty, std::size_t min_size = 1, std::size_t jump = 1) {
  require(penalty > 0.0, "pelt: penalty must be positive");
  require(min_size >= 1 && jump >= 1, "pelt: min_size and jump must be >= 1");
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (n < 2 * min_size) return {{n}, segmentation_cost(x, std::vector<std::size_t>{n}, penalty)};

  std::vector<std::size_t> grid{0};
  for (std::size_t t = jump; t < n; t += jump)
    if (t >= min_size && n - t >= min_size) grid.push_back(t);
  grid.push_back(n);

  const L2SegmentCost cost(x);
  const std::size_t none = static_cast<std::size_t>(-1);
  std::vector<double> best(n + 1, kInf);
  std::vector<std::size_t> prev(n + 1, none);
  best[0] = 0.0;

  struct Candidate {
    std::size_t t;
    std::size_t expires;  // usable while current time < expires
  };
  std::vector<Candidate> live{{0, none}};

  for (std::size_t gi = 1; gi < grid.size(); ++gi) {
    const std::size_t t = grid[gi];
    std::erase_if(live, [&](const Candidate& c) { return c.expires != none && t >= c.expires; });
    for (const auto& c : live) {
      if (c.t + min_size > t || best[c.t] == kInf) continue;
      const double v = best[c.t] + cost(c.t, t) + penalty;
      if (v < best[t]) {
        best[t] = v;
        prev[t] = c.t;
      }
    }
    if (best[t] == kInf) continue;
    for (auto& c : live)
      if (c.expires == none && best[c.t] + cost(c.t, t) > best[t]) c.expires = t + min_size;
    live.push_back({t, none});
  }

  ChangePoints out;
  for (std::size_t t = n; t != 0; t = prev[t]) {
    require(prev[t] != none, "pelt: no feasible segmentation");
    out.ends.push_back(t);
  }
  std::reverse(out.ends.begin(), out.ends.end());
  out.cost = best[n] - penalty;
  return out;
}

/// BIC-style default penalty 2 ln(n) var(x), floored to stay positive.
inline double default_pelt_penalty(std::span<const double> x) {
  if (x.size() < 2) return 1e-9;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  return std::max(1e-9, 2.0 * std::log(static_cast<double>(x.size())) * var);
}

}  // namespace vlafp
