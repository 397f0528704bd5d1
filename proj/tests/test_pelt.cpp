#include "test_util.hpp"

#include <functional>

using namespace vlafp;
using Catch::Approx;

namespace {

// Optimal penalized cost by enumerating every admissible segmentation,
// evaluated with the independent two-pass cost.
double brute_force_cost(const std::vector<double>& x, double penalty, std::size_t min_size, std::size_t jump) {
  const std::size_t n = x.size();
  if (n < 2 * min_size) return segmentation_cost(x, std::vector<std::size_t>{n}, penalty);
  double best = kInf;
  std::vector<std::size_t> ends;
  std::function<void(std::size_t)> rec = [&](std::size_t begin) {
    for (std::size_t end = begin + min_size; end <= n; ++end) {
      if (end != n && (end % jump != 0 || n - end < min_size)) continue;
      ends.push_back(end);
      if (end == n) best = std::min(best, segmentation_cost(x, ends, penalty));
      else rec(end);
      ends.pop_back();
    }
  };
  rec(0);
  return best;
}

}  // namespace

TEST_CASE("segment cost uses prefix sums consistently") {
  const std::vector<double> x{1.0, 2.0, 4.0, 8.0};
  const L2SegmentCost cost(x);
  REQUIRE(cost(0, 4) == Approx(segmentation_cost(x, std::vector<std::size_t>{4}, 0.0)));
  REQUIRE(cost(1, 3) == Approx(2.0));
  REQUIRE(cost(2, 3) == Approx(0.0).margin(1e-12));
}

TEST_CASE("step series splits at the step") {
  std::vector<double> x(20, 0.0);
  x.insert(x.end(), 20, 5.0);
  const auto cp = pelt_l2(x, 1.0);
  REQUIRE(cp.ends == std::vector<std::size_t>{20, 40});
  REQUIRE(cp.cost == Approx(segmentation_cost(x, std::vector<std::size_t>{20, 40}, 1.0)).margin(1e-12));
}

TEST_CASE("constant series has no change point") {
  const std::vector<double> x(25, 2.5);
  for (double penalty : {1e-6, 1.0, 100.0}) REQUIRE(pelt_l2(x, penalty).ends == std::vector<std::size_t>{25});
}

TEST_CASE("pelt matches exhaustive search on random series") {
  Rng rng(21);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + rng.index(18);
    std::vector<double> x(n);
    double level = rng.uniform(0.0, 4.0);
    for (auto& v : x) {
      if (rng.uniform() < 0.2) level = rng.uniform(0.0, 4.0);
      v = level + 0.3 * rng.normal();
    }
    const double penalty = rng.uniform(0.05, 3.0);
    const std::size_t min_size = 1 + rng.index(3);
    const std::size_t jump = 1 + rng.index(2);
    const auto cp = pelt_l2(x, penalty, min_size, jump);
    const double oracle = brute_force_cost(x, penalty, min_size, jump);
    REQUIRE(segmentation_cost(x, cp.ends, penalty) == Approx(oracle).margin(1e-9));
    std::size_t begin = 0;
    for (std::size_t end : cp.ends) {
      if (n >= 2 * min_size) REQUIRE(end - begin >= min_size);
      if (end != n) REQUIRE(end % jump == 0);
      begin = end;
    }
  }
}

TEST_CASE("pelt rejects a non-positive penalty") {
  const std::vector<double> x{1.0, 2.0};
  REQUIRE_THROWS_AS(pelt_l2(x, 0.0), Error);
  REQUIRE(default_pelt_penalty(std::vector<double>(5, 1.0)) > 0.0);
}
