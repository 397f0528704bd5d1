#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "vlafp/common.hpp"

namespace vlafp {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {
// FFTW planning is not thread safe; execution of an existing plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// In-place complex DFT of a fixed size, backed by FFTW.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    require(n >= 1, "fft size must be positive");
    std::vector<std::complex<double>> scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const int size = static_cast<int>(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_1d(size, buf, buf, FFTW_FORWARD, flags);
    backward_ = fftw_plan_dft_1d(size, buf, buf, FFTW_BACKWARD, flags);
    require(forward_ && backward_, "fft: planning failed for size " + std::to_string(n));
  }

  ~Fft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  std::size_t size() const { return n_; }

  void forward(std::span<std::complex<double>> data) const { run(forward_, data); }

  /// Inverse transform including the 1/n scale.
  void inverse(std::span<std::complex<double>> data) const {
    run(backward_, data);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& x : data) x *= scale;
  }

 private:
  void run(fftw_plan plan, std::span<std::complex<double>> data) const {
    require(data.size() == n_, "fft input size mismatch");
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, buf, buf);
  }

  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

/// Per-thread plan cache.
inline const Fft& fft_plan(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Fft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Fft>(n);
  return *slot;
}

}  // namespace vlafp
