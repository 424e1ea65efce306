#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "dephase/error.hpp"

namespace dephase {

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place forward DFT, X_j = sum_k x_k exp(-2 pi i jk / n), via FFTW.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  require(!a.empty(), ErrorKind::Domain, "fft: empty input");
  // FFTW's planner is not reentrant; execution is.
  static std::mutex planner;
  auto* data = reinterpret_cast<fftw_complex*>(a.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner);
    plan = fftw_plan_dft_1d(static_cast<int>(a.size()), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  require(plan != nullptr, ErrorKind::Domain, "fft: planning failed");
  fftw_execute(plan);
  std::lock_guard lock(planner);
  fftw_destroy_plan(plan);
}

}  // namespace dephase
