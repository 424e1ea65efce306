#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dephase/error.hpp"

namespace dephase {

/// One emission spectrum: intensities on an ascending energy grid [meV].
struct Spectrum {
  std::vector<double> energy;
  std::vector<double> intensity;
  double temperature = 0.0;  // K
  std::string emitter_id;

  std::size_t size() const { return energy.size(); }
};

inline constexpr std::size_t min_spectrum_points = 20;

inline void validate(const Spectrum& s) {
  require(s.energy.size() == s.intensity.size(), ErrorKind::Domain,
          "spectrum: energy and intensity lengths differ");
  require(s.energy.size() >= min_spectrum_points, ErrorKind::InsufficientData,
          "spectrum: need at least 20 points, got " + std::to_string(s.energy.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(std::isfinite(s.energy[i]) && std::isfinite(s.intensity[i]), ErrorKind::Domain,
            "spectrum: non-finite value at index " + std::to_string(i));
    if (i > 0)
      require(s.energy[i] > s.energy[i - 1], ErrorKind::NonMonotonicGrid,
              "spectrum: energy grid not strictly increasing at index " + std::to_string(i));
  }
}

}  // namespace dephase

namespace dephase {

/// FWHM of a sampled, zero-background spectrum from linearly interpolated
/// half-maximum crossings around the highest bin.
inline double sampled_fwhm(const Spectrum& s) {
  require(s.size() >= 3, ErrorKind::InsufficientData, "sampled_fwhm: too few points");
  std::size_t imax = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s.intensity[i] > s.intensity[imax]) imax = i;
  const double half = 0.5 * s.intensity[imax];
  std::size_t lo = imax, hi = imax;
  while (lo > 0 && s.intensity[lo - 1] >= half) --lo;
  while (hi + 1 < s.size() && s.intensity[hi + 1] >= half) ++hi;
  require(lo > 0 && hi + 1 < s.size(), ErrorKind::Domain,
          "sampled_fwhm: peak not contained in the grid");
  auto cross = [&](std::size_t in, std::size_t out) {
    const double t = (s.intensity[in] - half) / (s.intensity[in] - s.intensity[out]);
    return s.energy[in] + t * (s.energy[out] - s.energy[in]);
  };
  return cross(hi, hi + 1) - cross(lo, lo - 1);
}

}  // namespace dephase
