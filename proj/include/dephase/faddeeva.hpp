#pragma once

#include <array>
#include <cmath>
#include <complex>

#include "dephase/constants.hpp"

namespace dephase {

namespace detail {

// Weideman's rational expansion of the Faddeeva function,
//   w(z) = 2 p(Z) / (L - iz)^2 + 1 / (sqrt(pi) (L - iz)),  Z = (L + iz)/(L - iz),
// with the polynomial coefficients obtained from a discrete Fourier transform
// of exp(-t^2)(L^2 + t^2) sampled at t = L tan(theta/2).
inline constexpr int faddeeva_terms = 40;

struct FaddeevaTable {
  double L;
  std::array<double, faddeeva_terms> a;  // a[j] multiplies Z^j

  FaddeevaTable() {
    constexpr int N = faddeeva_terms;
    constexpr int M = 2 * N;
    constexpr int M2 = 2 * M;
    L = std::sqrt(N / constants::sqrt2);
    std::array<double, M2> f{};
    // f[0] = 0, f[1..M2-1] = samples at k = -M+1 .. M-1
    for (int i = 1; i < M2; ++i) {
      const int k = i - M;
      const double theta = k * constants::pi / M;
      const double t = L * std::tan(0.5 * theta);
      f[i] = std::exp(-t * t) * (L * L + t * t);
    }
    std::array<double, M2> shifted{};
    for (int i = 0; i < M2; ++i) shifted[i] = f[(i + M2 / 2) % M2];
    for (int j = 1; j <= N; ++j) {
      double re = 0.0;
      for (int i = 0; i < M2; ++i)
        re += shifted[i] * std::cos(2.0 * constants::pi * double(i) * double(j) / M2);
      a[j - 1] = re / M2;
    }
  }
};

inline const FaddeevaTable& faddeeva_table() {
  static const FaddeevaTable table;
  return table;
}

}  // namespace detail

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz) for Im z >= 0.
inline std::complex<double> faddeeva(std::complex<double> z) {
  const auto& tab = detail::faddeeva_table();
  const std::complex<double> i(0.0, 1.0);
  const std::complex<double> denom = tab.L - i * z;
  const std::complex<double> Z = (tab.L + i * z) / denom;
  std::complex<double> p = tab.a.back();
  for (int j = detail::faddeeva_terms - 2; j >= 0; --j) p = p * Z + tab.a[j];
  return 2.0 * p / (denom * denom) + 1.0 / (constants::sqrt_pi * denom);
}

/// w'(z) = -2 z w(z) + 2i / sqrt(pi)
inline std::complex<double> faddeeva_derivative(std::complex<double> z,
                                                std::complex<double> w) {
  return -2.0 * z * w + std::complex<double>(0.0, 2.0 / constants::sqrt_pi);
}

}  // namespace dephase
