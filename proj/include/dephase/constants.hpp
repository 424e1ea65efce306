#pragma once

// Units are meV, K and ps everywhere.
namespace dephase::constants {

/// Boltzmann constant [meV/K] (CODATA 2018).
inline constexpr double k_B = 8.617333262e-2;
/// Reduced Planck constant [meV ps] (CODATA 2018).
inline constexpr double hbar = 6.582119569e-1;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double sqrt_pi = 1.77245385090551602730;
inline constexpr double sqrt2 = 1.41421356237309504880;
inline constexpr double ln2 = 0.69314718055994530942;

/// f_G = fwhm_per_sigma * sigma for a Gaussian.
inline constexpr double fwhm_per_sigma = 2.35482004503094938202;  // 2 sqrt(2 ln 2)

}  // namespace dephase::constants
