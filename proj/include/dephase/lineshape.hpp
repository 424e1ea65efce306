#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <span>
#include <vector>

#include "dephase/constants.hpp"
#include "dephase/error.hpp"
#include "dephase/faddeeva.hpp"

namespace dephase {

/// One Voigt peak on a constant background. Widths are FWHM in meV;
/// amplitude multiplies a unit-area density.
struct VoigtParams {
  double center = 0.0;
  double f_G = 0.0;
  double f_L = 0.0;
  double amplitude = 0.0;
  double baseline = 0.0;

  double sigma() const { return f_G / constants::fwhm_per_sigma; }
  double gamma() const { return 0.5 * f_L; }
};

inline double sigma_from_fG(double f_G) { return f_G / constants::fwhm_per_sigma; }
inline double fG_from_sigma(double sigma) { return sigma * constants::fwhm_per_sigma; }

inline double eval_gaussian(double x, double sigma) {
  require(sigma > 0.0, ErrorKind::Domain, "eval_gaussian: sigma must be > 0");
  return std::exp(-0.5 * x * x / (sigma * sigma)) /
         (sigma * constants::sqrt2 * constants::sqrt_pi);
}

inline double eval_lorentzian(double x, double gamma) {
  require(gamma > 0.0, ErrorKind::Domain, "eval_lorentzian: gamma must be > 0");
  return gamma / (constants::pi * (x * x + gamma * gamma));
}

/// Value and partial derivatives of the unit-area Voigt density.
struct VoigtEval {
  double value = 0.0;
  double d_x = 0.0;
  double d_sigma = 0.0;
  double d_gamma = 0.0;
};

inline VoigtEval eval_voigt_with_derivatives(double x, double sigma, double gamma) {
  require(sigma >= 0.0 && gamma >= 0.0 && sigma + gamma > 0.0, ErrorKind::Domain,
          "eval_voigt: widths must be >= 0 and not both zero");
  VoigtEval out;
  if (sigma == 0.0) {
    const double den = x * x + gamma * gamma;
    out.value = eval_lorentzian(x, gamma);
    out.d_x = -2.0 * gamma * x / (constants::pi * den * den);
    out.d_gamma = (x * x - gamma * gamma) / (constants::pi * den * den);
    // V depends on sigma^2, so the sigma slope vanishes at sigma = 0.
    out.d_sigma = 0.0;
    return out;
  }
  const double s2 = sigma * constants::sqrt2;
  const std::complex<double> z(x / s2, gamma / s2);
  const std::complex<double> w = faddeeva(z);
  const std::complex<double> dw = faddeeva_derivative(z, w);
  const double norm = 1.0 / (sigma * constants::sqrt2 * constants::sqrt_pi);
  out.value = gamma == 0.0 ? eval_gaussian(x, sigma) : w.real() * norm;
  out.d_x = dw.real() / s2 * norm;
  out.d_gamma = -dw.imag() / s2 * norm;
  // dz/dsigma = -z / sigma; the prefactor contributes -V / sigma.
  out.d_sigma = (dw * (-z / sigma)).real() * norm - out.value / sigma;
  return out;
}

/// Unit-area Voigt density Re w(z) / (sigma sqrt(2 pi)), z = (x + i gamma)/(sigma sqrt 2).
/// Falls back to the exact Gaussian / Lorentzian when one width is zero.
inline double eval_voigt(double x, double sigma, double gamma) {
  require(sigma >= 0.0 && gamma >= 0.0 && sigma + gamma > 0.0, ErrorKind::Domain,
          "eval_voigt: widths must be >= 0 and not both zero");
  if (gamma == 0.0) return eval_gaussian(x, sigma);
  if (sigma == 0.0) return eval_lorentzian(x, gamma);
  const double s2 = sigma * constants::sqrt2;
  return faddeeva({x / s2, gamma / s2}).real() /
         (sigma * constants::sqrt2 * constants::sqrt_pi);
}

/// Peak model: baseline + amplitude * V(x - center).
inline double eval_peak(double x, const VoigtParams& p) {
  return p.baseline + p.amplitude * eval_voigt(x - p.center, p.sigma(), p.gamma());
}

// ---------------------------------------------------------------------------
// FWHM algebra

inline constexpr double fwhm_lin = 0.5346;
inline constexpr double fwhm_quad = 0.2166;

/// Approximate Voigt FWHM from its Gaussian and Lorentzian components.
inline double voigt_fwhm(double f_G, double f_L) {
  require(f_G >= 0.0 && f_L >= 0.0, ErrorKind::Domain, "voigt_fwhm: widths must be >= 0");
  return fwhm_lin * f_L + std::sqrt(fwhm_quad * f_L * f_L + f_G * f_G);
}

/// Lorentzian component that combines with f_G into the total width f_V.
/// From (f_V - a f_L)^2 = b f_L^2 + f_G^2:
///   (a^2 - b) f_L^2 - 2 a f_V f_L + (f_V^2 - f_G^2) = 0,
/// and the smaller root is the branch with f_V - a f_L >= 0.
inline double invert_fwhm(double f_V, double f_G) {
  require(f_G >= 0.0, ErrorKind::Domain, "invert_fwhm: f_G must be >= 0");
  require(f_V >= f_G, ErrorKind::NoSolution, "invert_fwhm: f_V must be >= f_G");
  const double qa = fwhm_lin * fwhm_lin - fwhm_quad;
  const double qb = fwhm_lin * f_V;
  const double qc = (f_V - f_G) * (f_V + f_G);
  // Citardauq form of the smaller root; avoids cancellation when f_V ~ f_G.
  const double disc = std::sqrt(std::max(qb * qb - qa * qc, 0.0));
  if (qc == 0.0) return 0.0;
  return qc / (qb + disc);
}

/// Full width at half maximum of a unimodal sampler whose mode is at `center`.
/// `scale` is a rough width used to start the bracketing search. Crossings are
/// bisected to `tol`.
inline double numeric_fwhm(const std::function<double(double)>& profile, double center,
                           double scale, double tol = 1e-10) {
  require(scale > 0.0, ErrorKind::Domain, "numeric_fwhm: scale must be > 0");
  const double peak = profile(center);
  require(std::isfinite(peak) && peak > 0.0, ErrorKind::NonUnimodal,
          "numeric_fwhm: profile must be positive at its mode");
  const double half = 0.5 * peak;

  auto crossing = [&](double dir) {
    double inner = center;
    double prev = peak;
    double step = 0.05 * scale;
    double outer = center + dir * step;
    for (int k = 0;; ++k) {
      const double v = profile(outer);
      if (v > prev * (1.0 + 1e-12))
        fail(ErrorKind::NonUnimodal, "numeric_fwhm: profile rises away from its mode");
      if (v < half) break;
      if (k > 200) fail(ErrorKind::NonUnimodal, "numeric_fwhm: no half-maximum crossing");
      prev = v;
      inner = outer;
      step *= 1.5;
      outer = center + dir * (std::abs(inner - center) + step);
    }
    while (std::abs(outer - inner) > tol) {
      const double mid = 0.5 * (inner + outer);
      if (mid == inner || mid == outer) break;
      (profile(mid) >= half ? inner : outer) = mid;
    }
    const double x_half = 0.5 * (inner + outer);
    // Nothing further out may climb back above half maximum.
    const double reach = 10.0 * std::abs(x_half - center);
    for (int k = 1; k <= 400; ++k) {
      const double x = x_half + dir * reach * double(k) / 400.0;
      if (profile(x) >= half)
        fail(ErrorKind::NonUnimodal, "numeric_fwhm: secondary maximum beyond the half-width");
    }
    return x_half;
  };
  return crossing(+1.0) - crossing(-1.0);
}

/// Direct evaluation of the Gaussian-Lorentzian convolution integral by
/// fixed-step quadrature over the Gaussian variable. Step is min(sigma,
/// gamma)/50; the integration range is +-40 sigma (where the Gaussian weight
/// underflows). Gaussian weights are renormalized to unit sum so the result
/// is a unit-area density.
inline std::vector<double> convolution_oracle(std::span<const double> x_grid, double sigma,
                                              double gamma) {
  require(sigma > 0.0 && gamma > 0.0, ErrorKind::Domain,
          "convolution_oracle: widths must be > 0");
  require(x_grid.size() >= 2, ErrorKind::Domain, "convolution_oracle: grid too short");
  const double feature = voigt_fwhm(fG_from_sigma(sigma), 2.0 * gamma);
  for (std::size_t i = 1; i < x_grid.size(); ++i) {
    require(x_grid[i] > x_grid[i - 1], ErrorKind::NonMonotonicGrid,
            "convolution_oracle: grid must be strictly increasing");
    require(x_grid[i] - x_grid[i - 1] <= 0.5 * feature, ErrorKind::Domain,
            "convolution_oracle: grid is coarser than the profile width");
  }
  const double h = std::min(sigma, gamma) / 50.0;
  const auto half_count = static_cast<std::size_t>(std::ceil(40.0 * sigma / h));
  std::vector<double> weight(half_count + 1);
  double total = 0.0;
  for (std::size_t j = 0; j <= half_count; ++j) {
    const double u = double(j) * h;
    weight[j] = std::exp(-0.5 * u * u / (sigma * sigma));
    total += (j == 0 ? 1.0 : 2.0) * weight[j];
  }
  for (auto& w : weight) w /= total;

  const double g2 = gamma * gamma;
  auto lorentz = [&](double d) { return gamma / (constants::pi * (d * d + g2)); };
  std::vector<double> out(x_grid.size());
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    const double x = x_grid[i];
    double acc = 0.0;
    // Sum from the tails inward so small terms are accumulated first.
    for (std::size_t j = half_count; j >= 1; --j) {
      const double u = double(j) * h;
      acc += weight[j] * (lorentz(x - u) + lorentz(x + u));
    }
    acc += weight[0] * lorentz(x);
    out[i] = acc;
  }
  return out;
}

}  // namespace dephase
