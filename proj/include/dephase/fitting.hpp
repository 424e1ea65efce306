#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dephase/error.hpp"
#include "dephase/lineshape.hpp"
#include "dephase/lsq.hpp"
#include "dephase/physics.hpp"
#include "dephase/spectrum.hpp"

namespace dephase {

// ===========================================================================
// Single-spectrum Voigt fits

enum class Weighting { Poisson, Uniform };

/// Which widths are free. Gaussian pins f_L = 0, Lorentzian pins f_G = 0.
enum class PeakShape { Voigt, Gaussian, Lorentzian };

struct VoigtFitOptions {
  Weighting weighting = Weighting::Poisson;
  PeakShape shape = PeakShape::Voigt;
  LsqOptions lsq{};
};

struct VoigtFit {
  VoigtParams params;
  VoigtParams uncertainties;  // 1-sigma, same units as params
  double rss = 0.0;
  std::size_t n_points = 0;
  bool converged = false;
  int n_iterations = 0;

  double f_V() const { return voigt_fwhm(params.f_G, params.f_L); }
};

/// Rough peak location and background taken straight from the data.
struct PeakEstimate {
  double baseline = 0.0;
  double noise = 0.0;
  double height = 0.0;  // above baseline
  double center = 0.0;
  double width = 0.0;  // total FWHM
};

namespace detail {

inline double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  return m;
}

inline std::vector<double> weights_for(const Spectrum& s, Weighting w) {
  std::vector<double> out(s.size(), 1.0);
  if (w == Weighting::Poisson)
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = 1.0 / std::max(s.intensity[i], 1.0);
  return out;
}

}  // namespace detail

/// Baseline is the median of the outer 10% of bins (5% per side); noise is
/// the scaled MAD of the same bins. Throws NoPeak unless the maximum clears
/// baseline + 5 noise.
inline PeakEstimate estimate_peak(const Spectrum& s) {
  validate(s);
  const std::size_t n = s.size();
  const std::size_t edge = std::max<std::size_t>(1, (n + 19) / 20);
  std::vector<double> outer;
  for (std::size_t i = 0; i < edge; ++i) {
    outer.push_back(s.intensity[i]);
    outer.push_back(s.intensity[n - 1 - i]);
  }
  PeakEstimate est;
  est.baseline = detail::median(outer);
  std::vector<double> dev(outer.size());
  for (std::size_t i = 0; i < outer.size(); ++i) dev[i] = std::abs(outer[i] - est.baseline);
  est.noise = 1.4826 * detail::median(dev);

  const auto imax = static_cast<std::size_t>(
      std::max_element(s.intensity.begin(), s.intensity.end()) - s.intensity.begin());
  const double peak = s.intensity[imax];
  if (!(peak > est.baseline + 5.0 * est.noise) || peak <= est.baseline)
    fail(ErrorKind::NoPeak, "no peak: maximum does not rise above the background");
  est.height = peak - est.baseline;

  const double half = est.baseline + 0.5 * est.height;
  auto cross = [&](std::size_t i, std::size_t j) {
    // linear interpolation between bins i (above half) and j (below)
    const double yi = s.intensity[i], yj = s.intensity[j];
    const double t = (yi - half) / (yi - yj);
    return s.energy[i] + t * (s.energy[j] - s.energy[i]);
  };
  std::size_t lo = imax, hi = imax;
  while (lo > 0 && s.intensity[lo - 1] >= half) --lo;
  while (hi + 1 < n && s.intensity[hi + 1] >= half) ++hi;
  const double left = lo > 0 ? cross(lo, lo - 1) : s.energy.front();
  const double right = hi + 1 < n ? cross(hi, hi + 1) : s.energy.back();
  const double step = (s.energy.back() - s.energy.front()) / double(n - 1);
  est.width = std::max(right - left, step);

  double wsum = 0.0, xsum = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) {
    const double w = s.intensity[i] - est.baseline;
    wsum += w;
    xsum += w * s.energy[i];
  }
  est.center = wsum > 0.0 ? xsum / wsum : s.energy[imax];
  return est;
}

namespace detail {

// Internal parameter vector: [center offset, (p), (q), amplitude, baseline]
// with f_G = p^2 and f_L = q^2 so widths stay non-negative.
struct PeakLayout {
  bool has_p = true;
  bool has_q = true;

  explicit PeakLayout(PeakShape shape)
      : has_p(shape != PeakShape::Lorentzian), has_q(shape != PeakShape::Gaussian) {}

  Eigen::Index size() const { return 3 + has_p + has_q; }
  Eigen::Index ip() const { return 1; }
  Eigen::Index iq() const { return 1 + has_p; }
  Eigen::Index iamp() const { return 1 + has_p + has_q; }
  Eigen::Index ibase() const { return 2 + has_p + has_q; }

  VoigtParams decode(const Eigen::Ref<const Vec>& v, double origin) const {
    VoigtParams out;
    out.center = origin + v[0];
    out.f_G = has_p ? v[ip()] * v[ip()] : 0.0;
    out.f_L = has_q ? v[iq()] * v[iq()] : 0.0;
    out.amplitude = v[iamp()];
    out.baseline = v[ibase()];
    return out;
  }

  Vec encode(const VoigtParams& p, double origin) const {
    Vec v(size());
    v[0] = p.center - origin;
    if (has_p) v[ip()] = std::sqrt(p.f_G);
    if (has_q) v[iq()] = std::sqrt(p.f_L);
    v[iamp()] = p.amplitude;
    v[ibase()] = p.baseline;
    return v;
  }
};

// Fills residual rows [row0, row0 + n) and, when J is non-null, the matching
// Jacobian block. Columns: offset, p, q, amp, base at the given indices.
struct PeakColumns {
  Eigen::Index offset, p, q, amp, base;  // -1 when absent
};

inline void peak_rows(const Spectrum& s, std::span<const double> sqrt_w, double origin,
                      double offset, double p, double q, double amp, double base, bool has_p,
                      bool has_q, Eigen::Index row0, Vec* r, Mat* J, const PeakColumns& col) {
  const double f_G = has_p ? p * p : 0.0;
  const double f_L = has_q ? q * q : 0.0;
  const double sigma = sigma_from_fG(f_G);
  const double gamma = 0.5 * f_L;
  const double dsigma_dp = 2.0 * p / constants::fwhm_per_sigma;
  const double dgamma_dq = q;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = s.energy[i] - origin - offset;
    const double sw = sqrt_w[i];
    const auto row = row0 + static_cast<Eigen::Index>(i);
    if (J) {
      const VoigtEval v = eval_voigt_with_derivatives(x, sigma, gamma);
      if (r) (*r)[row] = sw * (base + amp * v.value - s.intensity[i]);
      (*J)(row, col.offset) = -sw * amp * v.d_x;
      if (has_p) (*J)(row, col.p) = sw * amp * v.d_sigma * dsigma_dp;
      if (has_q) (*J)(row, col.q) = sw * amp * v.d_gamma * dgamma_dq;
      (*J)(row, col.amp) = sw * v.value;
      (*J)(row, col.base) = sw;
    } else {
      (*r)[row] = sw * (base + amp * eval_voigt(x, sigma, gamma) - s.intensity[i]);
    }
  }
}

inline std::vector<double> sqrt_weights(const Spectrum& s, Weighting w) {
  auto out = weights_for(s, w);
  for (auto& v : out) v = std::sqrt(v);
  return out;
}

/// Weighted Jacobian of the peak model with respect to the physical
/// parameters (center, f_G, f_L, amplitude, baseline).
inline Mat physical_jacobian(const Spectrum& s, std::span<const double> sqrt_w,
                             const VoigtParams& p) {
  Mat J(static_cast<Eigen::Index>(s.size()), 5);
  const double sigma = p.sigma(), gamma = p.gamma();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double sw = sqrt_w[i];
    const VoigtEval v = eval_voigt_with_derivatives(s.energy[i] - p.center, sigma, gamma);
    J(row, 0) = -sw * p.amplitude * v.d_x;
    J(row, 1) = sw * p.amplitude * v.d_sigma / constants::fwhm_per_sigma;
    J(row, 2) = sw * p.amplitude * v.d_gamma * 0.5;
    J(row, 3) = sw * v.value;
    J(row, 4) = sw;
  }
  return J;
}

inline VoigtParams uncertainties_from(const Mat& J_phys, double rss, PeakShape shape) {
  // Drop the pinned width so it does not soak up a spurious direction.
  std::vector<Eigen::Index> keep = {0, 3, 4};
  if (shape != PeakShape::Lorentzian) keep.push_back(1);
  if (shape != PeakShape::Gaussian) keep.push_back(2);
  std::sort(keep.begin(), keep.end());
  Mat Jk(J_phys.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) Jk.col(Eigen::Index(c)) = J_phys.col(keep[c]);
  const Mat cov = linearized_covariance(Jk, rss);
  std::array<double, 5> sd{};
  for (std::size_t c = 0; c < keep.size(); ++c)
    sd[std::size_t(keep[c])] = std::sqrt(std::max(cov(Eigen::Index(c), Eigen::Index(c)), 0.0));
  return {sd[0], sd[1], sd[2], sd[3], sd[4]};
}

}  // namespace detail

/// Starting point: centroid of the above-half-maximum bins, total width from
/// the half-maximum crossings, split per shape (1:1 for Voigt).
inline VoigtParams initial_guess(const Spectrum& s, PeakShape shape = PeakShape::Voigt) {
  const PeakEstimate est = estimate_peak(s);
  VoigtParams p;
  p.center = est.center;
  p.baseline = est.baseline;
  switch (shape) {
    case PeakShape::Voigt: {
      const double each = est.width / (fwhm_lin + std::sqrt(fwhm_quad + 1.0));
      p.f_G = each;
      p.f_L = each;
      break;
    }
    case PeakShape::Gaussian: p.f_G = est.width; break;
    case PeakShape::Lorentzian: p.f_L = est.width; break;
  }
  p.amplitude = est.height / eval_voigt(0.0, p.sigma(), p.gamma());
  return p;
}

/// Relative RSS (against the weighted data norm) at which a peak fit is
/// treated as exact. Widths pinned near zero by the squared
/// parameterization otherwise creep toward zero for hundreds of iterations.
inline constexpr double noiseless_rss_floor = 1e-15;

/// Width below which a fitted component is retried pinned at zero, relative
/// to the total FWHM.
inline constexpr double boundary_width_fraction = 1e-2;

namespace detail {

inline VoigtFit fit_peak(const Spectrum& s, std::optional<VoigtParams> init,
                         const VoigtFitOptions& opt) {
  VoigtParams start = initial_guess(s, opt.shape);
  if (init) {
    start = *init;
    const double floor = 1e-3 * std::max(init->f_G + init->f_L, 1e-6);
    if (opt.shape != PeakShape::Lorentzian) start.f_G = std::max(start.f_G, floor);
    if (opt.shape != PeakShape::Gaussian) start.f_L = std::max(start.f_L, floor);
  }
  if (opt.shape == PeakShape::Gaussian) start.f_L = 0.0;
  if (opt.shape == PeakShape::Lorentzian) start.f_G = 0.0;

  const detail::PeakLayout layout(opt.shape);
  const auto sqrt_w = detail::sqrt_weights(s, opt.weighting);
  const double origin = start.center;
  const auto n = static_cast<Eigen::Index>(s.size());
  const detail::PeakColumns cols{0, layout.has_p ? layout.ip() : -1,
                                 layout.has_q ? layout.iq() : -1, layout.iamp(), layout.ibase()};

  auto unpack = [&](const Vec& v) {
    const double p = layout.has_p ? v[layout.ip()] : 0.0;
    const double q = layout.has_q ? v[layout.iq()] : 0.0;
    return std::array<double, 5>{v[0], p, q, v[layout.iamp()], v[layout.ibase()]};
  };
  LsqProblem prob;
  prob.residuals = [&](const Vec& v) {
    Vec r(n);
    const auto a = unpack(v);
    detail::peak_rows(s, sqrt_w, origin, a[0], a[1], a[2], a[3], a[4], layout.has_p,
                      layout.has_q, 0, &r, nullptr, cols);
    return r;
  };
  prob.jacobian = [&](const Vec& v) {
    Mat J(n, layout.size());
    const auto a = unpack(v);
    detail::peak_rows(s, sqrt_w, origin, a[0], a[1], a[2], a[3], a[4], layout.has_p,
                      layout.has_q, 0, nullptr, &J, cols);
    return J;
  };

  LsqOptions lsq = opt.lsq;
  if (lsq.rss_floor == 0.0) {
    double norm = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      norm += sqrt_w[i] * sqrt_w[i] * s.intensity[i] * s.intensity[i];
    lsq.rss_floor = noiseless_rss_floor * norm;
  }
  const LsqResult res = levenberg_marquardt(prob, layout.encode(start, origin), lsq);
  if (!res.converged)
    fail(ErrorKind::NotConverged,
         "Voigt fit did not converge in " + std::to_string(res.iterations) + " iterations");

  VoigtFit fit;
  fit.params = layout.decode(res.params, origin);
  fit.rss = res.rss;
  fit.n_points = s.size();
  fit.converged = true;
  fit.n_iterations = res.iterations;
  fit.uncertainties = detail::uncertainties_from(
      detail::physical_jacobian(s, sqrt_w, fit.params), res.rss, opt.shape);
  return fit;
}

}  // namespace detail

/// Damped least-squares fit of one Voigt peak plus constant baseline. When a
/// fitted width lands near zero the fit is repeated with that width pinned at
/// zero and the pinned result is kept if its RSS is no larger.
inline VoigtFit fit_voigt(const Spectrum& s, std::optional<VoigtParams> init = std::nullopt,
                          const VoigtFitOptions& opt = {}) {
  VoigtFit fit = detail::fit_peak(s, init, opt);
  if (opt.shape != PeakShape::Voigt) return fit;
  const double cut = boundary_width_fraction * fit.f_V();
  const bool g_small = fit.params.f_G < cut, l_small = fit.params.f_L < cut;
  if (g_small == l_small) return fit;
  VoigtFitOptions pinned = opt;
  pinned.shape = g_small ? PeakShape::Lorentzian : PeakShape::Gaussian;
  try {
    VoigtFit edge = detail::fit_peak(s, fit.params, pinned);
    if (edge.rss <= fit.rss) {
      edge.n_iterations += fit.n_iterations;
      return edge;
    }
  } catch (const Error&) {
  }
  return fit;
}

// ===========================================================================
// Lineshape classification

enum class LineshapeClass { Gaussian, Lorentzian, Ambiguous };

constexpr std::string_view to_string(LineshapeClass c) {
  switch (c) {
    case LineshapeClass::Gaussian: return "Gaussian";
    case LineshapeClass::Lorentzian: return "Lorentzian";
    case LineshapeClass::Ambiguous: return "Ambiguous";
  }
  return "Unknown";
}

struct Classification {
  LineshapeClass shape = LineshapeClass::Ambiguous;
  double rss_gaussian = 0.0;
  double rss_lorentzian = 0.0;
  double rss_ratio = 1.0;  // worse / better
};

inline constexpr double classification_ratio_gate = 1.2;

/// Pure-Gaussian vs pure-Lorentzian fit; the lower-RSS shape wins when the
/// RSS ratio exceeds 1.2.
inline Classification classify_lineshape(const Spectrum& s, Weighting w = Weighting::Poisson) {
  VoigtFitOptions go{w, PeakShape::Gaussian, {}};
  VoigtFitOptions lo{w, PeakShape::Lorentzian, {}};
  const VoigtFit g = fit_voigt(s, std::nullopt, go);
  const VoigtFit l = fit_voigt(s, std::nullopt, lo);
  Classification c;
  c.rss_gaussian = g.rss;
  c.rss_lorentzian = l.rss;
  const double lo_rss = std::min(g.rss, l.rss);
  const double hi_rss = std::max(g.rss, l.rss);
  c.rss_ratio = lo_rss > 0.0 ? hi_rss / lo_rss : (hi_rss > 0.0 ? INFINITY : 1.0);
  if (c.rss_ratio > classification_ratio_gate)
    c.shape = g.rss < l.rss ? LineshapeClass::Gaussian : LineshapeClass::Lorentzian;
  return c;
}

// ===========================================================================
// Gaussian / Lorentzian component extraction across a temperature series

struct TemperatureFit {
  double temperature = 0.0;
  VoigtFit fit;
};

enum class ExtractionMode { Free, SharedFG };

struct ComponentSeries {
  double f_G_floor = 0.0;
  double f_G_floor_uncertainty = 0.0;
  std::vector<double> temperature;
  std::vector<double> f_L;
  std::vector<VoigtFit> fits;  // refitted values in SharedFG mode
};

namespace detail {

inline void require_series(std::size_t n_spectra, std::size_t n_fits) {
  require(n_spectra == n_fits, ErrorKind::Domain, "series: spectra and fits differ in length");
  require(n_fits >= 3, ErrorKind::InsufficientData,
          "series: need at least 3 temperatures, got " + std::to_string(n_fits));
}

}  // namespace detail

/// Free mode reports the per-temperature components as fitted (floor = mean
/// of the per-temperature f_G). SharedFG mode refits every spectrum jointly
/// with one Gaussian width and per-spectrum center, f_L, amplitude and
/// baseline, seeded from `fits`.
inline ComponentSeries extract_components(std::span<const Spectrum> spectra,
                                          std::span<const TemperatureFit> fits,
                                          ExtractionMode mode,
                                          Weighting weighting = Weighting::Poisson,
                                          const LsqOptions& lsq = {}) {
  detail::require_series(spectra.size(), fits.size());
  ComponentSeries out;
  for (const auto& f : fits) out.temperature.push_back(f.temperature);

  if (mode == ExtractionMode::Free) {
    double sum = 0.0, var = 0.0;
    for (const auto& f : fits) {
      out.f_L.push_back(f.fit.params.f_L);
      out.fits.push_back(f.fit);
      sum += f.fit.params.f_G;
      var += f.fit.uncertainties.f_G * f.fit.uncertainties.f_G;
    }
    const double m = double(fits.size());
    out.f_G_floor = sum / m;
    out.f_G_floor_uncertainty = std::sqrt(var) / m;
    return out;
  }

  const auto m = static_cast<Eigen::Index>(spectra.size());
  std::vector<std::vector<double>> sqrt_w;
  std::vector<Eigen::Index> row0;
  std::vector<double> origin;
  Eigen::Index rows = 0;
  double fg0 = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    validate(spectra[std::size_t(k)]);
    sqrt_w.push_back(detail::sqrt_weights(spectra[std::size_t(k)], weighting));
    row0.push_back(rows);
    rows += static_cast<Eigen::Index>(spectra[std::size_t(k)].size());
    origin.push_back(fits[std::size_t(k)].fit.params.center);
    fg0 += fits[std::size_t(k)].fit.params.f_G;
  }
  fg0 = std::max(fg0 / double(m), 1e-6);

  // [p shared, then per spectrum: offset, q, amplitude, baseline]
  const Eigen::Index npar = 1 + 4 * m;
  Vec start(npar);
  start[0] = std::sqrt(fg0);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& p = fits[std::size_t(k)].fit.params;
    const double fl_floor = 1e-3 * std::max(p.f_G + p.f_L, 1e-6);
    start[1 + 4 * k] = 0.0;
    start[2 + 4 * k] = std::sqrt(std::max(p.f_L, fl_floor));
    start[3 + 4 * k] = p.amplitude;
    start[4 + 4 * k] = p.baseline;
  }

  auto fill = [&](const Vec& v, Vec* r, Mat* J) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index b = 1 + 4 * k;
      detail::peak_rows(spectra[std::size_t(k)], sqrt_w[std::size_t(k)], origin[std::size_t(k)],
                        v[b], v[0], v[b + 1], v[b + 2], v[b + 3], true, true, row0[std::size_t(k)],
                        r, J, {b, 0, b + 1, b + 2, b + 3});
    }
  };
  LsqProblem prob;
  prob.residuals = [&](const Vec& v) {
    Vec r(rows);
    fill(v, &r, nullptr);
    return r;
  };
  prob.jacobian = [&](const Vec& v) {
    Mat J = Mat::Zero(rows, npar);
    fill(v, nullptr, &J);
    return J;
  };
  const LsqResult res = levenberg_marquardt(prob, start, lsq);
  if (!res.converged)
    fail(ErrorKind::NotConverged, "shared-f_G series fit did not converge");

  out.f_G_floor = res.params[0] * res.params[0];
  // Floor uncertainty from the joint covariance, mapped through f_G = p^2.
  const Mat cov = linearized_covariance(prob.jacobian(res.params), res.rss);
  out.f_G_floor_uncertainty = 2.0 * std::abs(res.params[0]) * std::sqrt(std::max(cov(0, 0), 0.0));
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index b = 1 + 4 * k;
    VoigtFit f;
    f.params = {origin[std::size_t(k)] + res.params[b], out.f_G_floor,
                res.params[b + 1] * res.params[b + 1], res.params[b + 2], res.params[b + 3]};
    f.n_points = spectra[std::size_t(k)].size();
    f.converged = true;
    f.n_iterations = res.iterations;
    Vec rk = Vec::Zero(rows);
    fill(res.params, &rk, nullptr);
    f.rss = rk.segment(row0[std::size_t(k)], Eigen::Index(f.n_points)).squaredNorm();
    f.uncertainties = detail::uncertainties_from(
        detail::physical_jacobian(spectra[std::size_t(k)], sqrt_w[std::size_t(k)], f.params), f.rss,
        PeakShape::Voigt);
    out.f_L.push_back(f.params.f_L);
    out.fits.push_back(f);
  }
  return out;
}

// ===========================================================================
// Linewidth-vs-temperature model fits

/// Which linewidth the data points carry.
enum class LinewidthQuantity { TotalFWHM, Lorentzian };

struct LinewidthPoint {
  double temperature = 0.0;
  double value = 0.0;  // meV
  double sigma = 1.0;  // residual scale; 1 = unweighted
};

struct SeriesFitOptions {
  LinewidthQuantity quantity = LinewidthQuantity::TotalFWHM;
  double theta_D = default_theta_D_K;
  double phonon_energy = default_phonon_energy_meV;
  std::optional<double> fixed_fG;  // TotalFWHM only; free when unset
  bool free_phonon_energy = false;
  LsqOptions lsq{};
};

struct ModelFit {
  DephasingModel model;
  double rss = 0.0;
  double aic = 0.0;
  int n_params = 0;
  std::size_t n_points = 0;
  int iterations = 0;
};

/// AIC = n ln(rss / n) + 2k. A zero RSS is floored at the smallest normal
/// double so the value stays finite.
inline double akaike(double rss, std::size_t n, int k) {
  const double r = std::max(rss, std::numeric_limits<double>::min());
  return double(n) * std::log(r / double(n)) + 2.0 * double(k);
}

namespace detail {

// Unit-amplitude temperature dependence of each law and its slope with
// respect to the phonon energy (optical mode only).
struct LawShape {
  ModelKind kind;
  double theta_D;
  double debye_ref = 0.0;

  LawShape(ModelKind k, double theta) : kind(k), theta_D(theta) {
    if (kind == ModelKind::AcousticDebye) debye_ref = debye_integral(acoustic_reference_K, theta_D);
  }

  double value(double T, double energy) const {
    if (T == 0.0) return 0.0;
    switch (kind) {
      case ModelKind::AcousticDebye: return debye_integral(T, theta_D) / debye_ref;
      case ModelKind::CubicLaw: return T * T * T;
      case ModelKind::OpticalMode: {
        const double n = bose_einstein(energy, T);
        return n * (n + 1.0);
      }
    }
    return 0.0;
  }

  double d_energy(double T, double energy) const {
    if (kind != ModelKind::OpticalMode || T == 0.0) return 0.0;
    const double n = bose_einstein(energy, T);
    // d/dE [n(n+1)] = (2n + 1) dn/dE, dn/dE = -n(n+1) / (k_B T)
    return -(2.0 * n + 1.0) * n * (n + 1.0) / (constants::k_B * T);
  }
};

inline DephasingModel make_model(ModelKind kind, double amplitude, double fG, double theta_D,
                                 double energy) {
  DephasingModel m;
  m.gaussian_floor_fG = fG;
  switch (kind) {
    case ModelKind::AcousticDebye: m.law = AcousticDebye{amplitude, theta_D}; break;
    case ModelKind::CubicLaw: m.law = CubicLaw{amplitude}; break;
    case ModelKind::OpticalMode: m.law = OpticalMode{amplitude, energy}; break;
  }
  return m;
}

}  // namespace detail

namespace detail {

// Residuals and Jacobian of a linewidth-series fit. Free parameters: the
// amplitude, then sqrt(f_G) when the floor is free, then sqrt(phonon energy)
// when requested.
struct SeriesObjective {
  std::vector<LinewidthPoint> data;
  LawShape shape;
  bool total, free_fg, free_e;
  int k;
  double fixed_fg, phonon_energy;
  Eigen::Index i_g, i_e;
  std::vector<double> fixed_shape;

  SeriesObjective(std::span<const LinewidthPoint> d, ModelKind kind, const SeriesFitOptions& opt)
      : data(d.begin(), d.end()),
        shape(kind, opt.theta_D),
        total(opt.quantity == LinewidthQuantity::TotalFWHM),
        free_fg(total && !opt.fixed_fG),
        free_e(kind == ModelKind::OpticalMode && opt.free_phonon_energy),
        k(1 + int(free_fg) + int(free_e)),
        fixed_fg(total ? opt.fixed_fG.value_or(0.0) : 0.0),
        phonon_energy(opt.phonon_energy),
        i_g(1),
        i_e(1 + Eigen::Index(free_fg)) {
    // Debye integrals are the expensive part; precompute at the fixed energy.
    fixed_shape.reserve(data.size());
    for (const auto& p : data) fixed_shape.push_back(shape.value(p.temperature, phonon_energy));
  }

  std::array<double, 3> unpack(const Vec& v) const {
    const double fg = free_fg ? v[i_g] * v[i_g] : fixed_fg;
    const double e = free_e ? v[i_e] * v[i_e] : phonon_energy;
    return {v[0], fg, e};
  }

  double shape_at(std::size_t i, double e) const {
    return free_e ? shape.value(data[i].temperature, e) : fixed_shape[i];
  }

  Vec residuals(const Vec& v) const {
    const auto [amp, fg, e] = unpack(v);
    Vec r(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double fl = amp * shape_at(i, e);
      const double model = total ? fwhm_lin * fl + std::sqrt(fwhm_quad * fl * fl + fg * fg) : fl;
      r[Eigen::Index(i)] = (model - data[i].value) / data[i].sigma;
    }
    return r;
  }

  Mat jacobian(const Vec& v) const {
    const auto [amp, fg, e] = unpack(v);
    Mat J(static_cast<Eigen::Index>(data.size()), k);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto row = Eigen::Index(i);
      const double s = shape_at(i, e);
      const double fl = amp * s;
      double dm_dfl = 1.0, dm_dfg = 0.0;
      if (total) {
        const double root = std::sqrt(fwhm_quad * fl * fl + fg * fg);
        dm_dfl = fwhm_lin + (root > 0.0 ? fwhm_quad * fl / root : std::sqrt(fwhm_quad));
        dm_dfg = root > 0.0 ? fg / root : 1.0;
      }
      const double inv = 1.0 / data[i].sigma;
      J(row, 0) = dm_dfl * s * inv;
      if (free_fg) J(row, i_g) = dm_dfg * 2.0 * v[i_g] * inv;
      if (free_e)
        J(row, i_e) = dm_dfl * amp * shape.d_energy(data[i].temperature, e) * 2.0 * v[i_e] * inv;
    }
    return J;
  }

  LsqProblem problem() const {
    return {[this](const Vec& v) { return residuals(v); },
            [this](const Vec& v) { return jacobian(v); }};
  }
};

}  // namespace detail

/// Least-squares fit of one model's free parameters (amplitude, f_G unless
/// fixed or fitting bare f_L, phonon energy when requested) to a linewidth
/// series. theta_D is always held fixed.
inline ModelFit fit_series(std::span<const LinewidthPoint> data, ModelKind kind,
                           const SeriesFitOptions& opt = {}) {
  const std::size_t n = data.size();
  const int k = 1 + int(opt.quantity == LinewidthQuantity::TotalFWHM && !opt.fixed_fG) +
                int(kind == ModelKind::OpticalMode && opt.free_phonon_energy);
  require(n >= 3 && n > std::size_t(k), ErrorKind::InsufficientData,
          "series fit: " + std::to_string(n) + " points cannot constrain " + std::to_string(k) +
              " free parameters");
  require(opt.theta_D > 0.0 && opt.phonon_energy > 0.0, ErrorKind::Domain,
          "series fit: theta_D and phonon energy must be > 0");
  for (const auto& d : data)
    require(d.temperature >= 0.0 && std::isfinite(d.value) && d.sigma > 0.0, ErrorKind::Domain,
            "series fit: invalid data point");

  const detail::SeriesObjective obj(data, kind, opt);
  const bool total = obj.total, free_fg = obj.free_fg, free_e = obj.free_e;
  const double fixed_fg = obj.fixed_fg;
  const auto& fixed_shape = obj.fixed_shape;
  const Eigen::Index i_g = obj.i_g, i_e = obj.i_e;
  const LsqProblem prob = obj.problem();

  // Linear estimate of the amplitude given a starting floor.
  double fg0 = fixed_fg;
  if (free_fg) {
    double lo = INFINITY, hi = 0.0;
    for (const auto& d : data) {
      lo = std::min(lo, d.value);
      hi = std::max(hi, d.value);
    }
    fg0 = std::max(lo, 1e-3 * hi);
    fg0 = std::max(fg0, 1e-9);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fl = data[i].value;
    if (total) fl = invert_fwhm(std::max(data[i].value, fg0), fg0);
    num += fl * fixed_shape[i];
    den += fixed_shape[i] * fixed_shape[i];
  }
  require(den > 0.0, ErrorKind::InsufficientData, "series fit: all temperatures are zero");
  Vec start(k);
  start[0] = std::max(num / den, 1e-12 / std::sqrt(den));
  if (free_fg) start[i_g] = std::sqrt(fg0);
  if (free_e) start[i_e] = std::sqrt(opt.phonon_energy);

  const LsqResult res = levenberg_marquardt(prob, start, opt.lsq);
  if (!res.converged)
    fail(ErrorKind::NotConverged,
         std::string("series fit of ") + std::string(to_string(kind)) + " did not converge");
  const auto [amp, fg, e] = obj.unpack(res.params);
  ModelFit out;
  out.model = detail::make_model(kind, amp, fg, opt.theta_D, e);
  out.rss = res.rss;
  out.n_params = k;
  out.n_points = n;
  out.aic = akaike(res.rss, n, k);
  out.iterations = res.iterations;
  return out;
}

struct ModelCandidate {
  ModelKind kind;
  SeriesFitOptions options{};
};

struct ComparisonRow {
  ModelFit fit;
  double delta_aic = 0.0;
  std::size_t declaration_index = 0;
};

/// Fits each candidate on the same data and ranks by AIC ascending; ties go
/// to fewer parameters, then to declaration order.
inline std::vector<ComparisonRow> compare_models(std::span<const LinewidthPoint> data,
                                                 std::span<const ModelCandidate> candidates) {
  require(!candidates.empty(), ErrorKind::InsufficientData, "compare_models: no candidates");
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    rows.push_back({fit_series(data, candidates[i].kind, candidates[i].options), 0.0, i});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.fit.aic != b.fit.aic) return a.fit.aic < b.fit.aic;
    if (a.fit.n_params != b.fit.n_params) return a.fit.n_params < b.fit.n_params;
    return a.declaration_index < b.declaration_index;
  });
  for (auto& r : rows) r.delta_aic = r.fit.aic - rows.front().fit.aic;
  return rows;
}

// ===========================================================================
// Whole-series pipeline

struct SeriesOptions {
  double theta_D = default_theta_D_K;
  double phonon_energy = default_phonon_energy_meV;
  std::optional<double> fixed_fG;
  VoigtFitOptions voigt{};
  bool parallel = true;
};

struct SeriesFitResult {
  std::vector<TemperatureFit> per_temperature;
  std::vector<LinewidthPoint> linewidths;  // total FWHM per temperature
  std::vector<ComparisonRow> model_fits;   // ranked
  ModelKind best_model = ModelKind::AcousticDebye;
  double gaussian_floor_estimate = 0.0;
  double gaussian_floor_uncertainty = 0.0;
};

/// Per-spectrum Voigt fits, shared-f_G extraction, and all three models
/// fitted to the total-FWHM series.
inline SeriesFitResult analyze_series(std::vector<Spectrum> spectra,
                                      const SeriesOptions& opt = {}) {
  std::stable_sort(spectra.begin(), spectra.end(),
                   [](const auto& a, const auto& b) { return a.temperature < b.temperature; });
  for (std::size_t i = 1; i < spectra.size(); ++i)
    require(spectra[i].temperature > spectra[i - 1].temperature, ErrorKind::Domain,
            "series: duplicate temperature " + std::to_string(spectra[i].temperature) + " K");
  require(spectra.size() >= 3, ErrorKind::InsufficientData,
          "series: need at least 3 temperatures, got " + std::to_string(spectra.size()));

  auto one = [&](std::size_t i) {
    try {
      return fit_voigt(spectra[i], std::nullopt, opt.voigt);
    } catch (const Error& e) {
      throw Error(e.kind(), "T=" + std::to_string(spectra[i].temperature) + " K: " + e.what());
    }
  };
  SeriesFitResult out;
  out.per_temperature.resize(spectra.size());
  if (opt.parallel) {
    std::vector<std::future<VoigtFit>> jobs;
    for (std::size_t i = 0; i < spectra.size(); ++i)
      jobs.push_back(std::async(std::launch::async, one, i));
    for (std::size_t i = 0; i < spectra.size(); ++i)
      out.per_temperature[i] = {spectra[i].temperature, jobs[i].get()};
  } else {
    for (std::size_t i = 0; i < spectra.size(); ++i)
      out.per_temperature[i] = {spectra[i].temperature, one(i)};
  }

  const ComponentSeries shared = extract_components(spectra, out.per_temperature,
                                                    ExtractionMode::SharedFG, opt.voigt.weighting);
  out.gaussian_floor_estimate = shared.f_G_floor;
  out.gaussian_floor_uncertainty = shared.f_G_floor_uncertainty;

  for (const auto& tf : out.per_temperature)
    out.linewidths.push_back({tf.temperature, tf.fit.f_V(), 1.0});

  SeriesFitOptions so;
  so.theta_D = opt.theta_D;
  so.phonon_energy = opt.phonon_energy;
  so.fixed_fG = opt.fixed_fG;
  const std::vector<ModelCandidate> cands = {{ModelKind::AcousticDebye, so},
                                             {ModelKind::CubicLaw, so},
                                             {ModelKind::OpticalMode, so}};
  out.model_fits = compare_models(out.linewidths, cands);
  out.best_model = out.model_fits.front().fit.model.kind();
  return out;
}

}  // namespace dephase
