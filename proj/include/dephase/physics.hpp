#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <variant>

#include "dephase/constants.hpp"
#include "dephase/error.hpp"
#include "dephase/lineshape.hpp"
#include "dephase/quadrature.hpp"

namespace dephase {

/// Mean phonon occupation 1/(exp(E/k_B T) - 1). Exactly 0 at T = 0.
inline double bose_einstein(double energy_meV, double temperature_K) {
  require(energy_meV > 0.0, ErrorKind::Domain, "bose_einstein: energy must be > 0");
  require(temperature_K >= 0.0, ErrorKind::Domain,
          "bose_einstein: temperature must be >= 0");
  if (temperature_K == 0.0) return 0.0;
  const double x = energy_meV / (constants::k_B * temperature_K);
  return 1.0 / std::expm1(x);
}

/// Dimensionless Debye-integral kernel x^2 e^x / (e^x - 1)^2, written as
/// (x / (2 sinh(x/2)))^2 so that it tends smoothly to 1 at x = 0.
inline double debye_kernel(double x) {
  if (x == 0.0) return 1.0;
  if (x > 700.0) return x * x * std::exp(-x);
  const double r = x / (2.0 * std::sinh(0.5 * x));
  return r * r;
}

/// Integral of debye_kernel over [0, x_max]. Beyond x = 750 the kernel is
/// below the smallest double relative to the integral, so the upper limit is
/// clamped there.
inline QuadratureResult reduced_debye_integral(double x_max,
                                               const QuadratureOptions& opt = {}) {
  require(x_max >= 0.0, ErrorKind::Domain, "reduced_debye_integral: x_max must be >= 0");
  if (x_max == 0.0) return {};
  const double upper = std::min(x_max, 750.0);
  // Split at the kernel's decay scale so the adaptive scheme starts with
  // sensible panels for very large cutoffs.
  if (upper <= 40.0) return integrate(debye_kernel, 0.0, upper, opt);
  auto head = integrate(debye_kernel, 0.0, 40.0, opt);
  auto tail = integrate(debye_kernel, 40.0, upper, opt);
  return {head.value + tail.value, head.error + tail.error, head.intervals + tail.intervals};
}

/// (k_B T / hbar)^3 [1/ps^3]
inline double thermal_rate_cubed(double temperature_K) {
  const double w = constants::k_B * temperature_K / constants::hbar;
  return w * w * w;
}

/// J(T, theta_D) = int_0^{omega_D} omega^2 n (n + 1) d omega in 1/ps^3,
/// with the quadrature error estimate scaled the same way.
inline QuadratureResult debye_integral_with_error(double temperature_K, double theta_D_K,
                                                  const QuadratureOptions& opt = {}) {
  require(temperature_K >= 0.0, ErrorKind::Domain,
          "debye_integral: temperature must be >= 0");
  require(theta_D_K > 0.0, ErrorKind::Domain, "debye_integral: theta_D must be > 0");
  if (temperature_K == 0.0) return {};
  auto r = reduced_debye_integral(theta_D_K / temperature_K, opt);
  const double scale = thermal_rate_cubed(temperature_K);
  return {r.value * scale, r.error * scale, r.intervals};
}

inline double debye_integral(double temperature_K, double theta_D_K) {
  return debye_integral_with_error(temperature_K, theta_D_K).value;
}

/// Infinite-cutoff limit of debye_integral: (k_B T / hbar)^3 * pi^2 / 3.
inline double cubic_law_asymptote(double temperature_K) {
  require(temperature_K >= 0.0, ErrorKind::Domain,
          "cubic_law_asymptote: temperature must be >= 0");
  return thermal_rate_cubed(temperature_K) * constants::pi * constants::pi / 3.0;
}

// ---------------------------------------------------------------------------
// Linewidth-vs-temperature models

/// Reference temperature at which AcousticDebye::amplitude equals f_L.
inline constexpr double acoustic_reference_K = 270.0;
inline constexpr double default_theta_D_K = 600.0;
inline constexpr double default_phonon_energy_meV = 18.0;

/// Acoustic-phonon dephasing with a finite Debye cutoff.
struct AcousticDebye {
  double amplitude = 0.0;  // f_L at acoustic_reference_K [meV]
  double theta_D = default_theta_D_K;
};

/// Infinite-Debye T^3 law.
struct CubicLaw {
  double amplitude = 0.0;  // [meV / K^3]
};

/// Coupling to a single optical phonon mode.
struct OpticalMode {
  double amplitude = 0.0;  // [meV]
  double phonon_energy = default_phonon_energy_meV;
};

enum class ModelKind { AcousticDebye, CubicLaw, OpticalMode };

constexpr std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::AcousticDebye: return "AcousticDebye";
    case ModelKind::CubicLaw: return "CubicLaw";
    case ModelKind::OpticalMode: return "OpticalMode";
  }
  return "Unknown";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "AcousticDebye" || s == "acoustic") return ModelKind::AcousticDebye;
  if (s == "CubicLaw" || s == "cubic") return ModelKind::CubicLaw;
  if (s == "OpticalMode" || s == "optical") return ModelKind::OpticalMode;
  fail(ErrorKind::Parse, "unknown model kind '" + std::string(s) + "'");
}

struct DephasingModel {
  std::variant<AcousticDebye, CubicLaw, OpticalMode> law;
  double gaussian_floor_fG = 0.0;  // temperature-independent Gaussian FWHM [meV]

  ModelKind kind() const { return static_cast<ModelKind>(law.index()); }
};

inline void validate(const DephasingModel& m) {
  require(m.gaussian_floor_fG >= 0.0, ErrorKind::Domain, "model: f_G floor must be >= 0");
  std::visit(
      [](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        require(law.amplitude >= 0.0, ErrorKind::Domain, "model: amplitude must be >= 0");
        if constexpr (std::is_same_v<T, AcousticDebye>)
          require(law.theta_D > 0.0, ErrorKind::Domain, "model: theta_D must be > 0");
        if constexpr (std::is_same_v<T, OpticalMode>)
          require(law.phonon_energy > 0.0, ErrorKind::Domain,
                  "model: phonon_energy must be > 0");
      },
      m.law);
}

/// Lorentzian FWHM f_L [meV] predicted by the model at a temperature.
inline double eval_model_fL(const DephasingModel& model, double temperature_K) {
  validate(model);
  require(temperature_K >= 0.0, ErrorKind::Domain, "eval_model_fL: temperature must be >= 0");
  if (temperature_K == 0.0) return 0.0;
  struct Visitor {
    double T;
    double operator()(const AcousticDebye& m) const {
      return m.amplitude * debye_integral(T, m.theta_D) /
             debye_integral(acoustic_reference_K, m.theta_D);
    }
    double operator()(const CubicLaw& m) const { return m.amplitude * T * T * T; }
    double operator()(const OpticalMode& m) const {
      const double n = bose_einstein(m.phonon_energy, T);
      return m.amplitude * n * (n + 1.0);
    }
  };
  return std::visit(Visitor{temperature_K}, model.law);
}

/// Total Voigt FWHM: the model's f_L combined with its constant Gaussian floor.
inline double eval_model_total_fwhm(const DephasingModel& model, double temperature_K) {
  return voigt_fwhm(model.gaussian_floor_fG, eval_model_fL(model, temperature_K));
}

}  // namespace dephase
