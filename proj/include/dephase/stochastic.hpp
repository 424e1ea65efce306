#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "dephase/constants.hpp"
#include "dephase/error.hpp"
#include "dephase/fft.hpp"
#include "dephase/rng.hpp"
#include "dephase/spectrum.hpp"

namespace dephase {

/// Rates are angular frequencies [1/ps]; times in ps.
struct SimulationConfig {
  double sigma = 0.0;   // spectral-diffusion scale
  double gamma = 0.0;   // Lorentzian dephasing rate
  double lambda = 0.0;  // field correlation rate
  double t_max = 0.0;
  double dt = 0.0;
  std::size_t n_traj = 1;
  std::uint64_t seed = 0;
};

inline void validate(const SimulationConfig& c) {
  auto bad = [](const std::string& m) { fail(ErrorKind::Config, "simulation config: " + m); };
  if (!(c.sigma >= 0.0 && c.gamma >= 0.0 && c.lambda >= 0.0)) bad("rates must be >= 0");
  if (!(c.dt > 0.0)) bad("dt must be > 0");
  const double fastest = std::max({c.sigma, c.gamma, c.lambda});
  if (fastest > 0.0 && c.dt > 0.1 / fastest * (1.0 + 1e-12))
    bad("dt must be <= 0.1 / max(sigma, gamma, lambda)");
  const double decay = c.sigma + c.gamma;
  if (!(decay > 0.0) || c.t_max < 20.0 / decay * (1.0 - 1e-12))
    bad("t_max must be >= 20 / (sigma + gamma)");
  if (c.n_traj < 1) bad("n_traj must be >= 1");
}

/// Coherence g(t) on a uniform grid starting at t = 0. stderr is empty for
/// analytic traces.
struct CoherenceTrace {
  std::vector<double> t;
  std::vector<std::complex<double>> g;
  std::vector<double> stderr_;
  std::uint64_t seed = 0;
};

/// exp(-sigma^2 t^2 / 2) exp(-gamma |t|)
inline CoherenceTrace analytic_coherence(double sigma, double gamma, std::span<const double> t_grid) {
  require(sigma >= 0.0 && gamma >= 0.0, ErrorKind::Domain, "analytic_coherence: rates must be >= 0");
  require(!t_grid.empty() && t_grid.front() == 0.0, ErrorKind::Domain,
          "analytic_coherence: grid must start at t = 0");
  CoherenceTrace out;
  out.t.assign(t_grid.begin(), t_grid.end());
  out.g.reserve(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    require(i == 0 || t_grid[i] > t_grid[i - 1], ErrorKind::NonMonotonicGrid,
            "analytic_coherence: grid must be ascending");
    const double t = t_grid[i];
    out.g.emplace_back(std::exp(-0.5 * sigma * sigma * t * t) * std::exp(-gamma * std::abs(t)), 0.0);
  }
  return out;
}

inline std::vector<double> uniform_time_grid(double t_max, double dt) {
  const auto steps = static_cast<std::size_t>(std::llround(t_max / dt));
  std::vector<double> t(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) t[k] = double(k) * dt;
  return t;
}

namespace detail {

struct PhaseSums {
  std::vector<double> re, im, re2, im2;
  explicit PhaseSums(std::size_t n) : re(n), im(n), re2(n), im2(n) {}
};

// Accumulates exp(i phi(t)) over trajectories [first, last).
inline void run_trajectories(const SimulationConfig& c, std::size_t n_t, std::size_t first,
                             std::size_t last, PhaseSums& acc) {
  const double rho = std::exp(-c.lambda * c.dt);
  const double kick = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double half_step = 0.5 * c.sigma * c.dt;
  for (std::size_t j = first; j < last; ++j) {
    auto rng = substream(c.seed, j);
    std::normal_distribution<double> normal(0.0, 1.0);
    double e = normal(rng);  // stationary start
    double phi = 0.0;
    acc.re[0] += 1.0;
    acc.re2[0] += 1.0;
    for (std::size_t k = 1; k < n_t; ++k) {
      const double next = rho * e + kick * normal(rng);
      phi += half_step * (e + next);
      e = next;
      const double cr = std::cos(phi), si = std::sin(phi);
      acc.re[k] += cr;
      acc.im[k] += si;
      acc.re2[k] += cr * cr;
      acc.im2[k] += si * si;
    }
  }
}

}  // namespace detail

/// Monte-Carlo coherence under an exponentially correlated Gaussian field:
///   g(t) = < exp(i sigma int_0^t e(t') dt') > exp(-gamma t).
/// Trajectories are split into a fixed number of blocks whose partial sums
/// are combined in block order, so the result is identical for any thread
/// count.
inline CoherenceTrace mc_coherence(const SimulationConfig& c, unsigned threads = 0) {
  validate(c);
  const auto t = uniform_time_grid(c.t_max, c.dt);
  const std::size_t n_t = t.size();
  const std::size_t blocks = std::min<std::size_t>(c.n_traj, 8);

  std::vector<detail::PhaseSums> partial;
  partial.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) partial.emplace_back(n_t);
  auto bounds = [&](std::size_t b) { return c.n_traj * b / blocks; };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, blocks));
  if (threads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b)
      detail::run_trajectories(c, n_t, bounds(b), bounds(b + 1), partial[b]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < blocks; b += threads)
          detail::run_trajectories(c, n_t, bounds(b), bounds(b + 1), partial[b]);
      });
    for (auto& th : pool) th.join();
  }

  detail::PhaseSums total(n_t);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < n_t; ++k) {
      total.re[k] += p.re[k];
      total.im[k] += p.im[k];
      total.re2[k] += p.re2[k];
      total.im2[k] += p.im2[k];
    }

  CoherenceTrace out;
  out.t = t;
  out.seed = c.seed;
  out.g.resize(n_t);
  out.stderr_.resize(n_t);
  const double n = double(c.n_traj);
  for (std::size_t k = 0; k < n_t; ++k) {
    const double damp = std::exp(-c.gamma * t[k]);
    const double mr = total.re[k] / n, mi = total.im[k] / n;
    out.g[k] = {mr * damp, mi * damp};
    if (c.n_traj > 1) {
      const double vr = std::max(0.0, total.re2[k] / n - mr * mr) * n / (n - 1.0);
      const double vi = std::max(0.0, total.im2[k] / n - mi * mi) * n / (n - 1.0);
      out.stderr_[k] = std::sqrt((vr + vi) / n) * damp;
    }
  }
  out.g[0] = {1.0, 0.0};
  out.stderr_[0] = 0.0;
  return out;
}

inline constexpr double coherence_decay_threshold = 1e-6;
inline constexpr std::size_t spectrum_padding = 8;

/// Spectral density from a coherence trace: Fourier transform of the even
/// extension g(-t) = conj g(t), zero-padded x8, on an energy axis
/// center + hbar * omega [meV], normalized to unit area. The trace must have
/// decayed below 1e-6 (or below 3 standard errors for Monte-Carlo traces).
inline Spectrum spectrum_from_coherence(const CoherenceTrace& trace, double center_meV) {
  const std::size_t n = trace.t.size();
  require(n >= 2 && trace.g.size() == n, ErrorKind::Domain, "spectrum_from_coherence: bad trace");
  const double dt = trace.t[1] - trace.t[0];
  require(dt > 0.0, ErrorKind::NonMonotonicGrid, "spectrum_from_coherence: bad time step");
  // Monte-Carlo traces bottom out at their sampling noise, so the tail only
  // has to be indistinguishable from zero.
  double floor = coherence_decay_threshold;
  if (trace.stderr_.size() == n) floor = std::max(floor, 3.0 * trace.stderr_.back());
  if (std::abs(trace.g.back()) >= floor)
    fail(ErrorKind::InsufficientDecay,
         "coherence has not decayed by t_max (|g| = " + std::to_string(std::abs(trace.g.back())) +
             ", limit " + std::to_string(floor) + ")");

  const std::size_t m = next_power_of_two(spectrum_padding * (2 * n - 1));
  std::vector<std::complex<double>> a(m);
  a[0] = trace.g[0];
  for (std::size_t k = 1; k < n; ++k) {
    a[k] = trace.g[k];
    a[m - k] = std::conj(trace.g[k]);
  }
  fft_inplace(a);

  const double d_omega = 2.0 * constants::pi / (double(m) * dt);
  const double d_energy = constants::hbar * d_omega;
  Spectrum s;
  s.energy.resize(m - 1);
  s.intensity.resize(m - 1);
  // frequencies j = -(m/2 - 1) .. m/2 - 1, symmetric about the center
  const auto half = static_cast<std::ptrdiff_t>(m / 2);
  for (std::ptrdiff_t j = -(half - 1); j <= half - 1; ++j) {
    const auto idx = static_cast<std::size_t>(j + half - 1);
    const auto bin = static_cast<std::size_t>(j < 0 ? j + std::ptrdiff_t(m) : j);
    s.energy[idx] = center_meV + double(j) * d_energy;
    s.intensity[idx] = a[bin].real() * dt;
  }
  double area = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i)
    area += 0.5 * (s.intensity[i] + s.intensity[i - 1]) * d_energy;
  for (auto& v : s.intensity) v /= area;
  return s;
}

inline Spectrum simulate_spectrum(const SimulationConfig& c, double center_meV,
                                  unsigned threads = 0) {
  return spectrum_from_coherence(mc_coherence(c, threads), center_meV);
}

}  // namespace dephase
