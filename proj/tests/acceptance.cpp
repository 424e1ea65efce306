// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dephase/dephase.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dephase;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = a + (b - a) * double(i) / double(n - 1);
  return x;
}

std::string g(double v) { return io::format_g(v, 4); }

// 1. eval_voigt against the direct convolution.
void voigt_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (double sigma : {0.1, 1.0, 10.0})
    for (double gamma : {0.1, 1.0, 10.0}) {
      const double fv = voigt_fwhm(fG_from_sigma(sigma), 2.0 * gamma);
      const auto x = linspace(-8.0 * fv, 8.0 * fv, 801);
      const auto ref = convolution_oracle(x, sigma, gamma);
      double peak = 0.0, gap = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = eval_voigt(x[i], sigma, gamma);
        peak = std::max(peak, v);
        gap = std::max(gap, std::abs(v - ref[i]));
      }
      worst = std::max(worst, gap / peak);
    }
  const double secs = seconds_since(t0);
  o.detail << "max peak-relative gap " << g(worst) << " over 9 (sigma, gamma) pairs in "
           << g(secs) << " s";
  o.check(worst < 1e-6, "gap < 1e-6");
  o.check(secs < 10.0, "runtime < 10 s");
}

// 2. FWHM approximation against bisected half-maximum crossings.
void fwhm_formula(Outcome& o) {
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double ratio = std::pow(10.0, -2.0 + 4.0 * double(i) / 19.0);
    const double fg = 1.0, fl = ratio;
    const double s = sigma_from_fG(fg), gm = 0.5 * fl;
    const double num = numeric_fwhm([&](double x) { return eval_voigt(x, s, gm); }, 0.0, fg + fl);
    worst = std::max(worst, std::abs(voigt_fwhm(fg, fl) - num) / num);
  }
  const double a1 = voigt_fwhm(0.72, 0.0), a2 = voigt_fwhm(0.0, 6.82);
  const double a2_formula = 0.5346 * 6.82 + std::sqrt(0.2166 * 6.82 * 6.82);
  o.detail << "max relative error " << g(worst) << " over 20 ratios; (0.72, 0) -> "
           << io::format_g(a1, 6) << ", (0, 6.82) -> " << io::format_g(a2, 6);
  o.check(worst < 1e-3, "error < 0.1%");
  o.check(a1 == 0.72, "(0.72, 0) -> 0.72");
  o.check(std::abs(a2 - a2_formula) <= 1e-14 * a2_formula, "(0, 6.82) per formula");
}

// 3. Debye integral against its low-temperature asymptote.
void debye_asymptote(Outcome& o) {
  const double pi_sq_3 = std::numbers::pi * std::numbers::pi / 3.0;
  double worst_low = 0.0;
  for (double T = 0.5; T <= 30.0; T += 0.5) {
    const double asym = thermal_rate_cubed(T) * pi_sq_3;
    worst_low = std::max(worst_low, std::abs(debye_integral(T, 600.0) / asym - 1.0));
  }
  bool below = true;
  for (double T = 0.5; T <= 3000.0; T *= 1.1) {
    const auto q = debye_integral_with_error(T, 600.0);
    const double asym = thermal_rate_cubed(T) * pi_sq_3;
    // Below about 20 K the gap to the asymptote is under one ulp of the
    // result, so only non-exceedance beyond the error estimate can be tested.
    below &= T >= 20.0 ? q.value < asym : q.value <= asym + q.error;
  }
  const double j_inf = oracle::debye_reduced_simpson(200.0);
  o.detail << "max deviation for T <= 30 K " << g(100.0 * worst_low)
           << "%; Simpson J(inf) - pi^2/3 = " << g(j_inf - pi_sq_3)
           << " (pi^2/6 would be " << io::format_g(pi_sq_3 / 2.0, 6) << ")";
  o.check(worst_low < 1e-2, "within 1% for T <= 30 K");
  o.check(below, "strictly below the asymptote");
  o.check(std::abs(j_inf - pi_sq_3) < 1e-8, "J(inf) = pi^2/3");
}

// 4. Debye versus T^3 calibrated to agree at 50 K.
void model_separation(Outcome& o) {
  const DephasingModel debye{AcousticDebye{1.0, 600.0}, 0.0};
  const double cubic_amp = eval_model_fL(debye, 50.0) / std::pow(50.0, 3);
  const DephasingModel cubic{CubicLaw{cubic_amp}, 0.0};
  auto diff_pct = [&](double T) {
    const double d = eval_model_fL(debye, T), c3 = eval_model_fL(cubic, T);
    return 100.0 * std::abs(c3 - d) / std::max(c3, d);
  };
  // Frozen from the first verified run.
  const std::vector<std::pair<double, double>> goldens = {
      {70, 0.50}, {90, 2.28}, {110, 5.54}, {120, 7.59}, {150, 14.7}, {200, 26.7}, {270, 40.5}};
  bool goldens_ok = true;
  for (const auto& [T, pct] : goldens) {
    const double got = diff_pct(T);
    o.detail << int(T) << " K " << io::format_g(got, 3) << "%; ";
    goldens_ok &= std::abs(got - pct) <= 0.005 * pct + 0.005;
  }
  double worst_low = 0.0;
  for (double T = 1.0; T <= 120.0; T += 1.0) worst_low = std::max(worst_low, diff_pct(T));
  o.detail << "max for T <= 120 K " << io::format_g(worst_low, 3) << "%";
  o.check(goldens_ok, "goldens reproduced");
  o.check(worst_low < 5.0, "< 5% for all T <= 120 K");
  o.check(diff_pct(270.0) > 25.0, "> 25% at 270 K");
}

// 5. Synthetic series through the full pipeline.
void end_to_end(Outcome& o) {
  const io::SynthConfig c;
  const auto spectra = io::synthetic_spectra(c);
  const auto r = analyze_series(spectra);
  double A = NAN;
  std::size_t rank_acoustic = 99, rank_cubic = 99;
  for (std::size_t i = 0; i < r.model_fits.size(); ++i) {
    const auto& fit = r.model_fits[i].fit;
    if (fit.model.kind() == ModelKind::AcousticDebye) {
      A = std::get<AcousticDebye>(fit.model.law).amplitude;
      rank_acoustic = i;
    }
    if (fit.model.kind() == ModelKind::CubicLaw) rank_cubic = i;
  }
  const auto cold = classify_lineshape(spectra.front());
  const auto hot = classify_lineshape(spectra.back());
  o.detail << "f_G " << io::format_g(r.gaussian_floor_estimate, 4) << " meV, A "
           << io::format_g(A, 4) << " meV, best " << to_string(r.best_model) << ", "
           << g(spectra.front().temperature) << " K " << to_string(cold.shape) << ", "
           << g(spectra.back().temperature) << " K " << to_string(hot.shape);
  o.check(std::abs(r.gaussian_floor_estimate - 0.72) < 0.05 * 0.72, "f_G within 5%");
  o.check(std::abs(A - 6.82) < 0.05 * 6.82, "A within 5%");
  o.check(rank_acoustic < rank_cubic, "AcousticDebye above CubicLaw");
  o.check(cold.shape == LineshapeClass::Gaussian, "10 K Gaussian");
  o.check(hot.shape == LineshapeClass::Lorentzian, "270 K Lorentzian");
}

// 6. Spectrum of an analytic coherence against the FWHM formula.
constexpr double hbar = 6.582119569e-1;  // meV ps

double trace_fwhm(double sigma, double gamma) {
  const double dt = 0.1 / std::max(sigma, gamma);
  double t_max = INFINITY;
  if (sigma > 0.0) t_max = std::sqrt(2.0 * std::log(1e7)) / sigma;
  if (gamma > 0.0) t_max = std::min(t_max, std::log(1e7) / gamma);
  const auto tr = analytic_coherence(sigma, gamma, uniform_time_grid(t_max, dt));
  return sampled_fwhm(spectrum_from_coherence(tr, 1800.0));
}

void coherence_closure(Outcome& o) {
  const double per_sigma = 2.0 * std::sqrt(2.0 * std::log(2.0));
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double s = u(rng), gm = u(rng);
    const double expect = voigt_fwhm(per_sigma * s * hbar, 2.0 * gm * hbar);
    worst = std::max(worst, std::abs(trace_fwhm(s, gm) / expect - 1.0));
  }
  const double gauss = std::abs(trace_fwhm(0.8, 0.0) / (per_sigma * 0.8 * hbar) - 1.0);
  const double lor = std::abs(trace_fwhm(0.0, 0.5) / (2.0 * 0.5 * hbar) - 1.0);
  o.detail << "max relative gap " << g(worst) << " over 5 random pairs; Gaussian limit "
           << g(gauss) << ", Lorentzian limit " << g(lor);
  o.check(worst < 0.01, "random pairs within 1%");
  o.check(gauss < 0.01 && lor < 0.01, "degenerate limits within 1%");
}

// 7. Monte-Carlo coherence.
double mean_stderr(const CoherenceTrace& tr) {
  double s = 0.0;
  for (std::size_t k = 1; k < tr.stderr_.size(); ++k) s += tr.stderr_[k];
  return s / double(tr.stderr_.size() - 1);
}

void monte_carlo(Outcome& o) {
  const auto t0 = Clock::now();
  const double sigma = 1.0, gamma = 0.2;
  SimulationConfig c{sigma, gamma, sigma / 100.0, 20.0, 0.05, 10000, 42};
  const auto tr = mc_coherence(c);
  const auto ref = analytic_coherence(sigma, gamma, tr.t);
  std::size_t outside = 0, points = 0;
  double worst_z = 0.0;
  for (std::size_t k = 1; k < tr.t.size() && tr.t[k] <= 5.0 / sigma; ++k) {
    const double z = std::abs(tr.g[k] - ref.g[k]) / tr.stderr_[k];
    worst_z = std::max(worst_z, z);
    outside += z >= 3.0;
    ++points;
  }
  const auto again = mc_coherence(c, 3);
  const bool same = tr.g.size() == again.g.size() &&
                    std::memcmp(tr.g.data(), again.g.data(), tr.g.size() * sizeof(tr.g[0])) == 0 &&
                    std::memcmp(tr.stderr_.data(), again.stderr_.data(),
                                tr.stderr_.size() * sizeof(double)) == 0;
  SimulationConfig s{1.0, 0.1, 0.05, 20.0, 0.05, 2500, 5};
  const double s1 = mean_stderr(mc_coherence(s));
  s.n_traj = 10000;
  const double s4 = mean_stderr(mc_coherence(s));
  const double secs = seconds_since(t0);
  o.detail << points << " points, worst |gap|/stderr " << g(worst_z) << ", " << outside
           << " beyond 3; stderr ratio for 4x n_traj " << g(s1 / s4) << "; " << g(secs) << " s";
  o.check(outside == 0, "within 3 standard errors pointwise");
  o.check(same, "same seed byte-identical");
  o.check(std::abs(s1 / s4 - 2.0) <= 0.2, "stderr halves within 10%");
  o.check(secs < 120.0, "runtime < 2 min");
}

// 8. Fitting engine.
double amplitude_for(double counts, double fG, double fL) {
  return counts / eval_voigt(0.0, sigma_from_fG(fG), 0.5 * fL);
}

Spectrum make_spectrum(const VoigtParams& p, double lo, double hi, double step,
                       std::mt19937_64* rng = nullptr) {
  Spectrum s;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = lo + step * double(i);
    double v = eval_peak(e, p);
    if (rng) v = double(std::poisson_distribution<long>(v)(*rng));
    s.energy.push_back(e);
    s.intensity.push_back(v);
  }
  return s;
}

VoigtParams line_peak(double center, double fG, double fL) {
  return {center, fG, fL, amplitude_for(900.0, fG, fL), 5.0};
}

template <class R>
double jacobian_gap(R residuals, const Mat& J, const Vec& v, const Vec& scale = Vec()) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < v.size(); ++c) {
    const double size = scale.size() ? scale[c] : (v[c] != 0.0 ? std::abs(v[c]) : 1.0);
    const double h = 1e-5 * size;
    Vec up = v, dn = v;
    up[c] += h;
    dn[c] -= h;
    const Vec fd = (residuals(up) - residuals(dn)) / (2.0 * h);
    worst = std::max(worst, (fd - J.col(c)).norm() / std::max(J.col(c).norm(), 1e-300));
  }
  return worst;
}

void fitting_engine(Outcome& o) {
  // Optimizer Jacobian.
  std::mt19937_64 noise(6), rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto s = make_spectrum(line_peak(1815.0, 0.9, 1.5), 1795.0, 1835.0, 0.1, &noise);
  const auto sw = detail::sqrt_weights(s, Weighting::Poisson);
  const auto n = static_cast<Eigen::Index>(s.size());
  double jac = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Vec v(5);
    v << -0.5 + u(rng), 0.3 + 1.2 * u(rng), 0.3 + 1.5 * u(rng), 500.0 + 2000.0 * u(rng),
        1.0 + 10.0 * u(rng);
    auto res = [&](const Vec& x) {
      Vec r(n);
      detail::peak_rows(s, sw, 1815.0, x[0], x[1], x[2], x[3], x[4], true, true, 0, &r, nullptr,
                        {0, 1, 2, 3, 4});
      return r;
    };
    Mat J(n, 5);
    detail::peak_rows(s, sw, 1815.0, v[0], v[1], v[2], v[3], v[4], true, true, 0, nullptr, &J,
                      {0, 1, 2, 3, 4});
    jac = std::max(jac, jacobian_gap(res, J, v));
  }

  // Noiseless round-trips.
  double rt = 0.0;
  {
    const auto f = fit_voigt(make_spectrum(line_peak(1820.2, 0.72, 0.0), 1770.0, 1860.0, 0.05));
    rt = std::max({rt, std::abs(f.params.center - 1820.2), std::abs(f.params.f_G - 0.72),
                   f.params.f_L});
  }
  {
    const auto f = fit_voigt(make_spectrum(line_peak(1813.5, 0.0, 6.82), 1770.0, 1860.0, 0.05));
    rt = std::max({rt, std::abs(f.params.center - 1813.5), std::abs(f.params.f_L - 6.82),
                   f.params.f_G});
  }
  double rt_rel = 0.0;
  {
    const VoigtParams p = line_peak(1816.3, 0.72, 1.9);
    const auto f = fit_voigt(make_spectrum(p, 1770.0, 1860.0, 0.05));
    rt_rel = std::max({std::abs(f.params.center / p.center - 1.0),
                       std::abs(f.params.f_G / p.f_G - 1.0), std::abs(f.params.f_L / p.f_L - 1.0),
                       std::abs(f.params.amplitude / p.amplitude - 1.0),
                       std::abs(f.params.baseline / p.baseline - 1.0)});
  }

  // Grid translation.
  std::mt19937_64 tr_rng(21);
  const auto base = make_spectrum(line_peak(1815.0, 0.72, 2.0), 1780.0, 1850.0, 0.05, &tr_rng);
  Spectrum shifted = base;
  for (auto& e : shifted.energy) e += 37.25;
  const auto a = fit_voigt(base), b = fit_voigt(shifted);
  const double trans = std::max({std::abs(b.params.center - a.params.center - 37.25),
                                 std::abs(b.params.f_G - a.params.f_G),
                                 std::abs(b.params.f_L - a.params.f_L)});

  o.detail << "Jacobian gap " << g(jac) << "; round-trip error " << g(rt) << " abs, "
           << g(rt_rel) << " rel; translation " << g(trans);
  o.check(jac < 1e-6, "Jacobian within 1e-6");
  o.check(rt < 1e-6 && rt_rel < 1e-6, "round-trips within 1e-6");
  o.check(trans < 1e-10, "translation within 1e-10");
}

// 9. File formats.
void format_stability(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "dephase_acceptance";
  fs::remove_all(root);
  io::SynthConfig c;
  c.seed = 17;
  const auto ma = io::generate_synthetic_series(c, root / "a");
  io::generate_synthetic_series(c, root / "b");

  bool synth_same = true, roundtrip = true;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    const auto name = e.path().filename();
    const std::string text = io::read_file(e.path());
    synth_same &= text == io::read_file(root / "b" / name);
    if (name.extension() == ".csv") {
      io::save_spectrum(root / "resaved.csv", io::load_spectrum(e.path()));
      roundtrip &= io::read_file(root / "resaved.csv") == text;
    }
  }
  std::vector<fs::path> inputs;
  for (const auto& e : ma.entries) inputs.push_back(io::resolve(ma, e));
  auto record = [&] {
    return io::series_record(analyze_series(io::load_series(ma)), io::provenance_for(inputs, c.seed))
        .dump(2);
  };
  const bool record_same = record() == record();
  fs::remove_all(root);
  o.detail << ma.entries.size() << " spectra";
  o.check(roundtrip, "load/save byte identity");
  o.check(synth_same, "same seed synthetic datasets identical");
  o.check(record_same, "result records identical");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"Voigt oracle equivalence", voigt_oracle},
      {"FWHM formula accuracy", fwhm_formula},
      {"Debye-integral asymptote", debye_asymptote},
      {"T^3 versus Debye separation", model_separation},
      {"End-to-end synthetic series", end_to_end},
      {"Coherence-spectrum closure", coherence_closure},
      {"Monte-Carlo validity", monte_carlo},
      {"Fitting engine integrity", fitting_engine},
      {"Format stability", format_stability},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failures += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures ? 1 : 0;
}
