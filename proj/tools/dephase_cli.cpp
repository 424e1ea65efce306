// dephase: fit emitter linewidths, compare dephasing models, simulate
// spectra and generate synthetic series.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dephase/dephase.hpp"

namespace fs = std::filesystem;
using namespace dephase;

namespace {

enum Exit { ok = 0, exit_usage = 1, exit_fit = 2, exit_io = 3 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io: return exit_io;
    case ErrorKind::Config:
    case ErrorKind::Parse:
    case ErrorKind::NonMonotonicGrid:
    case ErrorKind::EmptyFile:
    case ErrorKind::Domain:
    case ErrorKind::InsufficientDecay: return exit_usage;
    default: return exit_fit;
  }
}

// Single-line diagnostics: "error[Kind]: message".
int report(std::string_view kind, std::string msg) {
  for (auto& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "error[%.*s]: %s\n", int(kind.size()), kind.data(), msg.c_str());
  return 0;
}

struct Common {
  bool quiet = false;
  double theta_d = default_theta_D_K;
  double phonon_energy = default_phonon_energy_meV;
  std::optional<double> fix_fg;
};

void say(const Common& c, const std::string& line) {
  if (!c.quiet) std::cout << line << '\n';
}

std::string fmt(double v, int digits = 6) { return io::format_g(v, digits); }

void add_model_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--theta-d", c.theta_d, "Debye temperature [K]")
      ->default_val(default_theta_D_K)
      ->check(CLI::PositiveNumber);
  cmd->add_option("--phonon-energy", c.phonon_energy, "Optical phonon energy [meV]")
      ->default_val(default_phonon_energy_meV)
      ->check(CLI::PositiveNumber);
  cmd->add_option("--fix-fg", c.fix_fg,
                  "Hold the Gaussian floor f_G fixed at this value [meV] (default: fitted)")
      ->check(CLI::NonNegativeNumber);
}

Weighting parse_weighting(const std::string& w) {
  return w == "uniform" ? Weighting::Uniform : Weighting::Poisson;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string input, output, weighting = "poisson";
};

void cmd_fit(const FitArgs& a, const Common& c) {
  const Spectrum s = io::load_spectrum(a.input);
  VoigtFitOptions opt;
  opt.weighting = parse_weighting(a.weighting);
  const VoigtFit f = fit_voigt(s, std::nullopt, opt);
  const Classification cls = classify_lineshape(s, opt.weighting);
  const fs::path out = a.output.empty() ? fs::path(a.input).replace_extension(".fit.json")
                                        : fs::path(a.output);
  io::save_json(out, io::fit_record(s, f, cls, io::provenance_for({a.input})));

  say(c, "center_meV " + fmt(f.params.center, 9) + " +- " + fmt(f.uncertainties.center, 3));
  say(c, "f_G_meV    " + fmt(f.params.f_G) + " +- " + fmt(f.uncertainties.f_G, 3));
  say(c, "f_L_meV    " + fmt(f.params.f_L) + " +- " + fmt(f.uncertainties.f_L, 3));
  say(c, "f_V_meV    " + fmt(f.f_V()));
  say(c, "class      " + std::string(to_string(cls.shape)) + " (rss ratio " +
             fmt(cls.rss_ratio, 4) + ")");
  say(c, "record     " + out.string());
}

// ---------------------------------------------------------------------------
// series

struct SeriesArgs {
  std::string manifest, outdir;
};

void print_table(const Common& c, std::span<const ComparisonRow> rows) {
  say(c, "model          k   rss           aic          delta_aic");
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %d   %-12.6g  %-11.6g  %.4g",
                  std::string(to_string(r.fit.model.kind())).c_str(), r.fit.n_params, r.fit.rss,
                  r.fit.aic, r.delta_aic);
    say(c, line);
  }
  // Pairs closer than 2 AIC units are not statistically distinguishable.
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      if (std::abs(rows[j].fit.aic - rows[i].fit.aic) < 2.0)
        say(c, "indistinguishable " + std::string(to_string(rows[i].fit.model.kind())) + " " +
                   std::string(to_string(rows[j].fit.model.kind())) + " (|delta_aic| " +
                   fmt(std::abs(rows[j].fit.aic - rows[i].fit.aic), 3) + ")");
}

void cmd_series(const SeriesArgs& a, const Common& c) {
  const io::SeriesManifest m = io::load_manifest(a.manifest);
  const auto spectra = io::load_series(m);
  SeriesOptions opt;
  opt.theta_D = c.theta_d;
  opt.phonon_energy = c.phonon_energy;
  opt.fixed_fG = c.fix_fg;
  const SeriesFitResult r = analyze_series(spectra, opt);

  const fs::path dir = a.outdir.empty() ? fs::path(a.manifest).parent_path() / "results"
                                        : fs::path(a.outdir);
  std::vector<fs::path> inputs;
  for (const auto& e : m.entries) inputs.push_back(io::resolve(m, e));
  io::save_json(dir / "series_result.json", io::series_record(r, io::provenance_for(inputs)));

  std::string lw = "# temperature_K,f_G_meV,f_L_meV,f_V_meV\n";
  for (const auto& tf : r.per_temperature)
    lw += fmt(tf.temperature, 12) + ',' + fmt(tf.fit.params.f_G, 12) + ',' +
          fmt(tf.fit.params.f_L, 12) + ',' + fmt(tf.fit.f_V(), 12) + '\n';
  io::write_file_atomic(dir / "linewidths.csv", lw);
  const double t_hi = r.per_temperature.back().temperature;
  for (const auto& row : r.model_fits) {
    const std::string name = "curve_" + std::string(to_string(row.fit.model.kind())) + ".csv";
    io::write_file_atomic(dir / name, io::format_model_curve(row.fit.model, 1.0, t_hi));
  }

  say(c, "f_G floor (shared) " + fmt(r.gaussian_floor_estimate) + " +- " +
             fmt(r.gaussian_floor_uncertainty, 3) + " meV");
  for (const auto& tf : r.per_temperature)
    say(c, "T=" + fmt(tf.temperature) + " K  f_G=" + fmt(tf.fit.params.f_G) +
               "  f_L=" + fmt(tf.fit.params.f_L) + "  f_V=" + fmt(tf.fit.f_V()));
  print_table(c, r.model_fits);
  say(c, "best_model " + std::string(to_string(r.best_model)));
  say(c, "outputs    " + dir.string());
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string input, output;
  std::vector<std::string> models = {"AcousticDebye", "CubicLaw", "OpticalMode"};
  double t_max = 0.0;
  bool lorentzian = false;
};

void cmd_compare(const CompareArgs& a, const Common& c) {
  auto data = io::load_linewidths(a.input);
  if (a.t_max > 0.0)
    std::erase_if(data, [&](const LinewidthPoint& p) { return p.temperature > a.t_max; });
  SeriesFitOptions so;
  so.theta_D = c.theta_d;
  so.phonon_energy = c.phonon_energy;
  so.fixed_fG = c.fix_fg;
  if (a.lorentzian) so.quantity = LinewidthQuantity::Lorentzian;
  std::vector<ModelCandidate> cands;
  for (const auto& m : a.models) cands.push_back({model_kind_from_string(m), so});
  const auto rows = compare_models(data, cands);
  io::json j = io::record_header();
  j["n_points"] = data.size();
  j["models"] = io::comparison_json(rows);
  j["provenance"] = io::provenance_json(io::provenance_for({a.input}));
  if (!a.output.empty()) io::save_json(a.output, j);
  print_table(c, rows);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  double sigma = -1.0, gamma = -1.0, fg = -1.0, fl = -1.0;
  double lambda = -1.0, t_max = 0.0, dt = 0.0, center = 1813.5;
  std::size_t n_traj = 10000;
  std::uint64_t seed = 0;
  std::string outdir = ".";
  std::string prefix = "sim";
};

void cmd_simulate(const SimulateArgs& a, const Common& c) {
  SimulationConfig cfg;
  cfg.sigma = a.fg >= 0.0 ? a.fg / (constants::fwhm_per_sigma * constants::hbar)
                          : std::max(a.sigma, 0.0);
  cfg.gamma = a.fl >= 0.0 ? a.fl / (2.0 * constants::hbar) : std::max(a.gamma, 0.0);
  cfg.lambda = a.lambda >= 0.0 ? a.lambda : cfg.sigma / 100.0;
  const double fastest = std::max({cfg.sigma, cfg.gamma, cfg.lambda});
  const double decay = cfg.sigma + cfg.gamma;
  if (!(decay > 0.0)) fail(ErrorKind::Config, "simulate: sigma + gamma must be > 0");
  cfg.t_max = a.t_max > 0.0 ? a.t_max : 20.0 / decay;
  cfg.dt = a.dt > 0.0 ? a.dt : 0.025 / fastest;
  cfg.n_traj = a.n_traj;
  cfg.seed = a.seed;
  validate(cfg);

  const CoherenceTrace tr = mc_coherence(cfg);
  Spectrum s = spectrum_from_coherence(tr, a.center);
  s.emitter_id = "simulated";
  const fs::path dir(a.outdir);
  io::write_file_atomic(dir / (a.prefix + "_coherence.csv"), io::format_coherence(tr));
  io::save_spectrum(dir / (a.prefix + "_spectrum.csv"), s);
  say(c, "seed       " + std::to_string(cfg.seed));
  say(c, "sigma_1ps  " + fmt(cfg.sigma) + "  gamma_1ps " + fmt(cfg.gamma) + "  lambda_1ps " +
             fmt(cfg.lambda));
  say(c, "t_max_ps   " + fmt(cfg.t_max) + "  dt_ps " + fmt(cfg.dt) + "  n_traj " +
             std::to_string(cfg.n_traj));
  say(c, "spectrum   " + (dir / (a.prefix + "_spectrum.csv")).string());
  say(c, "coherence  " + (dir / (a.prefix + "_coherence.csv")).string());
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string outdir = "synthetic";
  std::string model = "AcousticDebye";
  double amplitude = 6.82, fg = 0.72, snr = 30.0;
  double t_min = 10, t_max = 270, t_step = 20;
  bool no_noise = false;
  std::uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& a, const Common& c) {
  io::SynthConfig cfg;
  switch (model_kind_from_string(a.model)) {
    case ModelKind::AcousticDebye: cfg.model.law = AcousticDebye{a.amplitude, c.theta_d}; break;
    case ModelKind::CubicLaw: cfg.model.law = CubicLaw{a.amplitude}; break;
    case ModelKind::OpticalMode: cfg.model.law = OpticalMode{a.amplitude, c.phonon_energy}; break;
  }
  cfg.model.gaussian_floor_fG = a.fg;
  if (!(a.t_step > 0.0 && a.t_max >= a.t_min && a.t_min > 0.0))
    fail(ErrorKind::Config, "synth: need 0 < t-min <= t-max and t-step > 0");
  cfg.temperatures.clear();
  for (int k = 0;; ++k) {
    const double T = a.t_min + a.t_step * k;
    if (T > a.t_max + 1e-9) break;
    cfg.temperatures.push_back(T);
  }
  cfg.peak_snr = a.snr;
  cfg.poisson_noise = !a.no_noise;
  cfg.seed = a.seed;
  const auto m = io::generate_synthetic_series(cfg, a.outdir);
  say(c, "wrote " + std::to_string(m.entries.size()) + " spectra and manifest.json to " +
             a.outdir + " (seed " + std::to_string(a.seed) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dephase: Voigt linewidth analysis and dephasing-model comparison"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(io::tool_version));
  Common common;
  app.add_flag("-q,--quiet", common.quiet, "Suppress the human-readable summary");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Voigt fit and lineshape class of one spectrum");
  fit->add_option("spectrum", fa.input, "Spectrum file (energy_meV,intensity)")->required();
  fit->add_option("-o,--output", fa.output, "Result record path (default: <spectrum>.fit.json)");
  fit->add_option("--weighting", fa.weighting, "Residual weights")
      ->check(CLI::IsMember({"poisson", "uniform"}))
      ->default_val("poisson");
  fit->add_flag("-q,--quiet", common.quiet, "Suppress the human-readable summary");

  SeriesArgs sa;
  auto* series = app.add_subcommand("series", "Fit a temperature series and compare models");
  series->add_option("manifest", sa.manifest, "Series manifest (JSON)")->required();
  series->add_option("-o,--outdir", sa.outdir,
                     "Output directory (default: <manifest dir>/results)");
  add_model_flags(series, common);
  series->add_flag("-q,--quiet", common.quiet, "Suppress the human-readable summary");

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Rank dephasing models on a linewidth table");
  compare->add_option("input", ca.input,
                      "Result record (JSON) or table with rows temperature_K,linewidth_meV")
      ->required();
  compare->add_option("-m,--models", ca.models, "Candidate models, in declaration order")
      ->delimiter(',')
      ->check(CLI::IsMember({"AcousticDebye", "CubicLaw", "OpticalMode", "acoustic", "cubic",
                             "optical"}))
      ->default_str("AcousticDebye,CubicLaw,OpticalMode");
  compare->add_option("--t-max", ca.t_max, "Drop points above this temperature [K] (default: keep all)");
  compare->add_flag("--lorentzian", ca.lorentzian,
                    "Values are Lorentzian components f_L rather than total f_V");
  compare->add_option("-o,--output", ca.output, "Write the ranked table as JSON");
  add_model_flags(compare, common);
  compare->add_flag("-q,--quiet", common.quiet, "Suppress the human-readable summary");

  SimulateArgs ma;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo coherence and spectrum");
  simulate->add_option("--sigma", ma.sigma, "Spectral-diffusion scale [1/ps]");
  simulate->add_option("--gamma", ma.gamma, "Lorentzian dephasing rate [1/ps]");
  simulate->add_option("--fg", ma.fg, "Gaussian FWHM [meV], alternative to --sigma");
  simulate->add_option("--fl", ma.fl, "Lorentzian FWHM [meV], alternative to --gamma");
  simulate->add_option("--lambda", ma.lambda, "Field correlation rate [1/ps] (default: sigma/100)");
  simulate->add_option("--t-max", ma.t_max, "Trace length [ps] (default: 20/(sigma+gamma))");
  simulate->add_option("--dt", ma.dt, "Time step [ps] (default: 0.025/max rate)");
  simulate->add_option("--n-traj", ma.n_traj, "Trajectories")->default_val(10000);
  simulate->add_option("--center", ma.center, "Line center [meV]")->default_val(1813.5);
  simulate->add_option("--seed", ma.seed, "Master seed")->default_val(0);
  simulate->add_option("-o,--outdir", ma.outdir, "Output directory")->default_val(".");
  simulate->add_option("--prefix", ma.prefix, "Output file prefix")->default_val("sim");
  simulate->add_flag("-q,--quiet", common.quiet, "Suppress the human-readable summary");
  simulate->get_option("--fg")->excludes("--sigma");
  simulate->get_option("--fl")->excludes("--gamma");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic temperature series");
  synth->add_option("-o,--outdir", ya.outdir, "Output directory")->default_val("synthetic");
  synth->add_option("--model", ya.model, "Dephasing law")
      ->check(CLI::IsMember({"AcousticDebye", "CubicLaw", "OpticalMode", "acoustic", "cubic",
                             "optical"}))
      ->default_val("AcousticDebye");
  synth->add_option("--amplitude", ya.amplitude,
                    "Law amplitude (AcousticDebye: f_L at 270 K [meV]; CubicLaw: meV/K^3; "
                    "OpticalMode: meV)")
      ->default_val(6.82);
  synth->add_option("--fg", ya.fg, "Gaussian floor f_G [meV]")->default_val(0.72);
  synth->add_option("--snr", ya.snr, "Peak SNR (peak counts = snr^2)")
      ->default_val(30.0)
      ->check(CLI::PositiveNumber);
  synth->add_option("--t-min", ya.t_min, "First temperature [K]")->default_val(10);
  synth->add_option("--t-max", ya.t_max, "Last temperature [K]")->default_val(270);
  synth->add_option("--t-step", ya.t_step, "Temperature step [K]")->default_val(20);
  synth->add_flag("--no-noise", ya.no_noise, "Write the noiseless expectation");
  synth->add_option("--seed", ya.seed, "Master seed")->default_val(0);
  add_model_flags(synth, common);
  synth->add_flag("-q,--quiet", common.quiet, "Suppress the human-readable summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("Usage", e.what());
    return exit_usage;
  }

  try {
    if (*fit) cmd_fit(fa, common);
    else if (*series) cmd_series(sa, common);
    else if (*compare) cmd_compare(ca, common);
    else if (*simulate) cmd_simulate(ma, common);
    else if (*synth) cmd_synth(ya, common);
  } catch (const Error& e) {
    report(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report("Internal", e.what());
    return exit_fit;
  }
  return ok;
}
