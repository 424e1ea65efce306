#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dephase/error.hpp"
#include "dephase/fitting.hpp"
#include "dephase/lineshape.hpp"
#include "dephase/physics.hpp"
#include "dephase/rng.hpp"
#include "dephase/spectrum.hpp"
#include "dephase/stochastic.hpp"

namespace dephase::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr std::string_view spectrum_header = "# energy_meV,intensity";
inline constexpr int result_schema_version = 1;
inline constexpr std::string_view tool_version = "0.1.0";

// ---------------------------------------------------------------------------
// Number formatting

/// %.<digits>g formatting.
inline std::string format_g(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// Value rounded to `digits` significant digits.
inline double round_sig(double v, int digits) {
  if (!std::isfinite(v) || v == 0.0) return v;
  return std::strtod(format_g(v, digits).c_str(), nullptr);
}

inline bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

// ---------------------------------------------------------------------------
// Files

/// Writes to `<path>.tmp` and renames over `path`, so readers never see a
/// partial file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) fail(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename '" + tmp.string() + "': " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// 64-bit FNV-1a, hex encoded. Used to fingerprint inputs in result records.
inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Spectrum files
//
//   # energy_meV,intensity
//   # temperature_K=10
//   # emitter_id=E4
//   1770,5
//   ...
//
// Numbers are written with 6 significant digits; the two metadata comments
// are optional on input.

inline std::string format_spectrum(const Spectrum& s) {
  std::string out(spectrum_header);
  out += '\n';
  out += "# temperature_K=" + format_g(s.temperature, 6) + '\n';
  if (!s.emitter_id.empty()) out += "# emitter_id=" + s.emitter_id + '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += format_g(s.energy[i], 6);
    out += ',';
    out += format_g(s.intensity[i], 6);
    out += '\n';
  }
  return out;
}

inline Spectrum parse_spectrum(std::string_view text, const std::string& source = "<memory>") {
  Spectrum s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    if (line.front() == '#') {
      constexpr std::string_view tkey = "# temperature_K=";
      constexpr std::string_view ekey = "# emitter_id=";
      if (line.starts_with(tkey)) {
        if (!parse_double(line.substr(tkey.size()), s.temperature))
          fail(ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": bad temperature");
      } else if (line.starts_with(ekey)) {
        s.emitter_id = std::string(line.substr(ekey.size()));
      }
      continue;
    }
    const auto comma = line.find(',');
    double e = 0.0, v = 0.0;
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos ||
        !parse_double(line.substr(0, comma), e) || !parse_double(line.substr(comma + 1), v))
      fail(ErrorKind::Parse, source + ":" + std::to_string(line_no) +
                                 ": expected two numeric fields, got '" + std::string(line) + "'");
    if (!s.energy.empty() && e <= s.energy.back())
      fail(ErrorKind::NonMonotonicGrid, source + ":" + std::to_string(line_no) +
                                            ": energy grid must be strictly ascending");
    s.energy.push_back(e);
    s.intensity.push_back(v);
  }
  if (s.energy.empty()) fail(ErrorKind::EmptyFile, source + ": no data rows");
  validate(s);
  return s;
}

inline Spectrum load_spectrum(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::Io, "no such file: '" + path.string() + "'");
  return parse_spectrum(read_file(path), path.string());
}

inline void save_spectrum(const fs::path& path, const Spectrum& s) {
  write_file_atomic(path, format_spectrum(s));
}

// ---------------------------------------------------------------------------
// Series manifests

struct ManifestEntry {
  double temperature_K = 0.0;
  std::string path;  // relative to the manifest directory unless absolute
};

struct SeriesManifest {
  std::string emitter_id;
  std::vector<ManifestEntry> entries;
  double theta_D_K = default_theta_D_K;
  double phonon_energy_meV = default_phonon_energy_meV;
  fs::path base_dir;  // directory of the manifest file; not serialized
};

inline json manifest_to_json(const SeriesManifest& m) {
  json j;
  j["emitter_id"] = m.emitter_id;
  j["entries"] = json::array();
  for (const auto& e : m.entries)
    j["entries"].push_back({{"temperature_K", e.temperature_K}, {"path", e.path}});
  j["metadata"] = {{"theta_D_K", m.theta_D_K}, {"phonon_energy_meV", m.phonon_energy_meV}};
  return j;
}

inline SeriesManifest manifest_from_json(const json& j, const fs::path& base_dir) {
  SeriesManifest m;
  m.base_dir = base_dir;
  try {
    m.emitter_id = j.value("emitter_id", std::string{});
    for (const auto& e : j.at("entries"))
      m.entries.push_back({e.at("temperature_K").get<double>(), e.at("path").get<std::string>()});
    if (j.contains("metadata")) {
      const auto& md = j.at("metadata");
      m.theta_D_K = md.value("theta_D_K", default_theta_D_K);
      m.phonon_energy_meV = md.value("phonon_energy_meV", default_phonon_energy_meV);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("manifest: ") + e.what());
  }
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    require(m.entries[i].temperature_K > 0.0, ErrorKind::Parse,
            "manifest: temperatures must be positive");
    for (std::size_t k = 0; k < i; ++k)
      require(m.entries[k].temperature_K != m.entries[i].temperature_K, ErrorKind::Parse,
              "manifest: duplicate temperature " + format_g(m.entries[i].temperature_K, 6));
  }
  return m;
}

inline fs::path resolve(const SeriesManifest& m, const ManifestEntry& e) {
  fs::path p(e.path);
  return p.is_absolute() ? p : m.base_dir / p;
}

inline SeriesManifest load_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  SeriesManifest m = manifest_from_json(j, path.parent_path());
  for (const auto& e : m.entries)
    require(fs::exists(resolve(m, e)), ErrorKind::Io,
            "manifest entry not found: '" + resolve(m, e).string() + "'");
  return m;
}

inline void save_manifest(const fs::path& path, const SeriesManifest& m) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

/// Loads every spectrum of a manifest; temperature and emitter tags come
/// from the manifest.
inline std::vector<Spectrum> load_series(const SeriesManifest& m) {
  std::vector<Spectrum> out;
  for (const auto& e : m.entries) {
    Spectrum s = load_spectrum(resolve(m, e));
    s.temperature = e.temperature_K;
    if (!m.emitter_id.empty()) s.emitter_id = m.emitter_id;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic series

struct SynthConfig {
  DephasingModel model{AcousticDebye{6.82, 600.0}, 0.72};
  std::vector<double> temperatures = default_temperatures();
  double peak_snr = 30.0;     // peak counts above baseline = snr^2
  bool poisson_noise = true;  // false writes the noiseless expectation
  double baseline = 5.0;      // counts
  double center_first = 1820.2;
  double center_last = 1813.5;
  double grid_lo = 1770.0;
  double grid_hi = 1860.0;
  double grid_step = 0.05;
  std::string emitter_id = "E4";
  std::uint64_t seed = 0;

  static std::vector<double> default_temperatures() {
    std::vector<double> t;
    for (int k = 10; k <= 270; k += 20) t.push_back(k);
    return t;
  }
};

/// Voigt parameters used for temperature index i of a synthetic series.
inline VoigtParams synthetic_params(const SynthConfig& c, std::size_t i) {
  const double T = c.temperatures[i];
  const double t0 = c.temperatures.front(), t1 = c.temperatures.back();
  const double frac = t1 > t0 ? (T - t0) / (t1 - t0) : 0.0;
  VoigtParams p;
  p.center = c.center_first + frac * (c.center_last - c.center_first);
  p.f_G = c.model.gaussian_floor_fG;
  p.f_L = eval_model_fL(c.model, T);
  const double counts = c.peak_snr * c.peak_snr;
  p.amplitude = counts / eval_voigt(0.0, p.sigma(), p.gamma());
  p.baseline = c.baseline;
  return p;
}

inline std::vector<double> synthetic_grid(const SynthConfig& c) {
  require(c.grid_step > 0.0 && c.grid_hi > c.grid_lo, ErrorKind::Config, "synth: bad energy grid");
  const auto n = static_cast<std::size_t>(std::llround((c.grid_hi - c.grid_lo) / c.grid_step)) + 1;
  std::vector<double> e(n);
  // Round through the file format so written and generated grids agree.
  for (std::size_t i = 0; i < n; ++i) e[i] = round_sig(c.grid_lo + double(i) * c.grid_step, 6);
  return e;
}

/// In-memory synthetic spectra (intensities rounded as they would be on disk).
inline std::vector<Spectrum> synthetic_spectra(const SynthConfig& c) {
  validate(c.model);
  require(!c.temperatures.empty(), ErrorKind::Config, "synth: no temperatures");
  require(c.peak_snr > 0.0, ErrorKind::Config, "synth: peak SNR must be > 0");
  require(c.model.gaussian_floor_fG > 0.0 || c.temperatures.front() > 0.0, ErrorKind::Config,
          "synth: zero-width line at the first temperature");
  const auto grid = synthetic_grid(c);
  std::vector<Spectrum> out;
  for (std::size_t i = 0; i < c.temperatures.size(); ++i) {
    const VoigtParams p = synthetic_params(c, i);
    auto rng = substream(c.seed, i);
    Spectrum s;
    s.energy = grid;
    s.temperature = c.temperatures[i];
    s.emitter_id = c.emitter_id;
    s.intensity.reserve(grid.size());
    for (double e : grid) {
      const double mean = eval_peak(e, p);
      double v = mean;
      if (c.poisson_noise) v = double(std::poisson_distribution<long long>(mean)(rng));
      s.intensity.push_back(round_sig(v, 6));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string synthetic_file_name(const SynthConfig& c, double T) {
  return c.emitter_id + "_" + format_g(T, 6) + "K.csv";
}

/// Writes one spectrum file per temperature plus `manifest.json` into
/// `dir`; returns the manifest.
inline SeriesManifest generate_synthetic_series(const SynthConfig& c, const fs::path& dir) {
  const auto spectra = synthetic_spectra(c);
  SeriesManifest m;
  m.emitter_id = c.emitter_id;
  m.base_dir = dir;
  if (const auto* a = std::get_if<AcousticDebye>(&c.model.law)) m.theta_D_K = a->theta_D;
  if (const auto* o = std::get_if<OpticalMode>(&c.model.law)) m.phonon_energy_meV = o->phonon_energy;
  for (const auto& s : spectra) {
    const std::string name = synthetic_file_name(c, s.temperature);
    save_spectrum(dir / name, s);
    m.entries.push_back({s.temperature, name});
  }
  save_manifest(dir / "manifest.json", m);
  return m;
}

// ---------------------------------------------------------------------------
// Result records

inline constexpr int result_digits = 12;

inline double r12(double v) { return round_sig(v, result_digits); }

inline json voigt_params_json(const VoigtParams& p) {
  return {{"center", r12(p.center)},
          {"f_G", r12(p.f_G)},
          {"f_L", r12(p.f_L)},
          {"amplitude", r12(p.amplitude)},
          {"baseline", r12(p.baseline)}};
}

inline json voigt_fit_json(double T, const VoigtFit& f) {
  return {{"temperature_K", r12(T)},
          {"params", voigt_params_json(f.params)},
          {"uncertainties", voigt_params_json(f.uncertainties)},
          {"f_V", r12(f.f_V())},
          {"rss", r12(f.rss)},
          {"n_points", f.n_points},
          {"converged", f.converged},
          {"n_iterations", f.n_iterations}};
}

inline json model_json(const DephasingModel& m) {
  json params;
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        params["amplitude"] = r12(law.amplitude);
        if constexpr (std::is_same_v<T, AcousticDebye>) params["theta_D_K"] = r12(law.theta_D);
        if constexpr (std::is_same_v<T, OpticalMode>)
          params["phonon_energy_meV"] = r12(law.phonon_energy);
      },
      m.law);
  params["gaussian_floor_fG"] = r12(m.gaussian_floor_fG);
  return {{"kind", std::string(to_string(m.kind()))}, {"params", params}};
}

inline json comparison_json(std::span<const ComparisonRow> rows) {
  json table = json::array();
  for (const auto& r : rows) {
    json row = model_json(r.fit.model);
    row["rss"] = r12(r.fit.rss);
    row["aic"] = r12(r.fit.aic);
    row["delta_aic"] = r12(r.delta_aic);
    row["n_params"] = r.fit.n_params;
    row["n_points"] = r.fit.n_points;
    table.push_back(row);
  }
  return table;
}

struct Provenance {
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, fnv1a64)
  std::uint64_t seed = 0;
};

inline Provenance provenance_for(const std::vector<fs::path>& inputs, std::uint64_t seed = 0) {
  Provenance p;
  p.seed = seed;
  for (const auto& path : inputs) p.inputs.emplace_back(path.string(), fnv1a64_hex(read_file(path)));
  return p;
}

inline json provenance_json(const Provenance& p) {
  json in = json::array();
  for (const auto& [path, hash] : p.inputs) in.push_back({{"path", path}, {"fnv1a64", hash}});
  return {{"inputs", in}, {"seed", p.seed}, {"tool_version", std::string(tool_version)}};
}

inline json record_header() { return {{"schema_version", result_schema_version}}; }

inline json series_record(const SeriesFitResult& r, const Provenance& prov) {
  json j = record_header();
  j["per_temperature"] = json::array();
  for (const auto& tf : r.per_temperature)
    j["per_temperature"].push_back(voigt_fit_json(tf.temperature, tf.fit));
  j["gaussian_floor_estimate"] = r12(r.gaussian_floor_estimate);
  j["gaussian_floor_uncertainty"] = r12(r.gaussian_floor_uncertainty);
  j["models"] = comparison_json(r.model_fits);
  j["best_model"] = std::string(to_string(r.best_model));
  j["provenance"] = provenance_json(prov);
  return j;
}

inline json classification_json(const Classification& c) {
  return {{"class", std::string(to_string(c.shape))},
          {"rss_gaussian", r12(c.rss_gaussian)},
          {"rss_lorentzian", r12(c.rss_lorentzian)},
          {"rss_ratio", r12(c.rss_ratio)}};
}

inline json fit_record(const Spectrum& s, const VoigtFit& f, const Classification& c,
                       const Provenance& prov) {
  json j = record_header();
  j["emitter_id"] = s.emitter_id;
  j["per_temperature"] = json::array({voigt_fit_json(s.temperature, f)});
  j["classification"] = classification_json(c);
  j["provenance"] = provenance_json(prov);
  return j;
}

inline void save_json(const fs::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

/// Linewidth series from a result record (per-temperature f_V) or from a
/// bare two-column "temperature_K,linewidth_meV" table.
inline std::vector<LinewidthPoint> load_linewidths(const fs::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<LinewidthPoint> out;
  if (first != std::string::npos && text[first] == '{') {
    try {
      const json j = json::parse(text);
      for (const auto& e : j.at("per_temperature"))
        out.push_back({e.at("temperature_K").get<double>(), e.at("f_V").get<double>(), 1.0});
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    return out;
  }
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    const auto comma = line.find(',');
    double t = 0.0, v = 0.0;
    if (comma == std::string::npos || !parse_double(std::string_view(line).substr(0, comma), t) ||
        !parse_double(std::string_view(line).substr(comma + 1), v))
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                 ": expected 'temperature_K,linewidth_meV'");
    out.push_back({t, v, 1.0});
  }
  if (out.empty()) fail(ErrorKind::EmptyFile, path.string() + ": no data rows");
  return out;
}

// ---------------------------------------------------------------------------
// Plot-ready tables

/// f_L and f_V of a fitted model on a 1 K grid.
inline std::string format_model_curve(const DephasingModel& m, double T_lo, double T_hi) {
  std::string out = "# model=" + std::string(to_string(m.kind())) + "\n";
  out += "# temperature_K,f_L_meV,f_V_meV\n";
  const auto first = static_cast<long>(std::ceil(T_lo)), last = static_cast<long>(std::floor(T_hi));
  for (long T = first; T <= last; ++T) {
    const double fl = eval_model_fL(m, double(T));
    out += std::to_string(T) + ',' + format_g(fl, 12) + ',' +
           format_g(voigt_fwhm(m.gaussian_floor_fG, fl), 12) + '\n';
  }
  return out;
}

inline std::string format_coherence(const CoherenceTrace& tr) {
  std::string out = "# seed=" + std::to_string(tr.seed) + "\n";
  out += "# t_ps,re_g,im_g,stderr\n";
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    out += format_g(tr.t[k], 12) + ',' + format_g(tr.g[k].real(), 12) + ',' +
           format_g(tr.g[k].imag(), 12) + ',' +
           format_g(tr.stderr_.empty() ? 0.0 : tr.stderr_[k], 12) + '\n';
  }
  return out;
}

}  // namespace dephase::io
