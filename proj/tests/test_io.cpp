#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include "dephase/io.hpp"

using namespace dephase;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("dephase_io_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

std::string canonical_file() {
  std::string s = "# energy_meV,intensity\n# temperature_K=10\n# emitter_id=E4\n";
  for (int i = 0; i < 30; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g,%.6g\n", 1800.0 + 0.05 * i,
                  5.0 + 100.0 * std::exp(-0.1 * (i - 15) * (i - 15)));
    s += buf;
  }
  return s;
}

ErrorKind kind_of_load(const fs::path& p) {
  try {
    io::load_spectrum(p);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorKind::Domain;
}

}  // namespace

TEST(SpectrumFile, LoadSaveIsByteStable) {
  TempDir dir;
  const auto in = dir.path() / "in.csv", out = dir.path() / "out.csv";
  const std::string text = canonical_file();
  write_text(in, text);
  const Spectrum s = io::load_spectrum(in);
  EXPECT_EQ(s.size(), 30u);
  EXPECT_EQ(s.energy.size(), s.intensity.size());
  EXPECT_EQ(s.temperature, 10.0);
  EXPECT_EQ(s.emitter_id, "E4");
  io::save_spectrum(out, s);
  EXPECT_EQ(io::read_file(out), text);
  EXPECT_FALSE(fs::exists(dir.path() / "out.csv.tmp"));
}

TEST(SpectrumFile, CommentsAndCrlfAccepted) {
  std::string text = "# energy_meV,intensity\r\n# free comment\r\n\r\n";
  for (int i = 0; i < 25; ++i)
    text += std::to_string(100 + i) + ", " + std::to_string(i % 7) + "\r\n";
  const Spectrum s = io::parse_spectrum(text);
  EXPECT_EQ(s.size(), 25u);
  EXPECT_EQ(s.energy[3], 103.0);
  EXPECT_EQ(s.intensity[3], 3.0);
}

TEST(SpectrumFile, DescendingGridRejected) {
  TempDir dir;
  std::string text = "# energy_meV,intensity\n";
  for (int i = 0; i < 25; ++i) text += std::to_string(2000 - i) + ",1\n";
  write_text(dir.path() / "d.csv", text);
  EXPECT_EQ(kind_of_load(dir.path() / "d.csv"), ErrorKind::NonMonotonicGrid);
}

TEST(SpectrumFile, TextFieldNamesTheLine) {
  TempDir dir;
  std::string text = "# energy_meV,intensity\n";
  for (int i = 0; i < 25; ++i) text += std::to_string(1800 + i) + (i == 6 ? ",abc\n" : ",1\n");
  write_text(dir.path() / "t.csv", text);
  try {
    io::load_spectrum(dir.path() / "t.csv");
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    // header is line 1, so row 6 (0-based) is line 8
    EXPECT_NE(std::string(e.what()).find("t.csv:8:"), std::string::npos) << e.what();
  }
}

TEST(SpectrumFile, ThousandsSeparatorRejected) {
  std::string text = "# energy_meV,intensity\n";
  for (int i = 0; i < 25; ++i) text += "1 80" + std::to_string(i % 10) + ".5,1\n";
  EXPECT_THROW(io::parse_spectrum(text), Error);
}

TEST(SpectrumFile, EmptyAndMissingFiles) {
  TempDir dir;
  write_text(dir.path() / "e.csv", "# energy_meV,intensity\n");
  EXPECT_EQ(kind_of_load(dir.path() / "e.csv"), ErrorKind::EmptyFile);
  write_text(dir.path() / "z.csv", "");
  EXPECT_EQ(kind_of_load(dir.path() / "z.csv"), ErrorKind::EmptyFile);
  try {
    io::load_spectrum(dir.path() / "nope.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
    EXPECT_NE(std::string(e.what()).find("nope.csv"), std::string::npos);
  }
}

TEST(SpectrumFile, TooFewPointsRejected) {
  std::string text = "# energy_meV,intensity\n";
  for (int i = 0; i < 10; ++i) text += std::to_string(1800 + i) + ",1\n";
  EXPECT_THROW(io::parse_spectrum(text), Error);
}

// ---------------------------------------------------------------------------
// Manifests

TEST(Manifest, RoundTrip) {
  TempDir dir;
  io::SeriesManifest m;
  m.emitter_id = "E4";
  m.entries = {{10, "a.csv"}, {30, "b.csv"}};
  m.theta_D_K = 550;
  io::save_manifest(dir.path() / "m.json", m);
  write_text(dir.path() / "a.csv", canonical_file());
  write_text(dir.path() / "b.csv", canonical_file());
  const auto back = io::load_manifest(dir.path() / "m.json");
  EXPECT_EQ(back.emitter_id, "E4");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].temperature_K, 30.0);
  EXPECT_EQ(back.theta_D_K, 550.0);
  EXPECT_EQ(back.phonon_energy_meV, 18.0);
  const auto spectra = io::load_series(back);
  EXPECT_EQ(spectra[1].temperature, 30.0);
}

TEST(Manifest, ValidationErrors) {
  using io::json;
  const fs::path base = ".";
  auto kind = [&](const json& j) {
    try {
      io::manifest_from_json(j, base);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Domain;
  };
  EXPECT_EQ(kind(json::parse(
                R"({"entries":[{"temperature_K":10,"path":"a"},{"temperature_K":10,"path":"b"}]})")),
            ErrorKind::Parse);
  EXPECT_EQ(kind(json::parse(R"({"entries":[{"temperature_K":-5,"path":"a"}]})")), ErrorKind::Parse);
  EXPECT_EQ(kind(json::parse(R"({"entries":[{"path":"a"}]})")), ErrorKind::Parse);
  EXPECT_EQ(kind(json::parse(R"({"emitter_id":"x"})")), ErrorKind::Parse);
}

TEST(Manifest, UnresolvablePathIsIoError) {
  TempDir dir;
  io::SeriesManifest m;
  m.entries = {{10, "missing.csv"}};
  io::save_manifest(dir.path() / "m.json", m);
  try {
    io::load_manifest(dir.path() / "m.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

// ---------------------------------------------------------------------------
// Synthetic series

TEST(Synthetic, DefaultConfigWritesFourteenFiles) {
  TempDir dir;
  const io::SynthConfig c;
  const auto m = io::generate_synthetic_series(c, dir.path());
  ASSERT_EQ(m.entries.size(), 14u);
  for (std::size_t i = 0; i < 14; ++i) {
    EXPECT_EQ(m.entries[i].temperature_K, 10.0 + 20.0 * double(i));
    EXPECT_TRUE(fs::exists(dir.path() / m.entries[i].path));
  }
  EXPECT_EQ(m.entries.front().path, "E4_10K.csv");
  EXPECT_TRUE(fs::exists(dir.path() / "manifest.json"));
  const auto loaded = io::load_series(io::load_manifest(dir.path() / "manifest.json"));
  EXPECT_EQ(loaded.size(), 14u);
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  TempDir a, b, d;
  io::SynthConfig c;
  c.seed = 99;
  io::generate_synthetic_series(c, a.path());
  io::generate_synthetic_series(c, b.path());
  c.seed = 100;
  io::generate_synthetic_series(c, d.path());
  bool any_diff = false;
  for (const auto& e : fs::directory_iterator(a.path())) {
    const auto name = e.path().filename();
    EXPECT_EQ(io::read_file(e.path()), io::read_file(b.path() / name)) << name;
    if (name != "manifest.json")
      any_diff |= io::read_file(e.path()) != io::read_file(d.path() / name);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Synthetic, NoiselessRoundTrip) {
  TempDir dir;
  io::SynthConfig c;
  c.poisson_noise = false;
  c.temperatures = {10, 150, 270};
  const auto m = io::generate_synthetic_series(c, dir.path());
  const auto spectra = io::load_series(io::load_manifest(dir.path() / "manifest.json"));
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const VoigtParams gen = io::synthetic_params(c, i);
    const VoigtFit f = fit_voigt(spectra[i]);
    EXPECT_NEAR(f.params.center, gen.center, 1e-6 * gen.center) << "T=" << c.temperatures[i];
    EXPECT_NEAR(f.f_V(), voigt_fwhm(gen.f_G, gen.f_L), 1e-6 * voigt_fwhm(gen.f_G, gen.f_L))
        << "T=" << c.temperatures[i];
    EXPECT_NEAR(f.params.f_G, gen.f_G, 1e-6 * std::max(gen.f_G, gen.f_L))
        << "T=" << c.temperatures[i];
    EXPECT_NEAR(f.params.f_L, gen.f_L, 1e-6 * std::max(gen.f_G, gen.f_L))
        << "T=" << c.temperatures[i];
  }
}

TEST(Synthetic, CenterDriftsLinearly) {
  const io::SynthConfig c;
  EXPECT_DOUBLE_EQ(io::synthetic_params(c, 0).center, 1820.2);
  EXPECT_DOUBLE_EQ(io::synthetic_params(c, 13).center, 1813.5);
  EXPECT_NEAR(io::synthetic_params(c, 0).f_G, 0.72, 0);
}

TEST(Synthetic, InvalidConfigRejected) {
  io::SynthConfig c;
  c.peak_snr = 0.0;
  EXPECT_THROW(io::synthetic_spectra(c), Error);
  c = {};
  c.grid_step = -1.0;
  EXPECT_THROW(io::synthetic_spectra(c), Error);
}

// ---------------------------------------------------------------------------
// Result records

TEST(ResultRecord, TwelveDigitsAndDeterministic) {
  TempDir dir;
  io::SynthConfig c;
  c.temperatures = {10, 90, 170, 250};
  c.seed = 4;
  const auto m = io::generate_synthetic_series(c, dir.path());
  std::vector<fs::path> inputs;
  for (const auto& e : m.entries) inputs.push_back(dir.path() / e.path);
  const auto spectra = io::load_series(m);

  auto record = [&] {
    return io::series_record(analyze_series(spectra), io::provenance_for(inputs, c.seed)).dump(2);
  };
  const std::string a = record(), b = record();
  EXPECT_EQ(a, b);

  const auto j = io::json::parse(a);
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("provenance").at("seed"), 4);
  EXPECT_EQ(j.at("provenance").at("tool_version"), "0.1.0");
  EXPECT_EQ(j.at("provenance").at("inputs").size(), 4u);
  EXPECT_EQ(j.at("per_temperature").size(), 4u);
  EXPECT_EQ(j.at("models").size(), 3u);
  // Every number is written with at most 12 significant digits and
  // survives a reparse unchanged.
  const double fv = j.at("per_temperature").at(2).at("f_V").get<double>();
  EXPECT_EQ(io::round_sig(fv, 12), fv);
  EXPECT_EQ(io::json::parse(io::json(j).dump(2)).dump(2), a);
  std::function<void(const io::json&)> walk = [&](const io::json& v) {
    if (v.is_number_float()) EXPECT_EQ(io::round_sig(v.get<double>(), 12), v.get<double>());
    if (v.is_structured())
      for (const auto& x : v) walk(x);
  };
  walk(j);
}

TEST(ResultRecord, LinewidthTablesLoad) {
  TempDir dir;
  write_text(dir.path() / "lw.csv", "# temperature_K,linewidth_meV\n10,0.72\n30,0.75\n50,0.8\n");
  const auto lw = io::load_linewidths(dir.path() / "lw.csv");
  ASSERT_EQ(lw.size(), 3u);
  EXPECT_EQ(lw[2].value, 0.8);
  write_text(dir.path() / "r.json",
             R"({"schema_version":1,"per_temperature":[{"temperature_K":10,"f_V":0.7},{"temperature_K":20,"f_V":0.71}]})");
  const auto lr = io::load_linewidths(dir.path() / "r.json");
  ASSERT_EQ(lr.size(), 2u);
  EXPECT_EQ(lr[1].temperature, 20.0);
}

TEST(PlotTables, ModelCurveOnOneKelvinGrid) {
  const DephasingModel m{AcousticDebye{6.82, 600.0}, 0.72};
  const std::string text = io::format_model_curve(m, 10, 270);
  std::size_t rows = 0;
  for (char ch : text) rows += ch == '\n';
  EXPECT_EQ(rows, 2u + 261u);
  EXPECT_NE(text.find("\n270,6.82,"), std::string::npos);
}
