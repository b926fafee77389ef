#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "koopman/experiment.hpp"

namespace {

using koopman::ExperimentConfig;
using koopman::FieldTag;

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("koopman_experiment_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ExperimentConfig tiny_config(const std::filesystem::path& dir) {
  ExperimentConfig cfg;
  cfg.nx = 16;
  cfg.ny = 9;
  cfg.n_snapshots = 8;
  cfg.snapshot_dt = 30.0;
  cfg.output_dir = dir;
  return cfg;
}

// ---------------------------------------------------------------------------

TEST(Config, EmptyTextGivesDefaults) {
  const ExperimentConfig cfg = koopman::parse_config_text("");
  EXPECT_EQ(cfg.nx, 129u);
  EXPECT_EQ(cfg.ny, 65u);
  EXPECT_EQ(cfg.snapshot_dt, 1800.0);
  EXPECT_EQ(cfg.n_snapshots, 289u);
  EXPECT_EQ(cfg.epsilon, 1e-3);
  EXPECT_EQ(cfg.cfl, 0.8);
  EXPECT_EQ(cfg.constants.f0, 1e-4);
  EXPECT_EQ(cfg.constants.beta, 1.5e-11);
  EXPECT_EQ(cfg.constants.g, 9.81);
  EXPECT_EQ(cfg.constants.alpha, 4000.0);
  EXPECT_EQ(cfg.constants.Dmax, 60e3);
  EXPECT_EQ(cfg.constants.Lmax, 265e3);
  EXPECT_EQ(cfg.constants.H0, 10e3);
  EXPECT_EQ(cfg.constants.H1, -700.0);
  EXPECT_EQ(cfg.constants.H2, -400.0);
  EXPECT_EQ(cfg.fields.size(), 3u);
  EXPECT_TRUE(cfg.nondimensionalize);
}

TEST(Config, ParsesEveryKey) {
  const std::string text =
      "# second experiment\n"
      "nx = 64\n"
      "ny=32\n"
      "  epsilon = 1e-4   # tighter threshold\n"
      "f0 = 2e-4\nbeta = 0\ng = 9.8\nalpha = 0\nH0 = 5000\nH1 = -1\nH2 = -2\n"
      "Lmax = 1e5\nDmax = 2e4\nsnapshot_dt = 900\nn_snapshots = 145\ncfl = 0.5\n"
      "fields = h, v\noutput_dir = results/run 1\nnondimensionalize = false\n"
      "dissipation_second_order = 0.25\ndissipation_fourth_order = 0.01\n"
      "\r\n";
  const ExperimentConfig cfg = koopman::parse_config_text(text);
  EXPECT_EQ(cfg.nx, 64u);
  EXPECT_EQ(cfg.ny, 32u);
  EXPECT_EQ(cfg.epsilon, 1e-4);
  EXPECT_EQ(cfg.constants.f0, 2e-4);
  EXPECT_EQ(cfg.constants.beta, 0.0);
  EXPECT_EQ(cfg.constants.g, 9.8);
  EXPECT_EQ(cfg.constants.H0, 5000.0);
  EXPECT_EQ(cfg.constants.Lmax, 1e5);
  EXPECT_EQ(cfg.constants.Dmax, 2e4);
  EXPECT_EQ(cfg.snapshot_dt, 900.0);
  EXPECT_EQ(cfg.n_snapshots, 145u);
  EXPECT_EQ(cfg.cfl, 0.5);
  EXPECT_EQ(cfg.fields, (std::vector<FieldTag>{FieldTag::h, FieldTag::v}));
  EXPECT_EQ(cfg.output_dir, std::filesystem::path("results/run 1"));
  EXPECT_FALSE(cfg.nondimensionalize);
  EXPECT_EQ(cfg.dissipation.second_order, 0.25);
  EXPECT_EQ(cfg.dissipation.fourth_order, 0.01);
}

TEST(Config, EpsilonOutOfRangeIsInvalid) {
  try {
    koopman::parse_config_text("nx = 20\nepsilon = 2\n");
    FAIL() << "expected InvalidValue";
  } catch (const koopman::InvalidValue& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(koopman::parse_config_text("epsilon = 0"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("epsilon = 1"), koopman::InvalidValue);
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    koopman::parse_config_text("# header\n\nnx = 20\ngravity = 9.81\n");
    FAIL() << "expected UnknownKey";
  } catch (const koopman::UnknownKey& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("gravity"), std::string::npos);
  }
}

TEST(Config, MalformedLines) {
  EXPECT_THROW(koopman::parse_config_text("nx 20\n"), koopman::ParseError);
  EXPECT_THROW(koopman::parse_config_text("= 3\n"), koopman::ParseError);
  EXPECT_THROW(koopman::parse_config_text("nx =\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("nx = 20\nnx = 30\n"), koopman::ParseError);
  EXPECT_THROW(koopman::parse_config_text("nx = 2.5\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("nx = -4\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("g = fast\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("g = nan\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("g = -1\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("nx = 3\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("n_snapshots = 1\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("fields = h, w\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("fields = h, h\n"), koopman::InvalidValue);
  EXPECT_THROW(koopman::parse_config_text("nondimensionalize = maybe\n"), koopman::InvalidValue);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(koopman::parse_config("/nonexistent/koopman.cfg"), koopman::IoError);
}

// ---------------------------------------------------------------------------

TEST(TimeSpec, MapsToNearestSnapshot) {
  EXPECT_EQ(koopman::resolve_time("50h", 1800.0, 289), 100u);
  EXPECT_EQ(koopman::resolve_time("90h", 1800.0, 289), 180u);
  EXPECT_EQ(koopman::resolve_time("180000s", 1800.0, 289), 100u);
  EXPECT_EQ(koopman::resolve_time("2000s", 1800.0, 289), 1u);
  EXPECT_EQ(koopman::resolve_time("17", 1800.0, 289), 17u);
  EXPECT_EQ(koopman::resolve_time("0", 1800.0, 289), 0u);
  EXPECT_THROW(koopman::resolve_time("145h", 1800.0, 289), koopman::IndexOutOfRange);
  EXPECT_THROW(koopman::resolve_time("289", 1800.0, 289), koopman::IndexOutOfRange);
  EXPECT_THROW(koopman::resolve_time("-1h", 1800.0, 289), koopman::IndexOutOfRange);
  EXPECT_THROW(koopman::resolve_time("soon", 1800.0, 289), koopman::ParseError);
}

// ---------------------------------------------------------------------------

TEST(Commands, SimulateWritesThreeFiles) {
  const auto dir = fresh_dir("simulate");
  const ExperimentConfig cfg = tiny_config(dir);
  std::ostringstream log;
  const auto summary = koopman::cmd_simulate(cfg, log);
  EXPECT_EQ(summary.snapshots, 8u);
  EXPECT_LE(summary.max_relative_drift, 1e-12);
  EXPECT_NE(log.str().find("drift"), std::string::npos);
  for (FieldTag tag : {FieldTag::h, FieldTag::u, FieldTag::v}) {
    const auto V = koopman::load(koopman::snapshot_path(cfg, tag));
    EXPECT_EQ(V.snapshots(), 8u);
    EXPECT_EQ(V.tag, tag);
    EXPECT_EQ(V.dt, 30.0);
    EXPECT_TRUE(V.nondimensional);
    EXPECT_EQ(V.nx, 16u);
    EXPECT_EQ(V.ny, 9u);
  }
  // Non-dimensional depth peaks at one.
  EXPECT_DOUBLE_EQ(koopman::load(koopman::snapshot_path(cfg, FieldTag::h)).data.col(0).maxCoeff(), 1.0);
}

TEST(Commands, RomWritesReportsConsistently) {
  const auto dir = fresh_dir("rom");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.n_snapshots = 12;
  cfg.epsilon = 0.5;
  std::ostringstream log;
  koopman::cmd_simulate(cfg, log);
  const auto report = koopman::cmd_rom(cfg, log);
  ASSERT_EQ(report.fields.size(), 3u);
  EXPECT_TRUE(report.all_converged());

  for (const auto& f : report.fields) {
    const std::string name(koopman::to_string(f.tag));
    std::istringstream spectrum(slurp(dir / ("spectrum_" + name + ".csv")));
    std::string line;
    std::getline(spectrum, line);
    EXPECT_EQ(line, "index,re_lambda,im_lambda,sigma,omega,weight,selected,amp_abs");
    std::size_t rows = 0, selected = 0;
    while (std::getline(spectrum, line)) {
      ++rows;
      selected += line.substr(0, line.rfind(',')).back() == '1' ? 1 : 0;
    }
    EXPECT_EQ(rows, f.full_rank);
    EXPECT_EQ(selected, f.n_dmd);
    EXPECT_EQ(f.per_time_error.size(), 12u);

    const auto rom = koopman::load_rom(koopman::rom_path(cfg, f.tag));
    EXPECT_EQ(rom.n_dmd, f.n_dmd);
    EXPECT_EQ(rom.achieved_error, f.achieved_error);
  }
  const std::string summary = slurp(dir / "summary.csv");
  EXPECT_EQ(summary.rfind("field,full_rank,reduced_rank,reduction_percent,achieved_error,epsilon,converged\n", 0), 0u);
  for (const auto& f : report.fields) {
    const std::string row = std::string(koopman::to_string(f.tag)) + "," + std::to_string(f.full_rank) + "," +
                            std::to_string(f.n_dmd) + "," + koopman::format_percentage(f.reduction_percent) + ",";
    EXPECT_NE(summary.find(row), std::string::npos) << row;
  }
}

TEST(Commands, RomRequiresSnapshots) {
  const auto dir = fresh_dir("rom_missing");
  std::ostringstream log;
  EXPECT_THROW(koopman::cmd_rom(tiny_config(dir), log), koopman::IoError);
}

TEST(Commands, OutputsAreDeterministic) {
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  std::ostringstream log;
  for (const auto& dir : {a, b}) {
    ExperimentConfig cfg = tiny_config(dir);
    cfg.epsilon = 0.2;
    koopman::cmd_simulate(cfg, log);
    koopman::cmd_rom(cfg, log);
  }
  for (const char* name : {"h.ksnp", "u.ksnp", "v.ksnp", "spectrum_h.csv", "spectrum_u.csv", "spectrum_v.csv",
                           "errors_h.csv", "summary.csv", "rom_v.krom"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
}

TEST(Commands, ReconstructAndVorticity) {
  const auto dir = fresh_dir("reconstruct");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.epsilon = 0.3;
  std::ostringstream log;
  koopman::cmd_simulate(cfg, log);
  const auto report = koopman::cmd_rom(cfg, log);
  const auto r = koopman::cmd_reconstruct(cfg, FieldTag::h, "60s", log);
  EXPECT_EQ(r.index, 2u);
  EXPECT_EQ(r.time, 60.0);
  EXPECT_NEAR(r.relative_error, report.fields[0].per_time_error[2], 1e-12);
  EXPECT_TRUE(std::filesystem::exists(dir / "h_full_t2.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "h_rom_t2.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "h_diff_t2.csv"));
  EXPECT_NE(log.str().find("-> snapshot 2"), std::string::npos);
  EXPECT_THROW(koopman::cmd_reconstruct(cfg, FieldTag::h, "99", log), koopman::IndexOutOfRange);

  const auto w = koopman::cmd_vorticity(cfg, "3", log);
  EXPECT_EQ(w.index, 3u);
  EXPECT_GE(w.relative_error, 0.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "vorticity_full_t3.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "vorticity_rom_t3.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "vorticity_diff_t3.csv"));
}

TEST(Commands, UniformVelocityGivesZeroVorticity) {
  const auto dir = fresh_dir("uniform");
  ExperimentConfig cfg = tiny_config(dir);
  koopman::SnapshotMatrix U, V;
  for (auto* M : {&U, &V}) {
    M->nx = cfg.nx;
    M->ny = cfg.ny;
    M->dt = 1.0;
    M->dx = 1000.0;
    M->dy = 500.0;
    M->data = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(cfg.nx * cfg.ny), 2, M == &U ? 2.0 : -1.0);
  }
  U.tag = FieldTag::u;
  V.tag = FieldTag::v;
  koopman::save(U, koopman::snapshot_path(cfg, FieldTag::u));
  koopman::save(V, koopman::snapshot_path(cfg, FieldTag::v));
  for (auto* M : {&U, &V}) {
    koopman::RomModel rom = koopman::select_leading_modes(*M, koopman::decompose(*M), 0.1);
    koopman::save_rom(rom, koopman::rom_path(cfg, M->tag));
  }
  std::ostringstream log;
  koopman::cmd_vorticity(cfg, "1", log);
  std::string text = slurp(dir / "vorticity_full_t1.csv");
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream cells(text);
  std::size_t count = 0;
  for (double value; cells >> value; ++count) EXPECT_EQ(value, 0.0);
  EXPECT_EQ(count, cfg.nx * cfg.ny);
}

}  // namespace
