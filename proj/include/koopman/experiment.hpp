#pragma once

// Experiment orchestration behind the koopman_rom command-line tool: a flat
// key = value configuration and one function per subcommand.  Every command
// reads and writes inside the configured output directory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "koopman/dmd_engine.hpp"
#include "koopman/errors.hpp"
#include "koopman/rom_builder.hpp"
#include "koopman/snapshot_store.hpp"
#include "koopman/swe_solver.hpp"

namespace koopman {

struct ExperimentConfig {
  std::size_t nx = 129;
  std::size_t ny = 65;
  PhysicalConstants constants;
  double snapshot_dt = 1800.0;
  std::size_t n_snapshots = 289;
  double cfl = 0.8;
  double epsilon = 1e-3;
  std::vector<FieldTag> fields{FieldTag::h, FieldTag::u, FieldTag::v};
  std::filesystem::path output_dir = "out";
  bool nondimensionalize = true;
  Dissipation dissipation;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_real(std::string_view text, std::size_t line, std::string_view key) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    throw InvalidValue(line, "'" + std::string(key) + "' expects a finite number, got '" +
                                 std::string(text) + "'");
  }
  return value;
}

inline std::size_t parse_count(std::string_view text, std::size_t line, std::string_view key) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw InvalidValue(line, "'" + std::string(key) + "' expects a non-negative integer, got '" +
                                 std::string(text) + "'");
  }
  return value;
}

inline bool parse_flag(std::string_view text, std::size_t line, std::string_view key) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw InvalidValue(line, "'" + std::string(key) + "' expects true or false, got '" +
                               std::string(text) + "'");
}

inline std::vector<FieldTag> parse_fields(std::string_view text, std::size_t line) {
  std::vector<FieldTag> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    FieldTag tag{};
    if (item == "h") {
      tag = FieldTag::h;
    } else if (item == "u") {
      tag = FieldTag::u;
    } else if (item == "v") {
      tag = FieldTag::v;
    } else {
      throw InvalidValue(line, "unknown field '" + std::string(item) + "' (expected h, u or v)");
    }
    if (std::find(out.begin(), out.end(), tag) != out.end()) {
      throw InvalidValue(line, "field '" + std::string(item) + "' listed twice");
    }
    out.push_back(tag);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw InvalidValue(line, "'fields' must name at least one field");
  return out;
}

}  // namespace detail

/// Checks cross-field invariants; `lines` maps keys to the line that set them.
inline void validate(const ExperimentConfig& cfg, const std::map<std::string, std::size_t>& lines = {}) {
  auto fail = [&](const std::string& key, const std::string& what) {
    const auto it = lines.find(key);
    throw InvalidValue(it == lines.end() ? 0 : it->second, what);
  };
  if (cfg.nx < 4) fail("nx", "nx must be at least 4");
  if (cfg.ny < 4) fail("ny", "ny must be at least 4");
  if (!(cfg.constants.g > 0.0)) fail("g", "g must be positive");
  if (!(cfg.constants.Lmax > 0.0)) fail("Lmax", "Lmax must be positive");
  if (!(cfg.constants.Dmax > 0.0)) fail("Dmax", "Dmax must be positive");
  if (!(cfg.snapshot_dt > 0.0)) fail("snapshot_dt", "snapshot_dt must be positive");
  if (cfg.n_snapshots < 2) fail("n_snapshots", "n_snapshots must be at least 2");
  if (!(cfg.cfl > 0.0)) fail("cfl", "cfl must be positive");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) fail("epsilon", "epsilon must lie in (0, 1)");
  if (cfg.dissipation.second_order < 0.0) {
    fail("dissipation_second_order", "dissipation coefficients must be non-negative");
  }
  if (cfg.dissipation.fourth_order < 0.0) {
    fail("dissipation_fourth_order", "dissipation coefficients must be non-negative");
  }
  if (cfg.fields.empty()) fail("fields", "'fields' must name at least one field");
}

/// Parses "key = value" lines; '#' starts a comment.  Unset keys keep their
/// defaults.  Throws UnknownKey, InvalidValue or ParseError with the line number.
inline ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    ++number;
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(number, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(number, "missing key before '='");
    if (value.empty()) throw InvalidValue(number, "missing value for '" + key + "'");
    if (lines.count(key) != 0) throw ParseError(number, "duplicate key '" + key + "'");

    auto real = [&] { return detail::parse_real(value, number, key); };
    auto count = [&] { return detail::parse_count(value, number, key); };
    PhysicalConstants& c = cfg.constants;
    if (key == "nx") cfg.nx = count();
    else if (key == "ny") cfg.ny = count();
    else if (key == "f0") c.f0 = real();
    else if (key == "beta") c.beta = real();
    else if (key == "g") c.g = real();
    else if (key == "alpha") c.alpha = real();
    else if (key == "H0") c.H0 = real();
    else if (key == "H1") c.H1 = real();
    else if (key == "H2") c.H2 = real();
    else if (key == "Lmax") c.Lmax = real();
    else if (key == "Dmax") c.Dmax = real();
    else if (key == "snapshot_dt") cfg.snapshot_dt = real();
    else if (key == "n_snapshots") cfg.n_snapshots = count();
    else if (key == "cfl") cfg.cfl = real();
    else if (key == "epsilon") cfg.epsilon = real();
    else if (key == "fields") cfg.fields = detail::parse_fields(value, number);
    else if (key == "output_dir") cfg.output_dir = std::string(value);
    else if (key == "nondimensionalize") cfg.nondimensionalize = detail::parse_flag(value, number, key);
    else if (key == "dissipation_second_order") cfg.dissipation.second_order = real();
    else if (key == "dissipation_fourth_order") cfg.dissipation.fourth_order = real();
    else throw UnknownKey(number, key);
    lines[key] = number;
  }
  validate(cfg, lines);
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read error on '" + path.string() + "'");
  return parse_config_text(buffer.str());
}

// ---------------------------------------------------------------------------
// Paths

inline std::filesystem::path snapshot_path(const ExperimentConfig& cfg, FieldTag tag) {
  return cfg.output_dir / (std::string(to_string(tag)) + ".ksnp");
}

inline std::filesystem::path rom_path(const ExperimentConfig& cfg, FieldTag tag) {
  return cfg.output_dir / ("rom_" + std::string(to_string(tag)) + ".krom");
}

namespace detail {

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish_text(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write error on '" + path.string() + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

struct SimulationSummary {
  double initial_mass = 0.0;
  double final_mass = 0.0;
  double max_relative_drift = 0.0;
  std::size_t snapshots = 0;
};

/// Runs the solver and writes h.ksnp, u.ksnp and v.ksnp.
inline SimulationSummary cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Grid grid = Grid::make(cfg.nx, cfg.ny, cfg.constants);
  detail::ensure_directory(cfg.output_dir);
  const auto states = simulate(cfg.constants, grid, cfg.snapshot_dt, cfg.n_snapshots, cfg.cfl,
                               cfg.dissipation);

  SimulationSummary summary;
  summary.snapshots = states.size();
  summary.initial_mass = total_mass(states.front().h, grid);
  summary.final_mass = total_mass(states.back().h, grid);
  for (const auto& s : states) {
    const double drift = std::abs(total_mass(s.h, grid) - summary.initial_mass) / summary.initial_mass;
    summary.max_relative_drift = std::max(summary.max_relative_drift, drift);
  }

  const ScaleSet scales = reference_scales(cfg.constants, grid);
  const auto data = cfg.nondimensionalize ? nondimensionalize(states, scales) : states;
  for (FieldTag tag : {FieldTag::h, FieldTag::u, FieldTag::v}) {
    SnapshotMatrix V = assemble(std::span<const SweState>(data), tag, grid, cfg.nondimensionalize);
    // The header always carries dimensional sampling metadata.
    V.dt = cfg.snapshot_dt;
    save(V, snapshot_path(cfg, tag));
  }

  log << "simulated " << summary.snapshots << " snapshots on " << cfg.nx << "x" << cfg.ny
      << " (dt = " << format_double(cfg.snapshot_dt) << " s)\n";
  log << "mass: initial " << format_double(summary.initial_mass) << ", final "
      << format_double(summary.final_mass) << ", max relative drift "
      << format_double(summary.max_relative_drift) << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// rom

struct FieldReport {
  FieldTag tag = FieldTag::other;
  std::size_t full_rank = 0;
  std::size_t n_dmd = 0;
  double reduction_percent = 0.0;
  double achieved_error = 0.0;
  bool converged = false;
  std::vector<double> per_time_error;  // snapshots 0..Nt
};

struct ExperimentReport {
  double epsilon = 0.0;
  std::vector<FieldReport> fields;

  bool all_converged() const {
    return std::all_of(fields.begin(), fields.end(), [](const FieldReport& f) { return f.converged; });
  }
};

/// spectrum CSV: one header line, then one row per mode in index order.
inline void write_spectrum_csv(const DmdDecomposition& dec, std::span<const ModeWeight> weights,
                               const RomModel& rom, const std::filesystem::path& path) {
  std::vector<bool> selected(dec.size(), false);
  for (std::size_t j : rom.selected) selected.at(j) = true;
  auto out = detail::open_text(path);
  out << "index,re_lambda,im_lambda,sigma,omega,weight,selected,amp_abs\n";
  for (std::size_t j = 0; j < dec.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out << j << ',' << format_double(dec.lambdas(jj).real()) << ','
        << format_double(dec.lambdas(jj).imag()) << ',' << format_double(dec.exponents(jj).real())
        << ',' << format_double(dec.exponents(jj).imag()) << ',' << format_double(weights[j].weight)
        << ',' << (selected[j] ? 1 : 0) << ',' << format_double(std::abs(dec.amplitudes(jj)))
        << '\n';
  }
  detail::finish_text(out, path);
}

inline void write_errors_csv(std::span<const double> errors, double dt,
                             const std::filesystem::path& path) {
  auto out = detail::open_text(path);
  out << "snapshot,time,relative_error\n";
  for (std::size_t k = 0; k < errors.size(); ++k) {
    out << k << ',' << format_double(static_cast<double>(k) * dt) << ','
        << format_double(errors[k]) << '\n';
  }
  detail::finish_text(out, path);
}

inline void write_summary_csv(const ExperimentReport& report, const std::filesystem::path& path) {
  auto out = detail::open_text(path);
  out << "field,full_rank,reduced_rank,reduction_percent,achieved_error,epsilon,converged\n";
  for (const auto& f : report.fields) {
    out << to_string(f.tag) << ',' << f.full_rank << ',' << f.n_dmd << ','
        << format_percentage(f.reduction_percent) << ',' << format_double(f.achieved_error) << ','
        << format_double(report.epsilon) << ',' << (f.converged ? 1 : 0) << '\n';
  }
  detail::finish_text(out, path);
}

/// Decomposes one snapshot matrix and selects its leading modes.
inline FieldReport build_field_rom(const SnapshotMatrix& V, double epsilon, RomModel& rom,
                                   DmdDecomposition& dec) {
  dec = decompose(V);
  rom = select_leading_modes(V, dec, epsilon);
  FieldReport r;
  r.tag = V.tag;
  r.full_rank = rom.full_rank;
  r.n_dmd = rom.n_dmd;
  r.reduction_percent = reduction_percentage(rom);
  r.achieved_error = rom.achieved_error;
  r.converged = rom.converged;
  r.per_time_error = per_time_errors(V, dec, rom.selected);
  return r;
}

/// Reads <field>.ksnp for each configured field; writes spectrum_<field>.csv,
/// errors_<field>.csv, rom_<field>.krom and summary.csv.
inline ExperimentReport cmd_rom(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  std::vector<SnapshotMatrix> data;
  for (FieldTag tag : cfg.fields) {
    data.push_back(load(snapshot_path(cfg, tag)));
    if (data.back().tag != tag) {
      throw IoError("'" + snapshot_path(cfg, tag).string() + "' holds field " +
                    std::string(to_string(data.back().tag)));
    }
    if (data.back().dt != data.front().dt) throw IoError("snapshot files disagree on dt");
  }

  ExperimentReport report;
  report.epsilon = cfg.epsilon;
  for (const SnapshotMatrix& V : data) {
    RomModel rom;
    DmdDecomposition dec;
    FieldReport r = build_field_rom(V, cfg.epsilon, rom, dec);
    const std::string name(to_string(V.tag));
    write_spectrum_csv(dec, mode_weights(dec, dec.size(), V.dt), rom,
                       cfg.output_dir / ("spectrum_" + name + ".csv"));
    write_errors_csv(r.per_time_error, V.dt, cfg.output_dir / ("errors_" + name + ".csv"));
    save_rom(rom, rom_path(cfg, V.tag));
    log << name << ": full rank " << r.full_rank << ", reduced rank " << r.n_dmd << ", reduction "
        << format_percentage(r.reduction_percent) << "%, Er " << format_double(r.achieved_error)
        << (r.converged ? "" : " (NOT CONVERGED, best " + format_double(rom.best_error) + ")")
        << "\n";
    report.fields.push_back(std::move(r));
  }
  write_summary_csv(report, cfg.output_dir / "summary.csv");
  return report;
}

// ---------------------------------------------------------------------------
// reconstruct / vorticity

/// Maps "50h", "180000s" or a bare snapshot index to a snapshot index.
/// Times go to the nearest snapshot; throws IndexOutOfRange outside the record.
inline std::size_t resolve_time(std::string_view text, double dt, std::size_t snapshots) {
  text = detail::trim(text);
  if (text.empty()) throw InvalidArgument("empty time string");
  const char unit = text.back();
  std::size_t index = 0;
  if (unit == 'h' || unit == 's') {
    const double value = detail::parse_real(text.substr(0, text.size() - 1), 0, "time");
    const double seconds = unit == 'h' ? value * 3600.0 : value;
    const double k = std::round(seconds / dt);
    if (!(k >= 0.0) || k > static_cast<double>(snapshots - 1)) {
      throw IndexOutOfRange("time " + std::string(text) + " lies outside the sampled range [0, " +
                            format_double(static_cast<double>(snapshots - 1) * dt) + "] s");
    }
    index = static_cast<std::size_t>(k);
  } else {
    index = detail::parse_count(text, 0, "time");
    if (index >= snapshots) {
      throw IndexOutOfRange("snapshot index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(snapshots) + ")");
    }
  }
  return index;
}

namespace detail {

inline void check_rom_matches(const RomModel& rom, const SnapshotMatrix& V) {
  if (rom.nx != V.nx || rom.ny != V.ny || rom.tag != V.tag || rom.dt != V.dt) {
    throw IoError("reduced-order model does not match the snapshot file");
  }
}

inline double relative_difference(const Field& full, const Field& approx) {
  const double ref = full.norm();
  const double diff = (full - approx).norm();
  return ref > 0.0 ? diff / ref : diff;
}

inline std::string time_label(std::size_t index) { return "t" + std::to_string(index); }

}  // namespace detail

struct ReconstructResult {
  std::size_t index = 0;
  double time = 0.0;
  double relative_error = 0.0;
};

/// Writes <field>_full_t<k>.csv, <field>_rom_t<k>.csv, <field>_diff_t<k>.csv.
inline ReconstructResult cmd_reconstruct(const ExperimentConfig& cfg, FieldTag tag,
                                         std::string_view time, std::ostream& log) {
  const SnapshotMatrix V = load(snapshot_path(cfg, tag));
  const RomModel rom = load_rom(rom_path(cfg, tag));
  detail::check_rom_matches(rom, V);
  ReconstructResult r;
  r.index = resolve_time(time, V.dt, V.snapshots());
  r.time = static_cast<double>(r.index) * V.dt;
  const Field full = V.field(r.index);
  const Field approx = rom_field(rom, r.index);
  r.relative_error = detail::relative_difference(full, approx);

  const std::string stem = std::string(to_string(tag)) + "_";
  const std::string label = detail::time_label(r.index);
  write_field_csv(full, cfg.output_dir / (stem + "full_" + label + ".csv"));
  write_field_csv(approx, cfg.output_dir / (stem + "rom_" + label + ".csv"));
  write_field_csv(full - approx, cfg.output_dir / (stem + "diff_" + label + ".csv"));
  log << "time " << time << " -> snapshot " << r.index << " (t = " << format_double(r.time)
      << " s)\n";
  log << to_string(tag) << ": relative error " << format_double(r.relative_error) << " with "
      << rom.n_dmd << " modes\n";
  return r;
}

/// Writes vorticity_full_t<k>.csv, vorticity_rom_t<k>.csv, vorticity_diff_t<k>.csv
/// from the u and v snapshot files and their models.  Units follow the stored
/// velocities divided by metres.
inline ReconstructResult cmd_vorticity(const ExperimentConfig& cfg, std::string_view time,
                                       std::ostream& log) {
  const SnapshotMatrix U = load(snapshot_path(cfg, FieldTag::u));
  const SnapshotMatrix Vv = load(snapshot_path(cfg, FieldTag::v));
  const RomModel ru = load_rom(rom_path(cfg, FieldTag::u));
  const RomModel rv = load_rom(rom_path(cfg, FieldTag::v));
  detail::check_rom_matches(ru, U);
  detail::check_rom_matches(rv, Vv);
  if (U.nx != Vv.nx || U.ny != Vv.ny || U.snapshots() != Vv.snapshots() || U.dt != Vv.dt) {
    throw IoError("u and v snapshot files differ in shape or sampling");
  }
  const Grid grid{U.nx, U.ny, U.dx, U.dy};
  ReconstructResult r;
  r.index = resolve_time(time, U.dt, U.snapshots());
  r.time = static_cast<double>(r.index) * U.dt;
  const Field full = vorticity(U.field(r.index), Vv.field(r.index), grid);
  const Field approx = vorticity(rom_field(ru, r.index), rom_field(rv, r.index), grid);
  r.relative_error = detail::relative_difference(full, approx);

  const std::string label = detail::time_label(r.index);
  write_field_csv(full, cfg.output_dir / ("vorticity_full_" + label + ".csv"));
  write_field_csv(approx, cfg.output_dir / ("vorticity_rom_" + label + ".csv"));
  write_field_csv(full - approx, cfg.output_dir / ("vorticity_diff_" + label + ".csv"));
  log << "time " << time << " -> snapshot " << r.index << " (t = " << format_double(r.time)
      << " s)\n";
  log << "vorticity: relative difference " << format_double(r.relative_error) << "\n";
  return r;
}

}  // namespace koopman
