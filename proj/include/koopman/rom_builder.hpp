#pragma once

// Leading-mode selection.  Modes are ranked by the time-aggregated size of
// their contribution sequence,
//
//   w_j = dt * sum_{i=1..Nt} |a_j lambda_j^(i-1)|,
//
// and added greedily (conjugate partners together) until the relative
// reconstruction error over snapshots 1..Nt drops to epsilon.
//
// KROM v1 on-disk layout (little-endian):
//
//   offset  size  field
//        0     4  "KROM"
//        4     4  u32 version (1)
//        8     4  u32 field tag
//       12     4  u32 flags (bit 0 = converged, bit 1 = nondimensional data)
//       16     4  u32 nx
//       20     4  u32 ny
//       24     4  u32 full rank Nt
//       28     4  u32 selected count n
//       32     8  f64 dt
//       40     8  f64 dx
//       48     8  f64 dy
//       56     8  f64 epsilon
//       64     8  f64 achieved error
//       72     8  f64 best error
//       80     -  n u32 mode indices, then n (re, im) eigenvalues,
//                 n (re, im) amplitudes, nx*ny*n (re, im) mode entries
//                 column by column

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopman/dmd_engine.hpp"
#include "koopman/errors.hpp"
#include "koopman/snapshot_store.hpp"

namespace koopman {

struct ModeWeight {
  std::size_t mode_index = 0;
  double weight = 0.0;
};

struct RomModel {
  std::vector<std::size_t> selected;  // descending weight, partners adjacent
  Eigen::VectorXcd lambdas;
  Eigen::MatrixXcd modes;
  Eigen::VectorXcd amplitudes;
  std::size_t n_dmd = 0;
  std::size_t full_rank = 0;
  double epsilon = 0.0;
  double achieved_error = 0.0;  // Er of the returned subset
  double best_error = 0.0;      // smallest Er over all greedy prefixes
  bool converged = false;
  // Error after each accepted group, aligned with the group boundaries.
  std::vector<std::size_t> trace_count;
  std::vector<double> trace_error;
  // Metadata of the source snapshots.
  std::size_t nx = 0, ny = 0;
  double dt = 0.0, dx = 0.0, dy = 0.0;
  FieldTag tag = FieldTag::other;
  bool nondimensional = false;
};

/// w_j for every mode.  Requires amplitudes.
inline std::vector<ModeWeight> mode_weights(const DmdDecomposition& dec, std::size_t nt, double dt) {
  if (dec.amplitudes.size() != dec.lambdas.size()) {
    throw InvalidArgument("amplitudes have not been computed");
  }
  std::vector<ModeWeight> out(dec.size());
  for (std::size_t j = 0; j < dec.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double amp = std::abs(dec.amplitudes(jj));
    const double mag = std::abs(dec.lambdas(jj));
    double sum = 0.0;
    for (std::size_t i = 1; i <= nt; ++i) sum += std::pow(mag, static_cast<double>(i - 1));
    out[j] = {j, dt * amp * sum};
  }
  return out;
}

inline std::vector<ModeWeight> mode_weights(const DmdDecomposition& dec) {
  return mode_weights(dec, dec.size(), dec.dt);
}

/// Indices by descending weight; ties by ascending |omega|, then index.
inline std::vector<std::size_t> weight_order(const DmdDecomposition& dec,
                                             std::span<const ModeWeight> weights) {
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> w(weights.size());
  for (const auto& mw : weights) w.at(mw.mode_index) = mw.weight;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (w[a] != w[b]) return w[a] > w[b];
    const double oa = std::abs(dec.exponents(static_cast<Eigen::Index>(a)).imag());
    const double ob = std::abs(dec.exponents(static_cast<Eigen::Index>(b)).imag());
    if (oa != ob) return oa < ob;
    return a < b;
  });
  return order;
}

namespace detail {

/// Frobenius norm of snapshots 1..Nt; throws ZeroNormData when it vanishes.
inline double reference_norm(const SnapshotMatrix& V) {
  if (V.snapshots() < 2) throw TooFewColumns("need at least 2 snapshots");
  const double norm = V.data.rightCols(V.data.cols() - 1).norm();
  if (!(norm > 0.0)) throw ZeroNormData("snapshots 1..Nt have zero norm");
  return norm;
}

inline void check_pairing(const SnapshotMatrix& V, const DmdDecomposition& dec) {
  if (V.data.rows() != dec.modes.rows()) throw ShapeMismatch("modes do not match the snapshot rows");
}

}  // namespace detail

/// Er = ||V' - V_DMD||_F / ||V'||_F over snapshots 1..Nt.
inline double relative_error(const SnapshotMatrix& V, const DmdDecomposition& dec,
                             std::span<const std::size_t> subset) {
  detail::check_pairing(V, dec);
  const double ref = detail::reference_norm(V);
  const std::size_t nt = V.transitions();
  const Eigen::MatrixXd rec = reconstruct_range(dec, subset, 1, nt);
  return (V.data.rightCols(static_cast<Eigen::Index>(nt)) - rec).norm() / ref;
}

/// ||u_k - u_DMD,k|| / ||u_k|| for every snapshot k = 0..Nt.  Entries whose
/// snapshot has zero norm report the absolute error instead.
inline std::vector<double> per_time_errors(const SnapshotMatrix& V, const DmdDecomposition& dec,
                                           std::span<const std::size_t> subset) {
  detail::check_pairing(V, dec);
  const Eigen::MatrixXd rec = reconstruct_range(dec, subset, 0, V.snapshots());
  std::vector<double> out(V.snapshots());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double ref = V.data.col(kk).norm();
    const double diff = (V.data.col(kk) - rec.col(kk)).norm();
    out[k] = ref > 0.0 ? diff / ref : diff;
  }
  return out;
}

/// Greedy prefix selection.  Never throws on non-convergence: the returned
/// model then holds every mode and converged == false.
inline RomModel select_leading_modes(const SnapshotMatrix& V, const DmdDecomposition& dec,
                                     double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  if (!dec.has_amplitudes()) throw InvalidArgument("amplitudes have not been computed");
  detail::check_pairing(V, dec);
  const double ref = detail::reference_norm(V);
  const std::size_t nt = V.transitions();
  const auto ntt = static_cast<Eigen::Index>(nt);

  const auto weights = mode_weights(dec, dec.size(), V.dt);
  const auto order = weight_order(dec, weights);

  RomModel rom;
  rom.full_rank = dec.size();
  rom.epsilon = epsilon;
  rom.nx = V.nx;
  rom.ny = V.ny;
  rom.dt = V.dt;
  rom.dx = V.dx;
  rom.dy = V.dy;
  rom.tag = V.tag;
  rom.nondimensional = V.nondimensional;
  rom.best_error = std::numeric_limits<double>::infinity();

  Eigen::MatrixXd residual = V.data.rightCols(ntt);
  Eigen::RowVectorXd pre(ntt), pim(ntt);
  std::vector<bool> taken(dec.size(), false);
  std::vector<std::size_t> chosen;
  auto add_mode = [&](std::size_t j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::VectorXcd w = dec.amplitudes(jj) * dec.modes.col(jj);
    for (Eigen::Index k = 0; k < ntt; ++k) {
      const Complex p = std::pow(dec.lambdas(jj), static_cast<double>(k + 1));
      pre(k) = p.real();
      pim(k) = p.imag();
    }
    residual.noalias() -= w.real() * pre;
    residual.noalias() += w.imag() * pim;
    taken[j] = true;
    chosen.push_back(j);
  };

  for (std::size_t j : order) {
    if (taken[j]) continue;
    add_mode(j);
    const std::size_t partner = dec.partner[j];
    if (!taken[partner]) add_mode(partner);
    double err = residual.norm() / ref;
    if (err <= epsilon) {
      // Confirm against the direct evaluation so success is self-consistent.
      err = relative_error(V, dec, chosen);
    }
    rom.trace_count.push_back(chosen.size());
    rom.trace_error.push_back(err);
    rom.best_error = std::min(rom.best_error, err);
    if (err <= epsilon) {
      rom.converged = true;
      rom.achieved_error = err;
      break;
    }
  }
  if (!rom.converged) rom.achieved_error = relative_error(V, dec, chosen);

  rom.selected = chosen;
  rom.n_dmd = chosen.size();
  const auto n = static_cast<Eigen::Index>(chosen.size());
  rom.lambdas.resize(n);
  rom.amplitudes.resize(n);
  rom.modes.resize(dec.modes.rows(), n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto j = static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(s)]);
    rom.lambdas(s) = dec.lambdas(j);
    rom.amplitudes(s) = dec.amplitudes(j);
    rom.modes.col(s) = dec.modes.col(j);
  }
  return rom;
}

/// 100 (full_rank - n_dmd) / full_rank, unrounded.
inline double reduction_percentage(std::size_t full_rank, std::size_t n_dmd) {
  if (full_rank == 0) throw InvalidArgument("full rank must be positive");
  if (n_dmd > full_rank) throw InvalidArgument("reduced rank exceeds full rank");
  return 100.0 * static_cast<double>(full_rank - n_dmd) / static_cast<double>(full_rank);
}

inline double reduction_percentage(const RomModel& rom) {
  return reduction_percentage(rom.full_rank, rom.n_dmd);
}

/// Two decimals, truncated toward zero (92.708.. prints as 92.70).
inline std::string format_percentage(double percent) {
  const double cents = std::floor(percent * 100.0 + 1e-9);
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.2f", cents / 100.0);
  return buf.data();
}

/// Snapshot k (0-based, lambda^k) from the retained modes.
inline Eigen::VectorXd rom_snapshot(const RomModel& rom, std::size_t k) {
  if (rom.n_dmd == 0) throw InvalidArgument("model holds no modes");
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(rom.modes.rows());
  for (Eigen::Index s = 0; s < rom.lambdas.size(); ++s) {
    out += (rom.amplitudes(s) * std::pow(rom.lambdas(s), static_cast<double>(k))) * rom.modes.col(s);
  }
  return out.real();
}

inline Field rom_field(const RomModel& rom, std::size_t k) {
  return SnapshotMatrix::unflatten(rom_snapshot(rom, k), rom.nx, rom.ny);
}

// ---------------------------------------------------------------------------
// KROM v1

namespace detail {

inline constexpr std::array<char, 4> kKromMagic{'K', 'R', 'O', 'M'};
inline constexpr std::uint32_t kKromVersion = 1;
inline constexpr std::size_t kKromHeaderBytes = 80;

inline void put_complex(std::vector<unsigned char>& out, Complex z) {
  put_le(out, z.real());
  put_le(out, z.imag());
}

inline Complex get_complex(const unsigned char* p) {
  return {get_le<double>(p), get_le<double>(p + 8)};
}

}  // namespace detail

inline std::vector<unsigned char> encode_krom(const RomModel& rom) {
  constexpr auto max_u32 = std::numeric_limits<std::uint32_t>::max();
  const auto n = static_cast<Eigen::Index>(rom.n_dmd);
  if (rom.selected.size() != rom.n_dmd || rom.lambdas.size() != n || rom.amplitudes.size() != n ||
      rom.modes.cols() != n || rom.modes.rows() != static_cast<Eigen::Index>(rom.nx * rom.ny)) {
    throw ShapeMismatch("inconsistent reduced-order model");
  }
  if (rom.nx > max_u32 || rom.ny > max_u32 || rom.full_rank > max_u32) {
    throw InvalidArgument("model dimensions exceed the KROM u32 limits");
  }
  std::vector<unsigned char> out;
  out.insert(out.end(), detail::kKromMagic.begin(), detail::kKromMagic.end());
  detail::put_le(out, detail::kKromVersion);
  detail::put_le(out, static_cast<std::uint32_t>(rom.tag));
  const std::uint32_t flags = (rom.converged ? 1u : 0u) | (rom.nondimensional ? 2u : 0u);
  detail::put_le(out, flags);
  detail::put_le(out, static_cast<std::uint32_t>(rom.nx));
  detail::put_le(out, static_cast<std::uint32_t>(rom.ny));
  detail::put_le(out, static_cast<std::uint32_t>(rom.full_rank));
  detail::put_le(out, static_cast<std::uint32_t>(rom.n_dmd));
  for (double x : {rom.dt, rom.dx, rom.dy, rom.epsilon, rom.achieved_error, rom.best_error}) {
    detail::put_le(out, x);
  }
  for (std::size_t j : rom.selected) detail::put_le(out, static_cast<std::uint32_t>(j));
  for (Eigen::Index s = 0; s < n; ++s) detail::put_complex(out, rom.lambdas(s));
  for (Eigen::Index s = 0; s < n; ++s) detail::put_complex(out, rom.amplitudes(s));
  for (Eigen::Index k = 0; k < rom.modes.size(); ++k) detail::put_complex(out, rom.modes.data()[k]);
  return out;
}

/// Restores a model.  The greedy trace is not persisted.
inline RomModel decode_krom(std::span<const unsigned char> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), detail::kKromMagic.data(), 4) != 0) {
    throw BadMagic("not a KROM file (bad magic bytes)");
  }
  if (bytes.size() < detail::kKromHeaderBytes) throw CorruptHeader("KROM header truncated");
  const unsigned char* p = bytes.data();
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != detail::kKromVersion) {
    throw UnsupportedVersion("unsupported KROM version " + std::to_string(version));
  }
  const auto tag = detail::get_le<std::uint32_t>(p + 8);
  const auto flags = detail::get_le<std::uint32_t>(p + 12);
  if (tag > 3) throw CorruptHeader("invalid field tag " + std::to_string(tag));
  if ((flags & ~3u) != 0) throw CorruptHeader("unknown flag bits set");
  RomModel rom;
  rom.tag = static_cast<FieldTag>(tag);
  rom.converged = (flags & 1u) != 0;
  rom.nondimensional = (flags & 2u) != 0;
  rom.nx = detail::get_le<std::uint32_t>(p + 16);
  rom.ny = detail::get_le<std::uint32_t>(p + 20);
  rom.full_rank = detail::get_le<std::uint32_t>(p + 24);
  rom.n_dmd = detail::get_le<std::uint32_t>(p + 28);
  rom.dt = detail::get_le<double>(p + 32);
  rom.dx = detail::get_le<double>(p + 40);
  rom.dy = detail::get_le<double>(p + 48);
  rom.epsilon = detail::get_le<double>(p + 56);
  rom.achieved_error = detail::get_le<double>(p + 64);
  rom.best_error = detail::get_le<double>(p + 72);

  const std::uint64_t n = rom.n_dmd;
  const std::uint64_t rows = std::uint64_t{rom.nx} * rom.ny;
  const std::uint64_t expected = detail::kKromHeaderBytes + 4 * n + 32 * n + 16 * rows * n;
  if (rows == 0 || n > rom.full_rank || rows * n > (std::uint64_t{1} << 36) ||
      bytes.size() != expected) {
    throw CorruptHeader("KROM payload size does not match header");
  }
  const unsigned char* q = p + detail::kKromHeaderBytes;
  const auto nn = static_cast<Eigen::Index>(n);
  rom.selected.resize(n);
  for (std::size_t s = 0; s < n; ++s, q += 4) rom.selected[s] = detail::get_le<std::uint32_t>(q);
  rom.lambdas.resize(nn);
  rom.amplitudes.resize(nn);
  rom.modes.resize(static_cast<Eigen::Index>(rows), nn);
  for (Eigen::Index s = 0; s < nn; ++s, q += 16) rom.lambdas(s) = detail::get_complex(q);
  for (Eigen::Index s = 0; s < nn; ++s, q += 16) rom.amplitudes(s) = detail::get_complex(q);
  for (Eigen::Index k = 0; k < rom.modes.size(); ++k, q += 16) {
    rom.modes.data()[k] = detail::get_complex(q);
  }
  return rom;
}

inline void save_rom(const RomModel& rom, const std::filesystem::path& path) {
  detail::write_file(path, encode_krom(rom));
}

inline RomModel load_rom(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_krom(bytes);
}

}  // namespace koopman
