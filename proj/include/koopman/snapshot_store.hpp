#pragma once

// Snapshot matrices: one column per sampled state, flattened row-major over
// the y-rows (linear index iy*nx + ix).
//
// KSNP v1 on-disk layout (all integers and floats little-endian):
//
//   offset  size  field
//        0     4  "KSNP"
//        4     4  u32 version (1)
//        8     4  u32 field tag (0 = h, 1 = u, 2 = v, 3 = other)
//       12     4  u32 flags (bit 0 = nondimensional)
//       16     4  u32 nx
//       20     4  u32 ny
//       24     4  u32 nsnap
//       28     8  f64 dt (seconds)
//       36     8  f64 dx
//       44     8  f64 dy
//       52     -  nsnap * nx * ny f64, snapshot-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "koopman/errors.hpp"
#include "koopman/swe_solver.hpp"

namespace koopman {

enum class FieldTag : std::uint32_t { h = 0, u = 1, v = 2, other = 3 };

inline std::string_view to_string(FieldTag tag) {
  switch (tag) {
    case FieldTag::h: return "h";
    case FieldTag::u: return "u";
    case FieldTag::v: return "v";
    case FieldTag::other: return "other";
  }
  return "other";
}

inline FieldTag field_tag_from_string(std::string_view name) {
  if (name == "h") return FieldTag::h;
  if (name == "u") return FieldTag::u;
  if (name == "v") return FieldTag::v;
  if (name == "other") return FieldTag::other;
  throw InvalidArgument("unknown field '" + std::string(name) + "'");
}

struct SnapshotMatrix {
  Eigen::MatrixXd data;  // Nx x (Nt + 1)
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dt = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  FieldTag tag = FieldTag::other;
  bool nondimensional = false;

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t snapshots() const { return static_cast<std::size_t>(data.cols()); }
  /// Nt: number of transitions, one less than the number of snapshots.
  std::size_t transitions() const { return snapshots() - 1; }

  /// Snapshot k reshaped to ny x nx.
  Field field(std::size_t k) const {
    if (k >= snapshots()) {
      throw IndexOutOfRange("snapshot " + std::to_string(k) + " out of range [0, " +
                            std::to_string(snapshots()) + ")");
    }
    return unflatten(data.col(static_cast<Eigen::Index>(k)), nx, ny);
  }

  static Field unflatten(const Eigen::Ref<const Eigen::VectorXd>& column, std::size_t nx,
                         std::size_t ny) {
    if (static_cast<std::size_t>(column.size()) != nx * ny) {
      throw ShapeMismatch("column length does not match nx * ny");
    }
    return Eigen::Map<const Field>(column.data(), static_cast<Eigen::Index>(ny),
                                   static_cast<Eigen::Index>(nx));
  }

  static Eigen::VectorXd flatten(const Field& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
  }
};

struct ShiftedPair {
  Eigen::MatrixXd V0;  // u_0 .. u_{Nt-1}
  Eigen::MatrixXd V1;  // u_1 .. u_Nt
};

/// Columns in the given order; throws ShapeMismatch on inconsistent shapes.
inline SnapshotMatrix assemble(std::span<const Field> fields, double dt, FieldTag tag,
                               const Grid& grid, bool nondimensional = false) {
  if (fields.size() < 2) throw TooFewColumns("a snapshot matrix needs at least 2 snapshots");
  SnapshotMatrix m;
  m.nx = grid.nx;
  m.ny = grid.ny;
  m.dt = dt;
  m.dx = grid.dx;
  m.dy = grid.dy;
  m.tag = tag;
  m.nondimensional = nondimensional;
  m.data.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(fields.size()));
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const Field& f = fields[k];
    if (f.rows() != static_cast<Eigen::Index>(grid.ny) ||
        f.cols() != static_cast<Eigen::Index>(grid.nx)) {
      throw ShapeMismatch("snapshot " + std::to_string(k) + " has shape " +
                          std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                          ", expected " + std::to_string(grid.ny) + "x" + std::to_string(grid.nx));
    }
    m.data.col(static_cast<Eigen::Index>(k)) = SnapshotMatrix::flatten(f);
  }
  return m;
}

/// Picks one physical field out of a state sequence.  The sampling interval
/// is taken from the first two state times.
inline SnapshotMatrix assemble(std::span<const SweState> states, FieldTag tag, const Grid& grid,
                               bool nondimensional = false) {
  if (states.size() < 2) throw TooFewColumns("a snapshot matrix needs at least 2 snapshots");
  std::vector<Field> fields;
  fields.reserve(states.size());
  for (const auto& s : states) {
    switch (tag) {
      case FieldTag::h: fields.push_back(s.h); break;
      case FieldTag::u: fields.push_back(s.u); break;
      case FieldTag::v: fields.push_back(s.v); break;
      case FieldTag::other: throw InvalidArgument("state sequences carry only h, u and v");
    }
  }
  return assemble(fields, states[1].t - states[0].t, tag, grid, nondimensional);
}

inline ShiftedPair split(const SnapshotMatrix& V) {
  if (V.snapshots() < 2) throw TooFewColumns("split needs at least 2 snapshots");
  const Eigen::Index nt = V.data.cols() - 1;
  return {V.data.leftCols(nt), V.data.rightCols(nt)};
}

// ---------------------------------------------------------------------------
// KSNP v1

namespace detail {

inline constexpr std::array<char, 4> kKsnpMagic{'K', 'S', 'N', 'P'};
inline constexpr std::uint32_t kKsnpVersion = 1;
inline constexpr std::size_t kKsnpHeaderBytes = 52;

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<unsigned char>(bits & 0xFFu));
    bits >>= 8;
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t b = sizeof(T); b-- > 0;) bits = (bits << 8) | p[b];
  return std::bit_cast<T>(bits);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on '" + path.string() + "'");
}

}  // namespace detail

inline std::vector<unsigned char> encode_ksnp(const SnapshotMatrix& V) {
  constexpr auto max_u32 = std::numeric_limits<std::uint32_t>::max();
  if (V.nx > max_u32 || V.ny > max_u32 || V.snapshots() > max_u32) {
    throw InvalidArgument("matrix dimensions exceed the KSNP u32 limits");
  }
  if (V.rows() != V.nx * V.ny) throw ShapeMismatch("row count does not match nx * ny");
  std::vector<unsigned char> out;
  out.reserve(detail::kKsnpHeaderBytes + 8 * static_cast<std::size_t>(V.data.size()));
  out.insert(out.end(), detail::kKsnpMagic.begin(), detail::kKsnpMagic.end());
  detail::put_le(out, detail::kKsnpVersion);
  detail::put_le(out, static_cast<std::uint32_t>(V.tag));
  detail::put_le(out, static_cast<std::uint32_t>(V.nondimensional ? 1u : 0u));
  detail::put_le(out, static_cast<std::uint32_t>(V.nx));
  detail::put_le(out, static_cast<std::uint32_t>(V.ny));
  detail::put_le(out, static_cast<std::uint32_t>(V.snapshots()));
  detail::put_le(out, V.dt);
  detail::put_le(out, V.dx);
  detail::put_le(out, V.dy);
  // Column-major storage is already snapshot-major.
  for (Eigen::Index k = 0; k < V.data.size(); ++k) detail::put_le(out, V.data.data()[k]);
  return out;
}

inline SnapshotMatrix decode_ksnp(std::span<const unsigned char> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), detail::kKsnpMagic.data(), 4) != 0) {
    throw BadMagic("not a KSNP file (bad magic bytes)");
  }
  if (bytes.size() < detail::kKsnpHeaderBytes) {
    throw CorruptHeader("KSNP header truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  const unsigned char* p = bytes.data();
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != detail::kKsnpVersion) {
    throw UnsupportedVersion("unsupported KSNP version " + std::to_string(version));
  }
  const auto tag = detail::get_le<std::uint32_t>(p + 8);
  const auto flags = detail::get_le<std::uint32_t>(p + 12);
  const auto nx = detail::get_le<std::uint32_t>(p + 16);
  const auto ny = detail::get_le<std::uint32_t>(p + 20);
  const auto nsnap = detail::get_le<std::uint32_t>(p + 24);
  if (tag > 3) throw CorruptHeader("invalid field tag " + std::to_string(tag));
  if ((flags & ~1u) != 0) throw CorruptHeader("unknown flag bits set");
  if (nsnap < 2) throw CorruptHeader("KSNP file holds fewer than 2 snapshots");
  const std::uint64_t count = std::uint64_t{nx} * ny * nsnap;
  const std::uint64_t expected = detail::kKsnpHeaderBytes + 8 * count;
  if (nx == 0 || ny == 0 || count > (std::uint64_t{1} << 40) || bytes.size() != expected) {
    throw CorruptHeader("payload size " + std::to_string(bytes.size()) +
                        " does not match header (expected " + std::to_string(expected) + ")");
  }
  SnapshotMatrix V;
  V.tag = static_cast<FieldTag>(tag);
  V.nondimensional = (flags & 1u) != 0;
  V.nx = nx;
  V.ny = ny;
  V.dt = detail::get_le<double>(p + 28);
  V.dx = detail::get_le<double>(p + 36);
  V.dy = detail::get_le<double>(p + 44);
  V.data.resize(static_cast<Eigen::Index>(std::size_t{nx} * ny), static_cast<Eigen::Index>(nsnap));
  const unsigned char* payload = p + detail::kKsnpHeaderBytes;
  for (Eigen::Index k = 0; k < V.data.size(); ++k) {
    V.data.data()[k] = detail::get_le<double>(payload + 8 * k);
  }
  return V;
}

inline void save(const SnapshotMatrix& V, const std::filesystem::path& path) {
  detail::write_file(path, encode_ksnp(V));
}

inline SnapshotMatrix load(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_ksnp(bytes);
}

// ---------------------------------------------------------------------------
// CSV

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double value) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", value);
  return buf.data();
}

/// ny lines of nx comma-separated values, no header, LF line ends.
inline void write_field_csv(const Field& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  std::string line;
  for (Eigen::Index j = 0; j < field.rows(); ++j) {
    line.clear();
    for (Eigen::Index i = 0; i < field.cols(); ++i) {
      if (i > 0) line += ',';
      line += format_double(field(j, i));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("write error on '" + path.string() + "'");
}

inline void export_csv(const SnapshotMatrix& V, std::size_t snapshot_index,
                       const std::filesystem::path& path) {
  write_field_csv(V.field(snapshot_index), path);
}

}  // namespace koopman
