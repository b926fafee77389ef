#pragma once

// Companion-matrix dynamic mode decomposition.
//
// Given V0 = [u_0 .. u_{Nt-1}] and V1 = [u_1 .. u_Nt], the last snapshot is
// written as a least-squares combination of its predecessors,
//
//   u_Nt = V0 c + R,   R orthogonal to span(V0),
//
// so that V1 = V0 S + R e_Nt^T with S the companion matrix of c.  Eigenpairs
// (lambda_j, z_j) of S give approximate Koopman eigenvalues lambda_j and
// modes phi_j ~ V0 z_j.  With amplitudes a_j, snapshot k is approximated by
//
//   u_k ~ sum_j a_j lambda_j^k phi_j.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "koopman/errors.hpp"
#include "koopman/snapshot_store.hpp"

namespace koopman {

using Complex = std::complex<double>;

/// Relative singular-value threshold for numerical rank decisions.
inline constexpr double kRankTolerance = 1e-12;

struct CompanionFit {
  Eigen::VectorXd c;  // c_0 .. c_{Nt-1}
  Eigen::MatrixXd S;  // Nt x Nt companion matrix
  double residual_norm = 0.0;
};

struct DmdDecomposition {
  Eigen::VectorXcd lambdas;
  Eigen::VectorXcd exponents;  // log(lambda) / dt = sigma + i omega
  Eigen::MatrixXcd modes;      // unit-norm columns
  Eigen::VectorXcd amplitudes; // empty until compute_amplitudes
  std::vector<std::size_t> partner;  // index of the conjugate eigenvalue (self if real)
  double dt = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(lambdas.size()); }
  bool has_amplitudes() const { return amplitudes.size() == lambdas.size() && lambdas.size() > 0; }
};

namespace detail {

/// Number of singular values above kRankTolerance times the largest.
template <typename Matrix>
std::size_t numerical_rank(const Matrix& R) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Matrix>(R).singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  const double cut = kRankTolerance * sv(0);
  return static_cast<std::size_t>((sv.array() > cut).count());
}

}  // namespace detail

/// Least-squares companion fit via Householder QR of V0.  Throws
/// RankDeficient when V0 has numerical column rank below Nt.
inline CompanionFit fit_companion(const ShiftedPair& pair) {
  const Eigen::Index nx = pair.V0.rows();
  const Eigen::Index nt = pair.V0.cols();
  if (nt < 1 || pair.V1.rows() != nx || pair.V1.cols() != nt) {
    throw ShapeMismatch("V0 and V1 must share a non-empty shape");
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(pair.V0);
  const Eigen::Index k = std::min(nx, nt);
  const Eigen::MatrixXd R = qr.matrixQR().topLeftCorner(k, nt).triangularView<Eigen::Upper>();
  const std::size_t rank = detail::numerical_rank(R);
  if (rank < static_cast<std::size_t>(nt)) {
    throw RankDeficient("snapshot matrix V0 is rank deficient", rank, static_cast<std::size_t>(nt));
  }

  CompanionFit fit;
  const Eigen::VectorXd last = pair.V1.col(nt - 1);
  fit.c = qr.solve(last);
  fit.S = Eigen::MatrixXd::Zero(nt, nt);
  if (nt > 1) fit.S.diagonal(-1).setOnes();
  fit.S.col(nt - 1) = fit.c;
  fit.residual_norm = (last - pair.V0 * fit.c).norm();
  return fit;
}

namespace detail {

/// Pairs every eigenvalue with its complex conjugate.
inline std::vector<std::size_t> conjugate_partners(const Eigen::VectorXcd& lambdas) {
  const std::size_t n = static_cast<std::size_t>(lambdas.size());
  std::vector<std::size_t> partner(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    if (partner[j] != n) continue;
    if (lambdas(j).imag() == 0.0) {
      partner[j] = j;
      continue;
    }
    const Complex target = std::conj(lambdas(j));
    std::size_t best = n;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j || partner[k] != n) continue;
      const double gap = std::abs(lambdas(k) - target);
      if (gap < best_gap) {
        best_gap = gap;
        best = k;
      }
    }
    if (best == n || best_gap > 1e-10 * std::max(1.0, std::abs(target))) {
      throw EigenFailure("eigenvalue without a conjugate partner in a real spectrum");
    }
    partner[j] = best;
    partner[best] = j;
  }
  return partner;
}

/// Unit 2-norm with the largest-magnitude entry rotated onto the positive real axis.
inline void normalize_mode(Eigen::Ref<Eigen::VectorXcd> mode) {
  const double norm = mode.norm();
  if (!(norm > 0.0)) return;
  Eigen::Index imax = 0;
  mode.cwiseAbs2().maxCoeff(&imax);
  const Complex pivot = mode(imax);
  const Complex phase = std::conj(pivot) / std::abs(pivot);
  mode *= phase / norm;
}

}  // namespace detail

/// Eigen-decomposition of the companion matrix; raw modes V0 z_j.
inline DmdDecomposition eigendecompose(const CompanionFit& fit, const ShiftedPair& pair, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("sampling interval must be positive");
  if (fit.S.rows() != pair.V0.cols()) throw ShapeMismatch("fit does not match the data pair");
  Eigen::EigenSolver<Eigen::MatrixXd> solver(fit.S, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) throw EigenFailure("companion eigen-solver did not converge");

  DmdDecomposition dec;
  dec.dt = dt;
  dec.lambdas = solver.eigenvalues();
  dec.partner = detail::conjugate_partners(dec.lambdas);
  dec.exponents.resize(dec.lambdas.size());
  for (Eigen::Index j = 0; j < dec.lambdas.size(); ++j) {
    dec.exponents(j) = std::log(dec.lambdas(j)) / dt;
  }
  dec.modes = pair.V0.cast<Complex>() * solver.eigenvectors();
  for (Eigen::Index j = 0; j < dec.modes.cols(); ++j) detail::normalize_mode(dec.modes.col(j));
  return dec;
}

/// Least-squares projection of the first snapshot onto the modes.
inline Eigen::VectorXcd compute_amplitudes(DmdDecomposition& dec, const SnapshotMatrix& V) {
  if (dec.modes.cols() == 0) throw InvalidArgument("decomposition has no modes");
  if (V.data.rows() != dec.modes.rows()) throw ShapeMismatch("modes do not match the snapshot rows");
  const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(dec.modes);
  const Eigen::Index k = std::min(dec.modes.rows(), dec.modes.cols());
  const Eigen::MatrixXcd R =
      qr.matrixQR().topLeftCorner(k, dec.modes.cols()).triangularView<Eigen::Upper>();
  const std::size_t rank = detail::numerical_rank(R);
  if (rank < static_cast<std::size_t>(dec.modes.cols())) {
    throw RankDeficient("Koopman mode matrix is rank deficient", rank,
                        static_cast<std::size_t>(dec.modes.cols()));
  }
  const Eigen::VectorXcd u0 = V.data.col(0).cast<Complex>();
  dec.amplitudes = qr.solve(u0);
  return dec.amplitudes;
}

/// Full pipeline on one snapshot matrix: split, fit, eigendecompose, amplitudes.
inline DmdDecomposition decompose(const SnapshotMatrix& V) {
  const ShiftedPair pair = split(V);
  const CompanionFit fit = fit_companion(pair);
  DmdDecomposition dec = eigendecompose(fit, pair, V.dt);
  compute_amplitudes(dec, V);
  return dec;
}

/// Numerical column rank of a real matrix at kRankTolerance.
inline std::size_t numerical_column_rank(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0;
  return detail::numerical_rank(A);
}

/// The first `count` snapshots of V, metadata preserved.
inline SnapshotMatrix leading_window(const SnapshotMatrix& V, std::size_t count) {
  if (count < 2 || count > V.snapshots()) {
    throw IndexOutOfRange("window of " + std::to_string(count) + " snapshots out of range [2, " +
                          std::to_string(V.snapshots()) + "]");
  }
  SnapshotMatrix W = V;
  W.data = V.data.leftCols(static_cast<Eigen::Index>(count));
  return W;
}

/// decompose() on the longest leading window whose V0 has full column rank.
/// Data spanned by fewer modes than transitions is fitted exactly on the
/// shorter window instead of failing.
inline DmdDecomposition decompose_truncated(const SnapshotMatrix& V) {
  std::size_t count = V.snapshots();
  while (true) {
    const SnapshotMatrix W = count == V.snapshots() ? V : leading_window(V, count);
    try {
      return decompose(W);
    } catch (const RankDeficient& e) {
      const std::size_t next = std::max<std::size_t>(2, std::min(e.rank() + 1, count - 1));
      if (e.rank() == 0 || next >= count) throw;
      count = next;
    }
  }
}

/// True when every index's conjugate partner is also present.
inline bool is_conjugate_closed(const DmdDecomposition& dec, std::span<const std::size_t> subset) {
  std::vector<bool> in(dec.size(), false);
  for (std::size_t j : subset) {
    if (j >= dec.size()) return false;
    in[j] = true;
  }
  return std::all_of(subset.begin(), subset.end(), [&](std::size_t j) { return in[dec.partner[j]]; });
}

namespace detail {

inline void check_subset(const DmdDecomposition& dec, std::span<const std::size_t> subset) {
  if (!dec.has_amplitudes()) throw InvalidArgument("amplitudes have not been computed");
  if (subset.empty()) throw InvalidArgument("mode subset must not be empty");
  for (std::size_t j : subset) {
    if (j >= dec.size()) {
      throw IndexOutOfRange("mode index " + std::to_string(j) + " out of range");
    }
  }
  if (!is_conjugate_closed(dec, subset)) {
    throw InvalidArgument("mode subset is not closed under complex conjugation");
  }
}

}  // namespace detail

/// Complex reconstruction sum_{j in subset} a_j lambda_j^(i-1) phi_j for the
/// 1-based sample number i (so i = 1 is the first snapshot u_0).
inline Eigen::VectorXcd reconstruct_complex(const DmdDecomposition& dec,
                                            std::span<const std::size_t> subset, std::size_t i) {
  detail::check_subset(dec, subset);
  if (i < 1) throw IndexOutOfRange("sample numbers start at 1");
  const double power = static_cast<double>(i - 1);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dec.modes.rows());
  for (std::size_t j : subset) {
    const auto jj = static_cast<Eigen::Index>(j);
    out += (dec.amplitudes(jj) * std::pow(dec.lambdas(jj), power)) * dec.modes.col(jj);
  }
  return out;
}

/// Real part of reconstruct_complex.
inline Eigen::VectorXd reconstruct(const DmdDecomposition& dec, std::span<const std::size_t> subset,
                                   std::size_t i) {
  return reconstruct_complex(dec, subset, i).real();
}

/// Reconstructions of snapshots first .. first+count-1 (0-based snapshot
/// indices, snapshot k uses lambda^k) as real columns.
inline Eigen::MatrixXd reconstruct_range(const DmdDecomposition& dec,
                                         std::span<const std::size_t> subset, std::size_t first,
                                         std::size_t count) {
  detail::check_subset(dec, subset);
  const auto n = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXcd weighted(dec.modes.rows(), n);
  Eigen::MatrixXcd powers(n, static_cast<Eigen::Index>(count));
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto j = static_cast<Eigen::Index>(subset[static_cast<std::size_t>(s)]);
    weighted.col(s) = dec.amplitudes(j) * dec.modes.col(j);
    for (std::size_t k = 0; k < count; ++k) {
      powers(s, static_cast<Eigen::Index>(k)) =
          std::pow(dec.lambdas(j), static_cast<double>(first + k));
    }
  }
  return (weighted * powers).real();
}

}  // namespace koopman
