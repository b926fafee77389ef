#pragma once

// Snapshot data built from known eigenvalues, modes and amplitudes.

#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "koopman/snapshot_store.hpp"

namespace synthetic {

using Complex = std::complex<double>;

struct Seed {
  std::vector<Complex> lambdas;  // conjugate-closed: pairs are stored adjacently
  Eigen::MatrixXcd modes;        // unit columns, conjugate columns for pairs
  Eigen::VectorXcd amplitudes;
};

/// Draws unit modes and amplitudes for the given eigenvalues.  Complex
/// eigenvalues must be listed once; their conjugates are appended next to them.
inline Seed make_seed(const std::vector<Complex>& half_spectrum, int nx, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<Complex> lambdas;
  std::vector<Eigen::VectorXcd> modes;
  std::vector<Complex> amps;
  for (const Complex& lam : half_spectrum) {
    Eigen::VectorXcd phi(nx);
    const bool real = lam.imag() == 0.0;
    for (int r = 0; r < nx; ++r) phi(r) = {normal(rng), real ? 0.0 : normal(rng)};
    phi.normalize();
    const Complex a{1.0 + std::abs(normal(rng)), real ? 0.0 : normal(rng)};
    lambdas.push_back(lam);
    modes.push_back(phi);
    amps.push_back(a);
    if (!real) {
      lambdas.push_back(std::conj(lam));
      modes.push_back(phi.conjugate());
      amps.push_back(std::conj(a));
    }
  }
  Seed s;
  s.lambdas = lambdas;
  s.modes.resize(nx, static_cast<Eigen::Index>(modes.size()));
  s.amplitudes.resize(static_cast<Eigen::Index>(amps.size()));
  for (std::size_t k = 0; k < modes.size(); ++k) {
    s.modes.col(static_cast<Eigen::Index>(k)) = modes[k];
    s.amplitudes(static_cast<Eigen::Index>(k)) = amps[k];
  }
  return s;
}

/// Columns u_i = sum_k a_k lambda_k^i phi_k for i = 0..nt (real by construction).
inline koopman::SnapshotMatrix make_data(const Seed& s, int nt, double dt = 1.0) {
  const auto nx = s.modes.rows();
  koopman::SnapshotMatrix V;
  V.nx = static_cast<std::size_t>(nx);
  V.ny = 1;
  V.dt = dt;
  V.dx = 1.0;
  V.dy = 1.0;
  V.data.resize(nx, nt + 1);
  for (int i = 0; i <= nt; ++i) {
    Eigen::VectorXcd col = Eigen::VectorXcd::Zero(nx);
    for (Eigen::Index k = 0; k < s.modes.cols(); ++k) {
      col += s.amplitudes(k) * std::pow(s.lambdas[static_cast<std::size_t>(k)], i) * s.modes.col(k);
    }
    V.data.col(i) = col.real();
  }
  return V;
}

/// Smallest relative distance from z to any entry of the candidates.
inline double nearest_relative(const Complex& z, const Eigen::VectorXcd& candidates) {
  double best = 1e300;
  for (Eigen::Index j = 0; j < candidates.size(); ++j) {
    best = std::min(best, std::abs(candidates(j) - z) / std::abs(z));
  }
  return best;
}

}  // namespace synthetic
