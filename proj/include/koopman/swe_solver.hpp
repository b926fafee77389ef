#pragma once

// Rotating shallow-water equations on a periodic channel, integrated with a
// two-step (Richtmyer) Lax-Wendroff scheme in conservative form.
//
// Conserved variables q = (h, hu, hv):
//
//   q_t + F(q)_x + G(q)_y = S(q)
//   F = (hu, hu^2 + g h^2 / 2, huv)
//   G = (hv, huv, hv^2 + g h^2 / 2)
//   S = (0, h (f v - g H_x), h (-f u - g H_y))
//
// The grid is node-centred: x_i = i dx for i = 0..nx-1 and y_j = j dy for
// j = 0..ny-1.  Column nx-1 duplicates column 0 (x-periodicity), rows 0 and
// ny-1 lie on the solid walls where v = 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "koopman/errors.hpp"

// Inner stencil loops write disjoint buffers; let the compiler vectorise them.
#if defined(__clang__)
#define KOOPMAN_IVDEP _Pragma("clang loop vectorize(assume_safety)")
#elif defined(__GNUC__)
#define KOOPMAN_IVDEP _Pragma("GCC ivdep")
#else
#define KOOPMAN_IVDEP
#endif

namespace koopman {

/// Real field stored ny x nx, row-major so that the flat index is iy*nx + ix.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PhysicalConstants {
  double f0 = 1e-4;      // 1/s
  double beta = 1.5e-11; // 1/(s m)
  double g = 9.81;       // m/s^2
  double alpha = 4000.0; // m, orography amplitude
  double H0 = 10e3;      // m
  double H1 = -700.0;    // m
  double H2 = -400.0;    // m
  double Lmax = 265e3;   // m, streamwise extent
  double Dmax = 60e3;    // m, spanwise extent

  void validate() const {
    const std::array<double, 9> all{f0, beta, g, alpha, H0, H1, H2, Lmax, Dmax};
    for (double value : all) {
      if (!std::isfinite(value)) throw InvalidArgument("physical constants must be finite");
    }
    if (!(g > 0.0)) throw InvalidArgument("g must be positive");
    if (!(Lmax > 0.0) || !(Dmax > 0.0)) throw InvalidArgument("domain extents must be positive");
  }
};

struct Grid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dx = 0.0;
  double dy = 0.0;

  /// Uniform node grid covering [0, Lmax] x [0, Dmax].
  static Grid make(std::size_t nx, std::size_t ny, const PhysicalConstants& c) {
    if (nx < 4 || ny < 4) throw InvalidArgument("grid needs nx >= 4 and ny >= 4");
    c.validate();
    return Grid{nx, ny, c.Lmax / static_cast<double>(nx - 1),
                c.Dmax / static_cast<double>(ny - 1)};
  }

  double x(std::size_t ix) const { return static_cast<double>(ix) * dx; }
  double y(std::size_t iy) const { return static_cast<double>(iy) * dy; }
  std::size_t size() const { return nx * ny; }
};

struct SweState {
  Field h;
  Field u;
  Field v;
  double t = 0.0;
};

struct ScaleSet {
  double L_ref = 1.0;
  double h_ref = 1.0;
  double u_ref = 1.0;
  double t_ref = 1.0;

  static ScaleSet make(double L_ref, double h_ref, double u_ref) {
    if (!(L_ref > 0.0) || !(h_ref > 0.0) || !(u_ref > 0.0)) {
      throw InvalidArgument("reference scales must be strictly positive");
    }
    return ScaleSet{L_ref, h_ref, u_ref, L_ref / u_ref};
  }
};

// ---------------------------------------------------------------------------
// Analytic profiles

inline double coriolis_at(double y, const PhysicalConstants& c) {
  return c.f0 + c.beta * (y - c.Dmax);
}

/// Orography H = alpha exp(yh^2 - xh^2), with xh = x/Lmax and yh = y/Lmax.
inline double orography(double x, double y, const PhysicalConstants& c) {
  const double xh = x / c.Lmax;
  const double yh = y / c.Lmax;
  return c.alpha * std::exp(yh * yh - xh * xh);
}

inline double grammeltvedt_height(double x, double y, const PhysicalConstants& c) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double s = (c.Dmax / 2.0 - y) / c.Dmax;
  const double sech = 1.0 / std::cosh(20.0 * s);
  return c.H0 + c.H1 * std::tanh(10.0 * s) +
         c.H2 * std::sin(two_pi * x / c.Lmax) * sech * sech;
}

/// Closed-form geostrophic velocities u0 = -(g/f) dh0/dy, v0 = (g/f) dh0/dx.
/// Throws InvalidArgument when the Coriolis parameter vanishes on any grid row.
inline std::pair<Field, Field> geostrophic_velocities(const PhysicalConstants& c,
                                                      const Grid& grid) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Field u0(grid.ny, grid.nx);
  Field v0(grid.ny, grid.nx);
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    const double y = grid.y(iy);
    const double f = coriolis_at(y, c);
    if (f == 0.0) throw InvalidArgument("Coriolis parameter vanishes at y = " + std::to_string(y));
    const double a = (5.0 * c.Dmax - 10.0 * y) / c.Dmax;
    const double b = (10.0 * c.Dmax - 20.0 * y) / c.Dmax;
    const double tanh_a = std::tanh(a);
    const double cosh_b = std::cosh(b);
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const double phase = two_pi * grid.x(ix) / c.Lmax;
      u0(iy, ix) = -(c.g / f) * (10.0 * c.H1 / c.Dmax) * (tanh_a * tanh_a - 1.0) -
                   (40.0 * c.g / f) * c.H2 * std::sinh(b) * std::sin(phase) /
                       (c.Dmax * cosh_b * cosh_b * cosh_b);
      v0(iy, ix) = two_pi * c.H2 * c.g / (f * c.Lmax) * std::cos(phase) / (cosh_b * cosh_b);
    }
  }
  v0.row(0).setZero();
  v0.row(grid.ny - 1).setZero();
  return {u0, v0};
}

/// Grammeltvedt height with geostrophically balanced velocities at t = 0.
inline SweState initial_state(const PhysicalConstants& c, const Grid& grid) {
  SweState s;
  s.h.resize(grid.ny, grid.nx);
  for (std::size_t iy = 0; iy < grid.ny; ++iy)
    for (std::size_t ix = 0; ix < grid.nx; ++ix)
      s.h(iy, ix) = grammeltvedt_height(grid.x(ix), grid.y(iy), c);
  auto [u0, v0] = geostrophic_velocities(c, grid);
  s.u = std::move(u0);
  s.v = std::move(v0);
  // sin(2 pi) is not exactly zero; the seam column must match exactly.
  s.h.col(grid.nx - 1) = s.h.col(0);
  s.u.col(grid.nx - 1) = s.u.col(0);
  s.v.col(grid.nx - 1) = s.v.col(0);
  return s;
}

/// u_ref = max|u0|, h_ref = max h0, L_ref = Lmax.
inline ScaleSet reference_scales(const PhysicalConstants& c, const Grid& grid) {
  const SweState s0 = initial_state(c, grid);
  return ScaleSet::make(c.Lmax, s0.h.maxCoeff(), s0.u.cwiseAbs().maxCoeff());
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Largest stable time step: min(dx, dy) / max(|u| + |v| + sqrt(g h)).
inline double cfl_time_step(const SweState& s, const PhysicalConstants& c, const Grid& grid) {
  double speed = 0.0;
  for (Eigen::Index k = 0; k < s.h.size(); ++k) {
    const double hk = s.h.data()[k];
    const double sk = std::abs(s.u.data()[k]) + std::abs(s.v.data()[k]) +
                      std::sqrt(c.g * std::max(hk, 0.0));
    speed = std::max(speed, sk);
  }
  const double spacing = std::min(grid.dx, grid.dy);
  return speed > 0.0 ? spacing / speed : std::numeric_limits<double>::infinity();
}

/// Discrete mass over one x-period, trapezoidal weights on the wall rows;
/// this is the quantity the flux-form update conserves exactly.
inline double total_mass(const Field& h, const Grid& grid) {
  double sum = 0.0;
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    const double w = (iy == 0 || iy == grid.ny - 1) ? 0.5 : 1.0;
    double row = 0.0;
    for (std::size_t ix = 0; ix + 1 < grid.nx; ++ix) row += h(iy, ix);
    sum += w * row;
  }
  return sum * grid.dx * grid.dy;
}

// ---------------------------------------------------------------------------
// Lax-Wendroff step

namespace detail {

struct Conserved {
  double h, hu, hv;
};

inline Conserved operator+(const Conserved& a, const Conserved& b) {
  return {a.h + b.h, a.hu + b.hu, a.hv + b.hv};
}
inline Conserved operator-(const Conserved& a, const Conserved& b) {
  return {a.h - b.h, a.hu - b.hu, a.hv - b.hv};
}
inline Conserved operator*(double s, const Conserved& a) { return {s * a.h, s * a.hu, s * a.hv}; }

inline Conserved x_flux(const Conserved& q, double g) {
  const double u = q.hu / q.h;
  return {q.hu, q.hu * u + 0.5 * g * q.h * q.h, q.hv * u};
}

inline Conserved y_flux(const Conserved& q, double g) {
  const double v = q.hv / q.h;
  return {q.hv, q.hu * v, q.hv * v + 0.5 * g * q.h * q.h};
}

inline Conserved mirror(const Conserved& q) { return {q.h, q.hu, -q.hv}; }

/// Two ghost layers on every side: periodic in x, mirrored across the walls.
inline constexpr std::size_t kPad = 2;

/// Static forcing on real rows and padded (periodic) columns: Coriolis per
/// row and centred orography gradients per node.
struct Forcing {
  std::size_t width = 0;  // nu + 2 kPad
  std::vector<double> f;
  std::vector<double> Hx;
  std::vector<double> Hy;

  Forcing(const PhysicalConstants& c, const Grid& grid) {
    const std::size_t ny = grid.ny;
    const std::size_t nu = grid.nx - 1;
    width = nu + 2 * kPad;
    f.resize(ny);
    Hx.resize(ny * width);
    Hy.resize(ny * width);
    std::vector<double> H(ny * nu);
    for (std::size_t j = 0; j < ny; ++j) {
      f[j] = coriolis_at(grid.y(j), c);
      for (std::size_t i = 0; i < nu; ++i) H[j * nu + i] = orography(grid.x(i), grid.y(j), c);
    }
    auto at = [&](std::size_t j, std::size_t i) { return H[j * nu + i]; };
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t col = 0; col < width; ++col) {
        const std::size_t i = (col + nu - kPad) % nu;
        const std::size_t ip = (i + 1) % nu;
        const std::size_t im = (i + nu - 1) % nu;
        Hx[j * width + col] = (at(j, ip) - at(j, im)) / (2.0 * grid.dx);
        double hy;
        if (j == 0) {
          hy = -3.0 * at(0, i) + 4.0 * at(1, i) - at(2, i);
        } else if (j == ny - 1) {
          hy = 3.0 * at(j, i) - 4.0 * at(j - 1, i) + at(j - 2, i);
        } else {
          hy = at(j + 1, i) - at(j - 1, i);
        }
        Hy[j * width + col] = hy / (2.0 * grid.dy);
      }
    }
  }

  /// Source for real row j, padded column col.
  Conserved source(const Conserved& q, std::size_t j, std::size_t col, double g) const {
    const std::size_t k = j * width + col;
    return {0.0, f[j] * q.hv - g * q.h * Hx[k], -f[j] * q.hu - g * q.h * Hy[k]};
  }
};

}  // namespace detail

/// Artificial dissipation blended into the corrector, JST style: a
/// second-difference term switched on by a depth-curvature sensor plus a
/// fourth-difference background.  Both act in flux form, so mass stays
/// exactly conserved, and both scale with the step's Courant number.
struct Dissipation {
  double second_order = 0.5;
  double fourth_order = 1.0 / 32.0;

  static Dissipation none() { return {0.0, 0.0}; }
};

namespace detail {

/// Structure-of-arrays storage for conserved triples.
struct Planes {
  std::vector<double> h, hu, hv;

  void reserve(std::size_t n) {
    if (h.size() < n) {
      h.resize(n);
      hu.resize(n);
      hv.resize(n);
    }
  }
};

/// Non-owning view of a Planes triple.
struct PlaneView {
  double* h;
  double* hu;
  double* hv;

  explicit PlaneView(Planes& p) : h(p.h.data()), hu(p.hu.data()), hv(p.hv.data()) {}
  Conserved operator[](std::size_t k) const { return {h[k], hu[k], hv[k]}; }
  void set(std::size_t k, const Conserved& c) const {
    h[k] = c.h;
    hu[k] = c.hu;
    hv[k] = c.hv;
  }
};

/// Throws NonPositiveDepth at the first node with h <= 0 (or NaN).
inline void check_depth(const Field& h) {
  const double* d = h.data();
  const Eigen::Index n = h.size();
  double low = n > 0 ? d[0] : 1.0;
  for (Eigen::Index k = 0; k < n; ++k) low = d[k] < low ? d[k] : low;
  if (low > 0.0 && !std::isnan(h.sum())) return;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(d[k] > 0.0)) {
      throw NonPositiveDepth(static_cast<std::size_t>(k / h.cols()),
                             static_cast<std::size_t>(k % h.cols()), d[k]);
    }
  }
}

}  // namespace detail

/// Scratch buffers reused across steps.  One workspace per thread.
struct SweWorkspace {
  detail::Planes q, F, G, S, Fx, Gy, Dx, Dy, N;
  std::vector<double> sensor;

  /// Sizes every buffer for n padded nodes; never shrinks.
  void reserve(std::size_t n) {
    for (detail::Planes* p : {&q, &F, &G, &S, &Fx, &Gy, &Dx, &Dy, &N}) p->reserve(n);
    if (sensor.size() < n) sensor.resize(n, 0.0);
  }
};

/// Lax-Wendroff integrator bound to one configuration; caches the static
/// forcing so repeated steps do not re-evaluate the orography.
class SweSolver {
 public:
  SweSolver(const PhysicalConstants& c, const Grid& grid, Dissipation dissipation = {})
      : c_(c), grid_(grid), dissipation_(dissipation), forcing_(c, grid) {}

  const PhysicalConstants& constants() const { return c_; }
  const Grid& grid() const { return grid_; }
  const Dissipation& dissipation() const { return dissipation_; }

  /// Advances the state by dt.  Throws CflViolation when dt exceeds max_cfl
  /// times the CFL limit, NonPositiveDepth when the update produces h <= 0.
  SweState step(const SweState& state, double dt, double max_cfl = 1.0) const {
    SweWorkspace work;
    return step(state, dt, work, max_cfl);
  }

  SweState step(const SweState& state, double dt, SweWorkspace& work, double max_cfl = 1.0) const;

 private:
  PhysicalConstants c_;
  Grid grid_;
  Dissipation dissipation_;
  detail::Forcing forcing_;
};

inline SweState SweSolver::step(const SweState& state, double dt, SweWorkspace& work,
                                double max_cfl) const {
  using detail::Conserved;
  using detail::kPad;
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  detail::check_depth(state.h);
  const double dt_limit = cfl_time_step(state, c_, grid_);
  if (dt > max_cfl * dt_limit * (1.0 + 1e-12)) throw CflViolation(dt, max_cfl * dt_limit);

  const std::size_t ny = grid_.ny;
  const std::size_t nu = grid_.nx - 1;
  const std::size_t W = nu + 2 * kPad;  // padded row length
  const std::size_t P = ny + 2 * kPad;  // padded row count
  const std::size_t c0 = kPad;          // first real padded column
  const std::size_t c1 = nu + kPad;     // one past the last real padded column
  const double g = c_.g;
  const double hg = 0.5 * c_.g;
  work.reserve(P * W);

  // Padded conserved state: row p = j + kPad, column col = i + kPad.
  const detail::PlaneView q(work.q);
  for (std::size_t j = 0; j < ny; ++j) {
    const std::size_t base = (j + kPad) * W + c0;
    const double* sh = &state.h(j, 0);
    const double* su = &state.u(j, 0);
    const double* sv = &state.v(j, 0);
    for (std::size_t i = 0; i < nu; ++i) {
      q.h[base + i] = sh[i];
      q.hu[base + i] = sh[i] * su[i];
      q.hv[base + i] = sh[i] * sv[i];
    }
    const std::size_t row = (j + kPad) * W;
    for (std::size_t k = 0; k < kPad; ++k) {
      q.set(row + k, q[row + nu + k]);
      q.set(row + c1 + k, q[row + c0 + k]);
    }
  }
  for (std::size_t k = 1; k <= kPad; ++k) {
    const std::size_t lo_dst = (kPad - k) * W, lo_src = (kPad + k) * W;
    const std::size_t hi_dst = (kPad + ny - 1 + k) * W, hi_src = (kPad + ny - 1 - k) * W;
    for (std::size_t col = 0; col < W; ++col) {
      q.set(lo_dst + col, detail::mirror(q[lo_src + col]));
      q.set(hi_dst + col, detail::mirror(q[hi_src + col]));
    }
  }

  const detail::PlaneView F(work.F);
  const detail::PlaneView G(work.G);
  const std::size_t total = P * W;
  KOOPMAN_IVDEP
  for (std::size_t k = 0; k < total; ++k) {
    const double h = q.h[k], hu = q.hu[k], hv = q.hv[k];
    const double inv = 1.0 / h;
    const double p = hg * h * h;
    const double uv = hu * hv * inv;
    F.h[k] = hu;
    F.hu[k] = hu * hu * inv + p;
    F.hv[k] = uv;
    G.h[k] = hv;
    G.hu[k] = uv;
    G.hv[k] = hv * hv * inv + p;
  }

  // Sources on real rows, all padded columns.
  const detail::PlaneView S(work.S);
  for (std::size_t j = 0; j < ny; ++j) {
    const double fj = forcing_.f[j];
    const double* hx = &forcing_.Hx[j * W];
    const double* hy = &forcing_.Hy[j * W];
    const std::size_t o = j * W;
    const std::size_t r = (j + kPad) * W;
    KOOPMAN_IVDEP
    for (std::size_t col = 0; col < W; ++col) {
      S.h[o + col] = 0.0;
      S.hu[o + col] = fj * q.hv[r + col] - g * q.h[r + col] * hx[col];
      S.hv[o + col] = -fj * q.hu[r + col] - g * q.h[r + col] * hy[col];
    }
  }

  const double hx = dt / (2.0 * grid_.dx);
  const double hy = dt / (2.0 * grid_.dy);
  const double half = 0.5 * dt;
  const double quarter = 0.5 * half;
  const double qdx = 0.25 / grid_.dx;
  const double qdy = 0.25 / grid_.dy;

  // Predictor on x-faces; Fx[j * W + col] is the flux through the face
  // between padded columns col and col + 1, for col = kPad-1 .. nu+kPad-1.
  const detail::PlaneView Fx(work.Fx);
  for (std::size_t j = 0; j < ny; ++j) {
    const std::size_t r = (j + kPad) * W;
    const std::size_t o = j * W;
    KOOPMAN_IVDEP
    for (std::size_t col = c0 - 1; col < c1; ++col) {
      const std::size_t k = r + col;
      const Conserved dGdy = qdy * ((G[k + W] - G[k - W]) + (G[k + 1 + W] - G[k + 1 - W]));
      const Conserved face = 0.5 * (q[k] + q[k + 1]) - hx * (F[k + 1] - F[k]) - half * dGdy +
                             quarter * (S[o + col] + S[o + col + 1]);
      Fx.set(o + col, detail::x_flux(face, g));
    }
  }

  // Predictor on y-faces; Gy[f * W + col] is the flux through face f, which
  // sits between real rows f-1 and f.  Faces 0 and ny lie outside the walls
  // and are mirror images of faces 1 and ny-1.
  const detail::PlaneView Gy(work.Gy);
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    const std::size_t r = (j + kPad) * W;
    const std::size_t o = j * W;
    KOOPMAN_IVDEP
    for (std::size_t col = c0; col < c1; ++col) {
      const std::size_t k = r + col;
      const Conserved dFdx = qdx * ((F[k + 1] - F[k - 1]) + (F[k + 1 + W] - F[k - 1 + W]));
      const Conserved face = 0.5 * (q[k] + q[k + W]) - hy * (G[k + W] - G[k]) - half * dFdx +
                             quarter * (S[o + col] + S[o + W + col]);
      Gy.set(o + W + col, detail::y_flux(face, g));
    }
  }
  for (std::size_t col = c0; col < c1; ++col) {
    const Conserved lo = Gy[W + col];
    const Conserved hi = Gy[(ny - 1) * W + col];
    Gy.set(col, {-lo.h, -lo.hu, lo.hv});
    Gy.set(ny * W + col, {-hi.h, -hi.hu, hi.hv});
  }

  // Dissipative face fluxes from the old state, laid out like Fx and Gy.
  const double courant = dt / dt_limit;
  const double k2 = dissipation_.second_order;
  const double k4 = dissipation_.fourth_order;
  const bool dissipate = k2 > 0.0 || k4 > 0.0;
  const detail::PlaneView Dx(work.Dx);
  const detail::PlaneView Dy(work.Dy);
  if (dissipate) {
    double* sensor = work.sensor.data();
    for (std::size_t p = 1; p + 1 < P; ++p) {
      const std::size_t r = p * W;
      KOOPMAN_IVDEP
      for (std::size_t col = 1; col + 1 < W; ++col) {
        const std::size_t k = r + col;
        const double sx = std::abs(q.h[k + 1] - 2.0 * q.h[k] + q.h[k - 1]) /
                          (q.h[k + 1] + 2.0 * q.h[k] + q.h[k - 1]);
        const double sy = std::abs(q.h[k + W] - 2.0 * q.h[k] + q.h[k - W]) /
                          (q.h[k + W] + 2.0 * q.h[k] + q.h[k - W]);
        sensor[k] = sx > sy ? sx : sy;
      }
    }
    for (std::size_t j = 0; j < ny; ++j) {
      const std::size_t r = (j + kPad) * W;
      const std::size_t o = j * W;
      KOOPMAN_IVDEP
      for (std::size_t col = c0 - 1; col < c1; ++col) {
        const std::size_t k = r + col;
        const double s2 = sensor[k] > sensor[k + 1] ? sensor[k] : sensor[k + 1];
        const double e2 = k2 * s2;
        const double e4 = k4 - e2 > 0.0 ? k4 - e2 : 0.0;
        Dx.set(o + col, courant * (e2 * (q[k + 1] - q[k]) -
                                   e4 * (q[k + 2] - 3.0 * q[k + 1] + 3.0 * q[k] - q[k - 1])));
      }
    }
    for (std::size_t f = 0; f <= ny; ++f) {
      const std::size_t r = (f + kPad) * W;  // padded row just above the face
      const std::size_t o = f * W;
      KOOPMAN_IVDEP
      for (std::size_t col = c0; col < c1; ++col) {
        const std::size_t k = r + col;
        const double s2 = sensor[k - W] > sensor[k] ? sensor[k - W] : sensor[k];
        const double e2 = k2 * s2;
        const double e4 = k4 - e2 > 0.0 ? k4 - e2 : 0.0;
        Dy.set(o + col, courant * (e2 * (q[k] - q[k - W]) -
                                   e4 * (q[k + W] - 3.0 * q[k] + 3.0 * q[k - W] - q[k - 2 * W])));
      }
    }
  }

  // Corrector into N (real rows, padded column layout).
  const detail::PlaneView N(work.N);
  const double rx = dt / grid_.dx;
  const double ry = dt / grid_.dy;
  const double cdx = 0.5 / grid_.dx;
  const double cdy = 0.5 / grid_.dy;
  const double disp = dissipate ? 1.0 : 0.0;
  for (std::size_t j = 0; j < ny; ++j) {
    const std::size_t r = (j + kPad) * W;
    const std::size_t o = j * W;
    const double fj = forcing_.f[j];
    const double* fhx = &forcing_.Hx[o];
    const double* fhy = &forcing_.Hy[o];
    KOOPMAN_IVDEP
    for (std::size_t col = c0; col < c1; ++col) {
      const std::size_t k = r + col;
      // Mid-time node state for the source term.
      const Conserved div = cdx * (F[k + 1] - F[k - 1]) + cdy * (G[k + W] - G[k - W]);
      const Conserved mid = q[k] - half * div + half * S[o + col];
      const Conserved src{0.0, fj * mid.hv - g * mid.h * fhx[col],
                          -fj * mid.hu - g * mid.h * fhy[col]};
      const Conserved diss = (Dx[o + col] - Dx[o + col - 1]) + (Dy[o + W + col] - Dy[o + col]);
      const Conserved next = q[k] - rx * (Fx[o + col] - Fx[o + col - 1]) -
                             ry * (Gy[o + W + col] - Gy[o + col]) + dt * src + disp * diss;
      N.set(o + col, next);
    }
  }

  SweState out;
  out.h.resize(ny, grid_.nx);
  out.u.resize(ny, grid_.nx);
  out.v.resize(ny, grid_.nx);
  for (std::size_t j = 0; j < ny; ++j) {
    const std::size_t o = j * W + c0;
    double* oh = &out.h(j, 0);
    double* ou = &out.u(j, 0);
    double* ov = &out.v(j, 0);
    double low = N.h[o];
    for (std::size_t i = 0; i < nu; ++i) low = N.h[o + i] < low ? N.h[o + i] : low;
    if (!(low > 0.0)) {
      for (std::size_t i = 0; i < nu; ++i) {
        if (!(N.h[o + i] > 0.0)) throw NonPositiveDepth(j, i, N.h[o + i]);
      }
    }
    const double vmask = (j == 0 || j == ny - 1) ? 0.0 : 1.0;
    KOOPMAN_IVDEP
    for (std::size_t i = 0; i < nu; ++i) {
      const double h = N.h[o + i];
      oh[i] = h;
      ou[i] = N.hu[o + i] / h;
      ov[i] = vmask * (N.hv[o + i] / h);
    }
    oh[nu] = oh[0];
    ou[nu] = ou[0];
    ov[nu] = ov[0];
  }
  out.t = state.t + dt;
  return out;
}

inline SweState lax_wendroff_step(const SweState& state, double dt, const PhysicalConstants& c,
                                  const Grid& grid, double max_cfl = 1.0,
                                  Dissipation dissipation = {}) {
  return SweSolver(c, grid, dissipation).step(state, dt, max_cfl);
}

/// States at t = 0, snapshot_dt, ..., (n_snapshots-1) snapshot_dt.  The
/// optional observer sees every intermediate sub-step state.
inline std::vector<SweState> simulate(const PhysicalConstants& c, const Grid& grid,
                                      double snapshot_dt, std::size_t n_snapshots, double cfl,
                                      Dissipation dissipation = {},
                                      const std::function<void(const SweState&)>& on_step = {}) {
  if (n_snapshots < 2) throw InvalidArgument("need at least 2 snapshots");
  if (!(snapshot_dt > 0.0)) throw InvalidArgument("snapshot interval must be positive");
  if (!(cfl > 0.0)) throw InvalidArgument("CFL factor must be positive");

  std::vector<SweState> out;
  out.reserve(n_snapshots);
  const SweSolver solver(c, grid, dissipation);
  SweWorkspace work;
  SweState state = initial_state(c, grid);
  out.push_back(state);
  for (std::size_t k = 1; k < n_snapshots; ++k) {
    const double target = static_cast<double>(k) * snapshot_dt;
    while (state.t < target) {
      const double remaining = target - state.t;
      const double dt_cfl = cfl * cfl_time_step(state, c, grid);
      const bool lands = dt_cfl >= remaining;
      try {
        state = solver.step(state, lands ? remaining : dt_cfl, work);
      } catch (const CflViolation& e) {
        throw SimulationFailure(state.t, e.what(), true);
      } catch (const NonPositiveDepth& e) {
        throw SimulationFailure(state.t, e.what(), false);
      }
      if (lands) state.t = target;
      if (on_step) on_step(state);
    }
    out.push_back(state);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling

inline std::vector<SweState> nondimensionalize(const std::vector<SweState>& states,
                                               const ScaleSet& scales) {
  std::vector<SweState> out;
  out.reserve(states.size());
  for (const auto& s : states) {
    out.push_back({s.h / scales.h_ref, s.u / scales.u_ref, s.v / scales.u_ref, s.t / scales.t_ref});
  }
  return out;
}

inline std::vector<SweState> dimensionalize(const std::vector<SweState>& states,
                                            const ScaleSet& scales) {
  std::vector<SweState> out;
  out.reserve(states.size());
  for (const auto& s : states) {
    out.push_back({s.h * scales.h_ref, s.u * scales.u_ref, s.v * scales.u_ref, s.t * scales.t_ref});
  }
  return out;
}

/// Grid spacings in units of L_ref.
inline Grid nondimensionalize(const Grid& grid, const ScaleSet& scales) {
  return Grid{grid.nx, grid.ny, grid.dx / scales.L_ref, grid.dy / scales.L_ref};
}

// ---------------------------------------------------------------------------

/// dv/dx - du/dy: periodic centred differences in x, centred in y with
/// second-order one-sided differences on the wall rows.
inline Field vorticity(const Field& u, const Field& v, const Grid& grid) {
  if (grid.nx < 3 || grid.ny < 3) throw InvalidArgument("vorticity needs nx, ny >= 3");
  if (u.rows() != static_cast<Eigen::Index>(grid.ny) ||
      u.cols() != static_cast<Eigen::Index>(grid.nx) || v.rows() != u.rows() ||
      v.cols() != u.cols()) {
    throw ShapeMismatch("velocity fields do not match the grid");
  }
  const std::size_t ny = grid.ny;
  const std::size_t nu = grid.nx - 1;
  Field w(ny, grid.nx);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nu; ++i) {
      const std::size_t ip = (i + 1) % nu;
      const std::size_t im = (i + nu - 1) % nu;
      const double dvdx = (v(j, ip) - v(j, im)) / (2.0 * grid.dx);
      double dudy;
      if (j == 0) {
        dudy = (-3.0 * u(0, i) + 4.0 * u(1, i) - u(2, i)) / (2.0 * grid.dy);
      } else if (j == ny - 1) {
        dudy = (3.0 * u(j, i) - 4.0 * u(j - 1, i) + u(j - 2, i)) / (2.0 * grid.dy);
      } else {
        dudy = (u(j + 1, i) - u(j - 1, i)) / (2.0 * grid.dy);
      }
      w(j, i) = dvdx - dudy;
    }
  }
  w.col(nu) = w.col(0);
  return w;
}

inline Field vorticity(const SweState& state, const Grid& grid) {
  return vorticity(state.u, state.v, grid);
}

}  // namespace koopman
