#pragma once

// Position/momentum grids, the internal unit system and the wavefunction
// container shared by the propagator and the observables.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <new>
#include <vector>

#include "ctap/constants.hpp"
#include "ctap/errors.hpp"
#include "ctap/parallel.hpp"

namespace ctap {

using cplx = std::complex<double>;

// 64-byte aligned storage so FFTW can use SIMD codelets on any field.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    if (n > std::numeric_limits<std::size_t>::max() / sizeof(T)) throw std::bad_alloc();
    const std::size_t bytes = ((n * sizeof(T) + 63) / 64) * 64;
    void* p = std::aligned_alloc(64, bytes == 0 ? 64 : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using ComplexField = std::vector<cplx, AlignedAllocator<cplx>>;
using RealField = std::vector<double, AlignedAllocator<double>>;

// Internal units: lengths in L0, masses in m0, hbar = 1.
struct UnitSystem {
  double length = 1e-6;              // m
  double mass = phys::lithium6_mass;  // kg

  double time() const { return mass * length * length / phys::hbar; }
  double energy() const { return phys::hbar * phys::hbar / (mass * length * length); }

  double to_internal_length(double m) const { return m / length; }
  double to_si_length(double l) const { return l * length; }
  double to_internal_time(double s) const { return s / time(); }
  double to_si_time(double t) const { return t * time(); }
  double to_internal_energy(double j) const { return j / energy(); }
  double to_si_energy(double e) const { return e * energy(); }
  double to_internal_mass(double kg) const { return kg / mass; }
  double to_internal_wavenumber(double per_m) const { return per_m * length; }
  double to_si_wavenumber(double k) const { return k / length; }
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Uniform periodic grid. Coordinates are SI metres; point i sits at
// origin + i * spacing. Storage index = (ix * ny + iy) * nz + iz.
struct SimGrid {
  std::array<std::size_t, 3> n{8, 8, 8};
  std::array<double, 3> extent{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  std::size_t size() const { return n[0] * n[1] * n[2]; }
  double spacing(int axis) const { return extent[axis] / static_cast<double>(n[axis]); }
  double coord(int axis, std::size_t i) const {
    return origin[axis] + static_cast<double>(i) * spacing(axis);
  }
  double cell_volume() const { return spacing(0) * spacing(1) * spacing(2); }

  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return (ix * n[1] + iy) * n[2] + iz;
  }

  // Standard FFT frequency ordering scaled by 2 pi / L (rad/m).
  double wavenumber(int axis, std::size_t i) const {
    const auto len = static_cast<long long>(n[axis]);
    const auto j = static_cast<long long>(i);
    const long long f = j < (len + 1) / 2 ? j : j - len;
    return phys::two_pi / extent[axis] * static_cast<double>(f);
  }
  std::vector<double> momentum_axis(int axis) const {
    std::vector<double> k(n[axis]);
    for (std::size_t i = 0; i < n[axis]; ++i) k[i] = wavenumber(axis, i);
    return k;
  }
  // pi N / L: magnitude of the Nyquist wavenumber.
  double k_max(int axis) const {
    return phys::pi * static_cast<double>(n[axis]) / extent[axis];
  }

  bool operator==(const SimGrid&) const = default;
};

inline SimGrid make_grid(std::size_t nx, std::size_t ny, std::size_t nz,
                         std::array<double, 3> extent,
                         std::array<double, 3> origin = {0.0, 0.0, 0.0}) {
  for (std::size_t c : {nx, ny, nz}) {
    if (c < 8 || !is_power_of_two(c)) {
      throw InvalidArgument("grid counts must be powers of two and >= 8, got " +
                            std::to_string(c));
    }
  }
  for (double e : extent) {
    if (!(e > 0.0) || !std::isfinite(e)) throw InvalidArgument("grid extents must be positive");
  }
  return SimGrid{{nx, ny, nz}, extent, origin};
}

// Single z-plane of a 3D grid, for transverse (x, y) problems. The z axis has
// one point and contributes no kinetic energy.
inline SimGrid transverse_plane(const SimGrid& g, double z) {
  SimGrid t = g;
  t.n[2] = 1;
  t.extent[2] = g.spacing(2);
  t.origin[2] = z;
  return t;
}

struct Wavefunction {
  SimGrid grid;
  ComplexField psi;
  double time = 0.0;  // s

  Wavefunction() = default;
  explicit Wavefunction(const SimGrid& g, double t = 0.0) : grid(g), psi(g.size()), time(t) {}

  cplx& at(std::size_t ix, std::size_t iy, std::size_t iz) { return psi[grid.index(ix, iy, iz)]; }
  const cplx& at(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return psi[grid.index(ix, iy, iz)];
  }
};

// Sum over x-slabs of f(slab), combined in a fixed pairwise order.
template <class SlabFn>
double slab_reduce(const SimGrid& g, ThreadPool* pool, SlabFn&& f) {
  std::vector<double> partial(g.n[0]);
  auto body = [&](std::size_t b, std::size_t e) {
    for (std::size_t ix = b; ix < e; ++ix) partial[ix] = f(ix);
  };
  if (pool) {
    pool->parallel_for(g.n[0], body);
  } else {
    body(0, g.n[0]);
  }
  return pairwise_sum(partial);
}

// Integral of |psi|^2 dV.
inline double norm(const Wavefunction& w, ThreadPool* pool = nullptr) {
  const std::size_t slab = w.grid.n[1] * w.grid.n[2];
  const double s = slab_reduce(w.grid, pool, [&](std::size_t ix) {
    double acc = 0.0;
    const cplx* p = w.psi.data() + ix * slab;
    for (std::size_t i = 0; i < slab; ++i) acc += std::norm(p[i]);
    return acc;
  });
  return s * w.grid.cell_volume();
}

inline void scale(Wavefunction& w, double factor) {
  for (auto& c : w.psi) c *= factor;
}

inline double normalize(Wavefunction& w, ThreadPool* pool = nullptr) {
  const double nrm = norm(w, pool);
  if (!(nrm > 0.0)) throw InvalidArgument("cannot normalize a zero wavefunction");
  scale(w, 1.0 / std::sqrt(nrm));
  return nrm;
}

// <a|b> with the volume element.
inline cplx overlap(const Wavefunction& a, const Wavefunction& b) {
  if (!(a.grid == b.grid)) throw GridMismatch("overlap: wavefunctions live on different grids");
  const std::size_t slab = a.grid.n[1] * a.grid.n[2];
  std::vector<double> re(a.grid.n[0]), im(a.grid.n[0]);
  for (std::size_t ix = 0; ix < a.grid.n[0]; ++ix) {
    cplx acc{};
    const cplx* pa = a.psi.data() + ix * slab;
    const cplx* pb = b.psi.data() + ix * slab;
    for (std::size_t i = 0; i < slab; ++i) acc += std::conj(pa[i]) * pb[i];
    re[ix] = acc.real();
    im[ix] = acc.imag();
  }
  return cplx{pairwise_sum(re), pairwise_sum(im)} * a.grid.cell_volume();
}

// Normalized separable Gaussian packet. widths are the standard deviations of
// |psi|^2 along each axis, momentum is the mean wavenumber (rad/m).
inline Wavefunction gaussian_packet(const SimGrid& g, std::array<double, 3> center,
                                    std::array<double, 3> widths,
                                    std::array<double, 3> momentum = {0.0, 0.0, 0.0}) {
  for (int a = 0; a < 3; ++a) {
    if (!(widths[a] > 0.0)) throw InvalidArgument("packet widths must be positive");
    if (g.n[a] == 1) continue;
    const double lo = g.origin[a];
    const double hi = g.origin[a] + g.extent[a];
    if (center[a] - 6.0 * widths[a] < lo || center[a] + 6.0 * widths[a] > hi) {
      throw InvalidArgument("packet does not fit 6 sigma inside the box along axis " +
                            std::to_string(a));
    }
  }
  std::array<std::vector<cplx>, 3> f;
  for (int a = 0; a < 3; ++a) {
    f[a].resize(g.n[a]);
    for (std::size_t i = 0; i < g.n[a]; ++i) {
      if (g.n[a] == 1) {
        f[a][i] = 1.0;
        continue;
      }
      const double u = g.coord(a, i) - center[a];
      const double amp = std::exp(-u * u / (4.0 * widths[a] * widths[a]));
      f[a][i] = amp * std::polar(1.0, momentum[a] * u);
    }
  }
  Wavefunction w(g);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      const cplx fxy = f[0][ix] * f[1][iy];
      cplx* row = &w.at(ix, iy, 0);
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) row[iz] = fxy * f[2][iz];
    }
  }
  normalize(w);
  return w;
}

// Expectation of one position coordinate.
inline double mean_position(const Wavefunction& w, int axis) {
  const auto& g = w.grid;
  std::vector<double> partial(g.n[0]);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    double acc = 0.0;
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const std::size_t idx[3] = {ix, iy, iz};
        acc += std::norm(w.at(ix, iy, iz)) * g.coord(axis, idx[axis]);
      }
    }
    partial[ix] = acc;
  }
  return pairwise_sum(partial) * g.cell_volume() / norm(w);
}

// Standard deviation of one position coordinate.
inline double rms_width(const Wavefunction& w, int axis) {
  const auto& g = w.grid;
  const double mu = mean_position(w, axis);
  std::vector<double> partial(g.n[0]);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    double acc = 0.0;
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const std::size_t idx[3] = {ix, iy, iz};
        const double u = g.coord(axis, idx[axis]) - mu;
        acc += std::norm(w.at(ix, iy, iz)) * u * u;
      }
    }
    partial[ix] = acc;
  }
  return std::sqrt(pairwise_sum(partial) * g.cell_volume() / norm(w));
}

}  // namespace ctap
