#pragma once

// Strang split-operator propagation of the Schroedinger equation on a
// periodic grid, in real time and in imaginary time.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ctap/errors.hpp"
#include "ctap/fft.hpp"
#include "ctap/parallel.hpp"
#include "ctap/qgrid.hpp"

namespace ctap::prop {

enum class Mode { real_time, imaginary_time };

// Precomputed factors for one (grid, potential, dt) triple. Potential energies
// are measured from v_ref, which only changes a global phase (real time) or the
// normalization (imaginary time).
class StepPlan {
 public:
  StepPlan(const SimGrid& grid, const RealField& potential, double dt, Mode mode, double mass,
           unsigned threads = 1, UnitSystem units = {})
      : grid_(grid), dt_(dt), mode_(mode), mass_(mass), units_(units),
        pool_(std::make_unique<ThreadPool>(std::max(1u, threads))),
        fft_(std::make_unique<Fft3d>(grid.n, std::max(1u, threads))) {
    if (potential.size() != grid.size()) throw GridMismatch("potential does not match the plan grid");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
    if (!(mass > 0.0)) throw InvalidArgument("mass must be positive");
    v_ref_ = std::numeric_limits<double>::infinity();
    for (double v : potential) {
      if (!std::isfinite(v)) throw InvalidArgument("potential contains non-finite values");
      v_ref_ = std::min(v_ref_, v);
    }
    potential_ = potential;

    const double tau = units_.to_internal_time(dt);
    const double m = units_.to_internal_mass(mass);
    half_v_.resize(grid.size());
    full_v_.resize(grid.size());
    pool_->parallel_for(grid.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const double v = units_.to_internal_energy(potential[i] - v_ref_);
        half_v_[i] = factor(v * 0.5 * tau);
        full_v_[i] = factor(v * tau);
      }
    });
    const double inv_n = 1.0 / static_cast<double>(grid.size());
    for (int a = 0; a < 3; ++a) {
      kinetic_[a].resize(grid.n[a]);
      for (std::size_t i = 0; i < grid.n[a]; ++i) {
        const double k = units_.to_internal_wavenumber(grid.wavenumber(a, i));
        kinetic_[a][i] = factor(0.5 * k * k / m * tau);
      }
    }
    for (auto& c : kinetic_[2]) c *= inv_n;
  }

  const SimGrid& grid() const { return grid_; }
  double dt() const { return dt_; }
  Mode mode() const { return mode_; }
  double mass() const { return mass_; }
  double v_ref() const { return v_ref_; }
  unsigned threads() const { return pool_->size(); }
  ThreadPool& pool() const { return *pool_; }
  const Fft3d& fft() const { return *fft_; }
  const RealField& potential() const { return potential_; }
  const ComplexField& half_potential_factor() const { return half_v_; }
  const ComplexField& full_potential_factor() const { return full_v_; }
  const std::vector<cplx>& kinetic_factor(int axis) const { return kinetic_[axis]; }
  const UnitSystem& units() const { return units_; }

  void apply_half_potential(ComplexField& psi) const { multiply(psi, half_v_); }
  void apply_full_potential(ComplexField& psi) const { multiply(psi, full_v_); }

  // FFT, separable kinetic factor (including 1/N), inverse FFT.
  void apply_kinetic(ComplexField& psi) const {
    fft_->forward(psi);
    const std::size_t ny = grid_.n[1], nz = grid_.n[2];
    pool_->parallel_for(grid_.n[0], [&](std::size_t b, std::size_t e) {
      for (std::size_t ix = b; ix < e; ++ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
          const cplx kxy = kinetic_[0][ix] * kinetic_[1][iy];
          cplx* row = psi.data() + (ix * ny + iy) * nz;
          for (std::size_t iz = 0; iz < nz; ++iz) row[iz] *= kxy * kinetic_[2][iz];
        }
      }
    });
    fft_->backward(psi);
  }

 private:
  // exp(-i phi) in real time, exp(-phi) in imaginary time.
  cplx factor(double phi) const {
    return mode_ == Mode::real_time ? std::polar(1.0, -phi) : cplx{std::exp(-phi), 0.0};
  }

  void multiply(ComplexField& psi, const ComplexField& f) const {
    pool_->parallel_for(psi.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) psi[i] *= f[i];
    });
  }

  SimGrid grid_;
  double dt_;
  Mode mode_;
  double mass_;
  UnitSystem units_;
  double v_ref_ = 0.0;
  RealField potential_;
  std::unique_ptr<ThreadPool> pool_;
  std::unique_ptr<Fft3d> fft_;
  ComplexField half_v_;
  ComplexField full_v_;
  std::array<std::vector<cplx>, 3> kinetic_;
};

inline void check_plan(const Wavefunction& psi, const StepPlan& plan) {
  if (!(psi.grid == plan.grid())) throw GridMismatch("wavefunction grid does not match the step plan");
}

// One symmetric step V/2, T, V/2. Imaginary-time steps renormalize.
inline void step(Wavefunction& psi, const StepPlan& plan) {
  check_plan(psi, plan);
  plan.apply_half_potential(psi.psi);
  plan.apply_kinetic(psi.psi);
  plan.apply_half_potential(psi.psi);
  psi.time += plan.dt();
  if (plan.mode() == Mode::imaginary_time) normalize(psi, &plan.pool());
}

// <H> in joules, including the plan's reference energy.
inline double energy(const Wavefunction& psi, const StepPlan& plan) {
  check_plan(psi, plan);
  const auto& g = psi.grid;
  const std::size_t slab = g.n[1] * g.n[2];
  const double nrm = norm(psi, &plan.pool());
  const double pot = slab_reduce(g, &plan.pool(), [&](std::size_t ix) {
    double acc = 0.0;
    for (std::size_t i = ix * slab; i < (ix + 1) * slab; ++i) {
      acc += std::norm(psi.psi[i]) * (plan.potential()[i] - plan.v_ref());
    }
    return acc;
  }) * g.cell_volume();
  ComplexField k = psi.psi;
  plan.fft().forward(k);
  const auto kx = g.momentum_axis(0), ky = g.momentum_axis(1), kz = g.momentum_axis(2);
  const double kin = slab_reduce(g, &plan.pool(), [&](std::size_t ix) {
    double acc = 0.0;
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const double k2 = kx[ix] * kx[ix] + ky[iy] * ky[iy] + kz[iz] * kz[iz];
        acc += std::norm(k[(ix * g.n[1] + iy) * g.n[2] + iz]) * k2;
      }
    }
    return acc;
  }) * g.cell_volume() / static_cast<double>(g.size());
  const double t = phys::hbar * phys::hbar / (2.0 * plan.mass()) * kin;
  return (t + pot) / nrm + plan.v_ref();
}

struct Observer {
  std::size_t stride = 1;  // in steps; called at step 0, every stride, and at the end
  std::function<void(const Wavefunction&, std::size_t step)> fn;
};

struct EvolveOptions {
  std::size_t progress_stride = 0;  // 0 disables the stderr progress line
  std::FILE* progress_stream = stderr;
};

struct EvolveStats {
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  double steps_per_sec = 0.0;
};

// n_steps real-time steps with adjacent potential half-steps merged. The state
// is brought to a full step (exact V/2 halves) whenever an observer or the
// progress line needs it.
inline EvolveStats evolve_real(Wavefunction& psi, const StepPlan& plan, std::size_t n_steps,
                               const std::vector<Observer>& observers = {},
                               const EvolveOptions& options = {}) {
  EvolveStats stats;
  if (n_steps == 0) return stats;
  check_plan(psi, plan);
  if (plan.mode() != Mode::real_time) throw InvalidArgument("evolve_real needs a real-time plan");

  auto due = [&](std::size_t s) {
    if (s == n_steps) return true;
    if (options.progress_stride && s % options.progress_stride == 0) return true;
    for (const auto& o : observers) {
      if (o.stride && s % o.stride == 0) return true;
    }
    return false;
  };
  auto notify = [&](std::size_t s) {
    for (const auto& o : observers) {
      if (s == 0 || s == n_steps || (o.stride && s % o.stride == 0)) o.fn(psi, s);
    }
  };

  const auto start = std::chrono::steady_clock::now();
  auto progress = [&](std::size_t s) {
    if (!options.progress_stride || !options.progress_stream) return;
    if (s % options.progress_stride != 0 && s != n_steps) return;
    const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(options.progress_stream, "step %zu/%zu t=%.6e s norm=%.12f steps/s=%.2f\n", s,
                 n_steps, psi.time, norm(psi, &plan.pool()), el > 0 ? s / el : 0.0);
    std::fflush(options.progress_stream);
  };

  notify(0);
  const double t0 = psi.time;
  plan.apply_half_potential(psi.psi);
  for (std::size_t s = 1; s <= n_steps; ++s) {
    plan.apply_kinetic(psi.psi);
    psi.time = t0 + static_cast<double>(s) * plan.dt();
    if (due(s)) {
      plan.apply_half_potential(psi.psi);
      notify(s);
      progress(s);
      if (s < n_steps) plan.apply_half_potential(psi.psi);
    } else {
      plan.apply_full_potential(psi.psi);
    }
  }
  stats.steps = n_steps;
  stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  stats.steps_per_sec = stats.wall_seconds > 0 ? n_steps / stats.wall_seconds : 0.0;
  return stats;
}

struct GroundStateOptions {
  double tau = 1e-7;             // s
  double tol = 1e-10;            // relative energy change between checks
  std::size_t check_every = 100;
  std::size_t max_steps = 2000000;
  unsigned threads = 1;
};

struct GroundStateResult {
  Wavefunction psi;
  double energy = 0.0;  // J
  std::size_t steps = 0;
  std::vector<double> energy_history;  // one entry per check
};

// Imaginary-time relaxation of seed. Convergence compares successive energy
// checks relative to E - min(V).
inline GroundStateResult ground_state_imaginary(const SimGrid& grid, const RealField& potential,
                                                double mass, const Wavefunction& seed,
                                                const GroundStateOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (!(seed.grid == grid)) throw GridMismatch("seed grid does not match the potential grid");
  StepPlan plan(grid, potential, opt.tau, Mode::imaginary_time, mass, opt.threads);
  GroundStateResult r{seed, 0.0, 0, {}};
  normalize(r.psi, &plan.pool());
  const std::size_t every = std::max<std::size_t>(1, opt.check_every);
  double prev = energy(r.psi, plan);
  r.energy_history.push_back(prev);
  while (r.steps < opt.max_steps) {
    for (std::size_t i = 0; i < every; ++i) step(r.psi, plan);
    r.steps += every;
    const double e = energy(r.psi, plan);
    r.energy_history.push_back(e);
    const double scale = std::max(std::abs(e - plan.v_ref()), std::numeric_limits<double>::min());
    if (std::abs(e - prev) < opt.tol * scale) {
      r.energy = e;
      r.psi.time = 0.0;
      return r;
    }
    prev = e;
  }
  throw NonConvergence("imaginary-time relaxation did not converge in " +
                       std::to_string(opt.max_steps) + " steps");
}

}  // namespace ctap::prop
