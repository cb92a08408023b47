#include <gtest/gtest.h>

#include <cmath>

#include "ctap/propagator.hpp"

using namespace ctap;
using namespace ctap::prop;

namespace {

constexpr double kMass = phys::lithium6_mass;

RealField harmonic(const SimGrid& g, std::array<double, 3> omega, std::array<double, 3> center = {}) {
  RealField v(g.size());
  for (std::size_t ix = 0; ix < g.n[0]; ++ix)
    for (std::size_t iy = 0; iy < g.n[1]; ++iy)
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const double r[3] = {g.coord(0, ix) - center[0], g.coord(1, iy) - center[1],
                             g.coord(2, iz) - center[2]};
        double e = 0.0;
        for (int a = 0; a < 3; ++a) e += 0.5 * kMass * omega[a] * omega[a] * r[a] * r[a];
        v[g.index(ix, iy, iz)] = e;
      }
  return v;
}

// rms width of |psi|^2 for the harmonic ground state.
double ho_sigma(double omega) { return std::sqrt(phys::hbar / (2.0 * kMass * omega)); }

struct Coherent {
  SimGrid g = make_grid(64, 64, 64, {24e-6, 24e-6, 24e-6}, {-12e-6, -12e-6, -12e-6});
  double omega = phys::two_pi * 1e3;
  double x0 = 3e-6;
  RealField v = harmonic(g, {omega, omega, omega});

  double z_after(double t, std::size_t n) const {
    StepPlan plan(g, v, t / static_cast<double>(n), Mode::real_time, kMass);
    const double s = ho_sigma(omega);
    auto psi = gaussian_packet(g, {0, 0, x0}, {s, s, s});
    evolve_real(psi, plan, n);
    return mean_position(psi, 2);
  }
};

}  // namespace

TEST(StepPlan, RealTimeFactorsAreUnitModulus) {
  const auto g = make_grid(16, 16, 16, {16e-6, 16e-6, 16e-6}, {-8e-6, -8e-6, -8e-6});
  StepPlan plan(g, harmonic(g, {1e4, 2e4, 3e4}), 1e-6, Mode::real_time, kMass);
  for (const auto& c : plan.half_potential_factor()) EXPECT_NEAR(std::abs(c), 1.0, 1e-14);
  for (const auto& c : plan.full_potential_factor()) EXPECT_NEAR(std::abs(c), 1.0, 1e-14);
  for (int a = 0; a < 2; ++a)
    for (const auto& c : plan.kinetic_factor(a)) EXPECT_NEAR(std::abs(c), 1.0, 1e-14);
  for (const auto& c : plan.kinetic_factor(2)) EXPECT_NEAR(std::abs(c) * g.size(), 1.0, 1e-12);
}

TEST(StepPlan, GridMismatch) {
  const auto g = make_grid(16, 16, 16, {1e-5, 1e-5, 1e-5});
  const auto h = make_grid(16, 16, 32, {1e-5, 1e-5, 1e-5});
  StepPlan plan(g, RealField(g.size(), 0.0), 1e-6, Mode::real_time, kMass);
  Wavefunction w(h);
  EXPECT_THROW(step(w, plan), GridMismatch);
  EXPECT_THROW(StepPlan(g, RealField(10, 0.0), 1e-6, Mode::real_time, kMass), GridMismatch);
}

TEST(Step, FreeGaussianDispersion) {
  const auto g = make_grid(32, 32, 256, {32e-6, 32e-6, 64e-6}, {-16e-6, -16e-6, -32e-6});
  const double s0 = 1e-6;
  auto psi = gaussian_packet(g, {0, 0, 0}, {1.5e-6, 1.5e-6, s0});
  const double t = 2.0 * kMass * s0 * s0 / phys::hbar;
  const std::size_t n = 190;
  StepPlan plan(g, RealField(g.size(), 0.0), t / n, Mode::real_time, kMass);
  for (std::size_t i = 0; i < n; ++i) step(psi, plan);
  const double tau = phys::hbar * t / (2.0 * kMass * s0 * s0);
  EXPECT_NEAR(rms_width(psi, 2) / (s0 * std::sqrt(1.0 + tau * tau)), 1.0, 1e-6);
  EXPECT_NEAR(norm(psi), 1.0, 1e-12);
}

TEST(Step, CoherentStateOscillation) {
  Coherent c;
  const double period = phys::two_pi / c.omega;
  for (double frac : {0.125, 0.5, 1.0}) {
    const auto n = static_cast<std::size_t>(std::llround(628 * frac));
    const double z = c.z_after(frac * period, n);
    EXPECT_NEAR(z / c.x0, std::cos(c.omega * frac * period), 1e-4);
  }
}

TEST(Step, StrangSecondOrder) {
  Coherent c;
  const double t = 0.25 * phys::two_pi / c.omega;
  const double e1 = std::abs(c.z_after(t, 16));
  const double e2 = std::abs(c.z_after(t, 32));
  const double e3 = std::abs(c.z_after(t, 64));
  EXPECT_NEAR(e1 / e2, 4.0, 0.3);
  EXPECT_NEAR(e2 / e3, 4.0, 0.3);
}

TEST(Step, SmallStepIsNearIdentity) {
  Coherent c;
  const double s = ho_sigma(c.omega);
  const auto psi0 = gaussian_packet(c.g, {0, 0, c.x0}, {s, s, s});
  auto dist = [&](double dt) {
    StepPlan plan(c.g, c.v, dt, Mode::real_time, kMass);
    auto psi = psi0;
    step(psi, plan);
    double d = 0.0;
    for (std::size_t i = 0; i < psi.psi.size(); ++i) d += std::norm(psi.psi[i] - psi0.psi[i]);
    return std::sqrt(d * c.g.cell_volume());
  };
  const double a = dist(1e-8), b = dist(0.5e-8);
  EXPECT_NEAR(a / b, 2.0, 0.01);
  EXPECT_LT(a, 1e-3);
}

TEST(EvolveReal, ZeroStepsUntouched) {
  Coherent c;
  StepPlan plan(c.g, c.v, 1e-6, Mode::real_time, kMass);
  const double s = ho_sigma(c.omega);
  auto psi = gaussian_packet(c.g, {0, 0, c.x0}, {s, s, s});
  const auto before = psi.psi;
  bool called = false;
  evolve_real(psi, plan, 0, {{1, [&](const Wavefunction&, std::size_t) { called = true; }}});
  EXPECT_EQ(psi.psi, before);
  EXPECT_FALSE(called);
}

TEST(EvolveReal, TelescopingMatchesPlainSteps) {
  Coherent c;
  StepPlan plan(c.g, c.v, 2e-6, Mode::real_time, kMass);
  const double s = ho_sigma(c.omega);
  auto a = gaussian_packet(c.g, {0, 0, c.x0}, {s, s, s});
  auto b = a;
  for (int i = 0; i < 50; ++i) step(a, plan);
  std::vector<std::size_t> seen;
  const auto stats = evolve_real(b, plan, 50, {{20, [&](const Wavefunction&, std::size_t k) { seen.push_back(k); }}});
  double d = 0.0;
  for (std::size_t i = 0; i < a.psi.size(); ++i) d = std::max(d, std::abs(a.psi[i] - b.psi[i]));
  EXPECT_LT(d * std::sqrt(c.g.cell_volume()), 1e-12);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 20, 40, 50}));
  EXPECT_EQ(stats.steps, 50u);
  EXPECT_GT(stats.steps_per_sec, 0.0);
  EXPECT_DOUBLE_EQ(b.time, 50 * 2e-6);
}

TEST(EvolveReal, UnitarityAndEnergyConservation) {
  const auto g = make_grid(16, 16, 64, {16e-6, 16e-6, 32e-6}, {-8e-6, -8e-6, -16e-6});
  const double w = phys::two_pi * 500.0;
  const auto v = harmonic(g, {w, w, w});
  StepPlan plan(g, v, 1e-6, Mode::real_time, kMass);
  const double s = ho_sigma(w);
  auto psi = gaussian_packet(g, {0, 0, 3e-6}, {s, s, 1.3 * s});
  const double e0 = energy(psi, plan);
  evolve_real(psi, plan, 10000);
  EXPECT_NEAR(norm(psi), 1.0, 1e-8);
  EXPECT_NEAR(energy(psi, plan) / e0, 1.0, 1e-6);
}

TEST(EvolveReal, BitwiseDeterministic) {
  Coherent c;
  auto run = [&] {
    StepPlan plan(c.g, c.v, 2e-6, Mode::real_time, kMass, 2);
    const double s = ho_sigma(c.omega);
    auto psi = gaussian_packet(c.g, {0, 0, c.x0}, {s, s, s});
    std::vector<double> trace;
    evolve_real(psi, plan, 40, {{10, [&](const Wavefunction& w, std::size_t) {
                                  trace.push_back(mean_position(w, 2));
                                }}});
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(GroundState, AnisotropicHarmonic) {
  const auto g = make_grid(64, 64, 64, {24e-6, 24e-6, 24e-6}, {-12e-6, -12e-6, -12e-6});
  const std::array<double, 3> w{phys::two_pi * 1e3, phys::two_pi * 1.5e3, phys::two_pi * 2e3};
  const auto v = harmonic(g, w);
  auto seed = gaussian_packet(g, {0.5e-6, -0.3e-6, 0.2e-6}, {1.5e-6, 1.2e-6, 1e-6});
  GroundStateOptions opt;
  opt.tau = 1e-6;
  opt.tol = 1e-10;
  const auto r = ground_state_imaginary(g, v, kMass, seed, opt);
  const double exact = 0.5 * phys::hbar * (w[0] + w[1] + w[2]);
  EXPECT_NEAR(r.energy / exact, 1.0, 1e-4);
  EXPECT_NEAR(norm(r.psi), 1.0, 1e-12);
  for (std::size_t i = 1; i < r.energy_history.size(); ++i) {
    EXPECT_LE(r.energy_history[i], r.energy_history[i - 1] * (1.0 + 1e-12));
  }
}

TEST(GroundState, OddSeedFindsFirstExcitedState) {
  const auto g = make_grid(64, 8, 8, {24e-6, 8e-6, 8e-6}, {-12e-6, -4e-6, -4e-6});
  const double w = phys::two_pi * 1e3;
  RealField v(g.size());
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    const double x = g.coord(0, ix) + 0.5 * g.spacing(0);
    for (std::size_t iy = 0; iy < 8; ++iy)
      for (std::size_t iz = 0; iz < 8; ++iz) v[g.index(ix, iy, iz)] = 0.5 * kMass * w * w * x * x;
  }
  Wavefunction seed(g);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    const double x = g.coord(0, ix) + 0.5 * g.spacing(0);
    for (std::size_t iy = 0; iy < 8; ++iy)
      for (std::size_t iz = 0; iz < 8; ++iz) seed.at(ix, iy, iz) = x * std::exp(-x * x / 8e-12);
  }
  GroundStateOptions opt;
  opt.tau = 1e-6;
  opt.tol = 1e-9;
  const auto r = ground_state_imaginary(g, v, kMass, seed, opt);
  EXPECT_NEAR(r.energy / (1.5 * phys::hbar * w), 1.0, 1e-3);
}

TEST(GroundState, Errors) {
  const auto g = make_grid(16, 16, 16, {1e-5, 1e-5, 1e-5});
  Wavefunction seed(g);
  GroundStateOptions opt;
  opt.tol = 0.0;
  EXPECT_THROW(ground_state_imaginary(g, RealField(g.size(), 0.0), kMass, seed, opt), InvalidArgument);
  opt.tol = 1e-14;
  opt.max_steps = 200;
  auto s = gaussian_packet(g, {5e-6, 5e-6, 5e-6}, {0.6e-6, 0.6e-6, 0.6e-6});
  EXPECT_THROW(ground_state_imaginary(g, harmonic(g, {1e3, 1e3, 1e3}, {5e-6, 5e-6, 5e-6}), kMass, s, opt),
               NonConvergence);
}
