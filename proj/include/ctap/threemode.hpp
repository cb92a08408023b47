#pragma once

// Three-level tunnelling model |L>, |M>, |R> with nearest-neighbour couplings.
// Energies are in units of hbar (hbar = 1); rates are angular frequencies.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <cstddef>
#include <string>
#include <vector>

#include "ctap/errors.hpp"

namespace ctap::threemode {

using cplx = std::complex<double>;
using Matrix3 = std::array<std::array<double, 3>, 3>;

struct ThreeModeHamiltonian {
  double j_lm = 0.0;
  double j_mr = 0.0;

  void validate() const {
    if (!(j_lm >= 0.0) || !(j_mr >= 0.0)) {
      throw InvalidArgument("tunnelling rates must be non-negative");
    }
  }

  // Real symmetric, zero diagonal, -J off the diagonal.
  Matrix3 matrix() const {
    return {{{0.0, -j_lm, 0.0}, {-j_lm, 0.0, -j_mr}, {0.0, -j_mr, 0.0}}};
  }
};

struct ThreeModeState {
  std::array<cplx, 3> amplitudes{cplx{1.0, 0.0}, cplx{}, cplx{}};

  static ThreeModeState left() { return {}; }
  static ThreeModeState right() { return {{cplx{}, cplx{}, cplx{1.0, 0.0}}}; }

  double population(std::size_t i) const { return std::norm(amplitudes[i]); }
  double norm() const { return population(0) + population(1) + population(2); }
};

enum class PulseShape { gaussian, sin_squared };

// Pair of coupling pulses J_LM(t), J_MR(t) on [0, total_time].
// gaussian: width is the standard deviation. sin_squared: width is the FWHM;
// the pulse is peak * sin^2 on a support of length 2 * width.
struct PulsePair {
  PulseShape shape = PulseShape::gaussian;
  double peak = 0.0;
  double width = 0.0;
  double center_lm = 0.0;
  double center_mr = 0.0;
  double total_time = 1.0;

  // Defaults keep both pulses below 1e-12 of peak at the window edges.
  static constexpr double default_width_fraction = 1.0 / 18.0;
  static constexpr double default_separation_fraction = 1.0 / 14.0;

  static PulsePair counter_intuitive(double peak, double total_time,
                                     PulseShape shape = PulseShape::gaussian,
                                     double width_fraction = default_width_fraction,
                                     double separation_fraction = default_separation_fraction) {
    const double mid = 0.5 * total_time;
    const double half_sep = 0.5 * separation_fraction * total_time;
    return {shape, peak, width_fraction * total_time, mid + half_sep, mid - half_sep,
            total_time};
  }

  static PulsePair intuitive(double peak, double total_time,
                             PulseShape shape = PulseShape::gaussian,
                             double width_fraction = default_width_fraction,
                             double separation_fraction = default_separation_fraction) {
    auto p = counter_intuitive(peak, total_time, shape, width_fraction, separation_fraction);
    std::swap(p.center_lm, p.center_mr);
    return p;
  }

  // J_MR ramps before J_LM.
  bool is_counter_intuitive() const { return center_mr < center_lm; }

  void validate() const {
    if (!(peak >= 0.0) || !(width > 0.0) || !(total_time > 0.0)) {
      throw InvalidArgument("pulse peak must be >= 0, width and total_time > 0");
    }
  }

  double j_lm(double t) const { return envelope(t, center_lm); }
  double j_mr(double t) const { return envelope(t, center_mr); }

  ThreeModeHamiltonian at(double t) const { return {j_lm(t), j_mr(t)}; }

  // Largest pulse value at either window edge, relative to peak.
  double edge_leakage() const {
    if (peak == 0.0) return 0.0;
    return std::max({j_lm(0.0), j_mr(0.0), j_lm(total_time), j_mr(total_time)}) / peak;
  }

 private:
  double envelope(double t, double center) const {
    const double u = t - center;
    switch (shape) {
      case PulseShape::gaussian:
        return peak * std::exp(-0.5 * u * u / (width * width));
      case PulseShape::sin_squared: {
        if (std::abs(u) >= width) return 0.0;
        const double s = std::sin(0.5 * std::numbers::pi * (u + width) / width);
        return peak * s * s;
      }
    }
    return 0.0;
  }
};

// Zero-energy eigenstate cos(theta)|L> - sin(theta)|R>, tan(theta) = J_LM / J_MR.
inline ThreeModeState dark_state(double j_lm, double j_mr) {
  ThreeModeHamiltonian{j_lm, j_mr}.validate();
  if (j_lm == 0.0 && j_mr == 0.0) {
    throw DegenerateAngle("mixing angle undefined for J_LM = J_MR = 0");
  }
  const double theta = std::atan2(j_lm, j_mr);
  return {{cplx{std::cos(theta), 0.0}, cplx{}, cplx{-std::sin(theta), 0.0}}};
}

inline double mixing_angle(double j_lm, double j_mr) {
  if (j_lm == 0.0 && j_mr == 0.0) {
    throw DegenerateAngle("mixing angle undefined for J_LM = J_MR = 0");
  }
  return std::atan2(j_lm, j_mr);
}

struct EigenPair {
  double value;
  std::array<double, 3> vector;
};

// Closed-form spectrum {-E, 0, +E}, E = sqrt(J_LM^2 + J_MR^2), ascending.
inline std::array<EigenPair, 3> eigensystem(const ThreeModeHamiltonian& h) {
  h.validate();
  const double a = h.j_lm;
  const double b = h.j_mr;
  const double e = std::hypot(a, b);
  if (e == 0.0) {
    return {{{0.0, {1.0, 0.0, 0.0}}, {0.0, {0.0, 1.0, 0.0}}, {0.0, {0.0, 0.0, 1.0}}}};
  }
  const double r = 1.0 / std::sqrt(2.0);
  // For lambda = +-E: v = (-a/lambda, 1, -b/lambda) / sqrt(2).
  return {{{-e, {r * a / e, r, r * b / e}},
           {0.0, {b / e, 0.0, -a / e}},
           {e, {-r * a / e, r, -r * b / e}}}};
}

// Returns H * v for the real symmetric coupling matrix.
inline std::array<cplx, 3> apply_hamiltonian(const ThreeModeHamiltonian& h, const std::array<cplx, 3>& v) {
  return {-h.j_lm * v[1], -h.j_lm * v[0] - h.j_mr * v[2], -h.j_mr * v[1]};
}

struct Sample {
  double t;
  ThreeModeState state;
};

struct EvolveResult {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;

  const ThreeModeState& final_state() const { return samples.back().state; }
  double max_population(std::size_t i) const {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, s.state.population(i));
    return m;
  }
};

// Fixed-step classical RK4 over [0, total_time]. A negative dt integrates the
// same pulses backwards from total_time to 0.
inline EvolveResult evolve(const PulsePair& pulses, const ThreeModeState& initial, double dt,
                           std::size_t record_stride = 1) {
  pulses.validate();
  if (dt == 0.0 || !std::isfinite(dt)) throw InvalidArgument("dt must be finite and non-zero");
  if (std::abs(initial.norm() - 1.0) > 1e-10) {
    throw InvalidArgument("initial three-mode state is not normalized");
  }
  record_stride = std::max<std::size_t>(1, record_stride);

  EvolveResult out;
  const double t_total = pulses.total_time;
  const auto n_steps = std::max<long long>(1, std::llround(t_total / std::abs(dt)));
  const double h = std::copysign(t_total / static_cast<double>(n_steps), dt);
  if (std::abs(h) * pulses.peak > 0.05) {
    out.warnings.push_back("dt does not resolve the pulses: |dt| * peak = " +
                           std::to_string(std::abs(h) * pulses.peak) + " > 0.05");
  }

  auto rhs = [&](double t, const std::array<cplx, 3>& a) {
    auto ha = apply_hamiltonian(pulses.at(t), a);
    for (auto& c : ha) c *= cplx{0.0, -1.0};
    return ha;
  };
  auto axpy = [](const std::array<cplx, 3>& y, double s, const std::array<cplx, 3>& k) {
    return std::array<cplx, 3>{y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]};
  };

  double t0 = h > 0 ? 0.0 : t_total;
  std::array<cplx, 3> y = initial.amplitudes;
  out.samples.reserve(static_cast<std::size_t>(n_steps) / record_stride + 2);
  out.samples.push_back({t0, {y}});
  for (long long i = 0; i < n_steps; ++i) {
    const double t = t0 + static_cast<double>(i) * h;
    const auto k1 = rhs(t, y);
    const auto k2 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k1));
    const auto k3 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k2));
    const auto k4 = rhs(t + h, axpy(y, h, k3));
    for (int c = 0; c < 3; ++c) y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    const bool last = i + 1 == n_steps;
    if (last || (static_cast<std::size_t>(i + 1) % record_stride) == 0) {
      out.samples.push_back({last ? (h > 0 ? t_total : 0.0) : t0 + static_cast<double>(i + 1) * h,
                             {y}});
    }
  }
  return out;
}

}  // namespace ctap::threemode
