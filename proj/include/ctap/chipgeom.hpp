#pragma once

// Three-wire atom-chip geometry. Wires lie in the chip plane y = 0 and run
// along +z; the outer wires bow towards the straight middle wire with a
// raised-cosine bump of compact support.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ctap/constants.hpp"
#include "ctap/errors.hpp"
#include "ctap/vec3.hpp"

namespace ctap::chip {

enum class WireId { left = 0, middle = 1, right = 2 };
enum class Ordering { counter_intuitive, intuitive };

inline const char* to_string(WireId id) {
  switch (id) {
    case WireId::left: return "left";
    case WireId::middle: return "middle";
    case WireId::right: return "right";
  }
  return "?";
}

inline const char* to_string(Ordering o) {
  return o == Ordering::counter_intuitive ? "counter_intuitive" : "intuitive";
}

// x(z) = side * [d0 - (d0 - d_min) * (1 + cos(pi (z - center) / half_width)) / 2]
// inside the bump, side * d0 outside. side = 0 gives the straight middle wire.
struct Centerline {
  double side = 0.0;
  double d0 = 0.0;
  double d_min = 0.0;
  double center = 0.0;
  double half_width = 1.0;

  double offset(double z) const {
    const double u = z - center;
    if (std::abs(u) >= half_width) return side * d0;
    const double bump = 0.5 * (1.0 + std::cos(phys::pi * u / half_width));
    return side * (d0 - (d0 - d_min) * bump);
  }

  double slope(double z) const {
    const double u = z - center;
    if (std::abs(u) >= half_width) return 0.0;
    return side * (d0 - d_min) * 0.5 * (phys::pi / half_width) *
           std::sin(phys::pi * u / half_width);
  }

  double curvature(double z) const {
    const double u = z - center;
    if (std::abs(u) >= half_width) return 0.0;
    const double k = phys::pi / half_width;
    return side * (d0 - d_min) * 0.5 * k * k * std::cos(k * u);
  }

  // Largest |x''| on the bump.
  double max_curvature() const {
    return std::abs(side) * (d0 - d_min) * 0.5 * (phys::pi / half_width) * (phys::pi / half_width);
  }
};

struct Segment {
  Vec3 a;
  Vec3 b;
  double current = 0.0;  // A, flowing a -> b
};

struct WirePath {
  double current = 0.0;  // A, along +z
  Centerline centerline;
  double z_begin = 0.0;  // m, includes padding
  double z_end = 0.0;
  double segment_length = 0.5e-6;

  double x(double z) const { return centerline.offset(z); }
};

struct ChipLayout {
  std::array<WirePath, 3> wires;
  double d0 = 7e-6;
  double d_min = 4.3e-6;
  double straight_run = 50e-6;
  double xi = 50e-6;
  double bump_half_width = 300e-6;
  double z_pad = 500e-6;
  double segment_length = 0.5e-6;
  Ordering ordering = Ordering::counter_intuitive;
  double x_span = 20e-6;
  double y_span = 4e-6;
  double z_max = 1000e-6;
  Vec3 bias_direction{1.0, 0.0, 0.0};
  double bias_field = 0.014;   // T
  double ioffe_field = 0.030;  // T, along z
  double omega_z = phys::two_pi * 5.0;
  double mass = phys::lithium6_mass;
  double mu_eff = 0.0;  // J/T

  const WirePath& wire(WireId id) const { return wires[static_cast<std::size_t>(id)]; }
  WirePath& wire(WireId id) { return wires[static_cast<std::size_t>(id)]; }
  double z_center() const { return 0.5 * z_max; }

  void validate() const {
    if (!(d_min > 0.0) || !(d_min < d0)) throw InvalidArgument("layout requires 0 < d_min < d0");
    if (!(straight_run >= 0.0) || !(straight_run < 0.5 * z_max)) {
      throw InvalidArgument("layout requires straight_run < z_max / 2");
    }
    if (!(bump_half_width > 0.0)) throw InvalidArgument("bump half-width must be positive");
    if (!(segment_length > 0.0)) throw InvalidArgument("segment_length must be positive");
    if (!(z_pad >= 0.0) || !(z_max > 0.0)) throw InvalidArgument("invalid chip extents");
    if (!(bias_field >= 0.0) || !(mu_eff >= 0.0) || !(mass > 0.0)) {
      throw InvalidArgument("invalid field, moment or mass");
    }
    if (wire(WireId::middle).centerline.side != 0.0) {
      throw InvalidArgument("middle wire must be straight");
    }
  }
};

// g_F m_F = 1/2 weak-field seeker.
inline constexpr double physical_moment = 0.5 * phys::bohr_magneton;

// Effective moment of the simulated guides. Scaled so the isolated-guide
// transverse frequency is 5 kHz (period 0.2 ms) at the standard currents and
// fields; see README for the derivation.
inline constexpr double default_moment = 3.3e-4 * phys::bohr_magneton;

// Rebuilds the three wire paths from the scalar geometry fields. Call after
// editing any of them.
inline void rebuild_wires(ChipLayout& c, double i_left, double i_middle, double i_right) {
  const double zc = c.z_center();
  // The delayed wire keeps its straight section xi longer.
  const double early = zc - 0.5 * c.xi;
  const double late = zc + 0.5 * c.xi;
  const double left_center = c.ordering == Ordering::counter_intuitive ? late : early;
  const double right_center = c.ordering == Ordering::counter_intuitive ? early : late;
  auto make = [&](double side, double center, double current) {
    WirePath w;
    w.current = current;
    w.centerline = {side, side == 0.0 ? 0.0 : c.d0, side == 0.0 ? 0.0 : c.d_min, center,
                    c.bump_half_width};
    w.z_begin = -c.z_pad;
    w.z_end = c.z_max + c.z_pad;
    w.segment_length = c.segment_length;
    return w;
  };
  c.wires = {make(-1.0, left_center, i_left), make(0.0, zc, i_middle),
             make(1.0, right_center, i_right)};
}

inline void set_currents(ChipLayout& c, double i_left, double i_middle, double i_right) {
  rebuild_wires(c, i_left, i_middle, i_right);
}

// Geometry of the reference chip: 20 um x 1000 um box, 4 um tall, wires 7 um
// apart closing to 4.3 um, I_L = I_R = 0.1 A, I_M = 0.07 A, B_b = 0.014 T,
// B_ip = 0.03 T, omega_z = 2 pi 5 Hz, lithium-6.
inline ChipLayout standard_layout(Ordering ordering) {
  ChipLayout c;
  c.ordering = ordering;
  c.mu_eff = default_moment;
  rebuild_wires(c, 0.1, 0.07, 0.1);
  c.validate();
  return c;
}

inline double wire_offset(const ChipLayout& c, WireId id, double z) {
  const auto i = static_cast<int>(id);
  if (i < 0 || i > 2) throw InvalidArgument("unknown wire id " + std::to_string(i));
  return c.wires[static_cast<std::size_t>(i)].x(z);
}

inline double wire_offset(const ChipLayout& c, int wire_index, double z) {
  if (wire_index < 0 || wire_index > 2) {
    throw InvalidArgument("unknown wire id " + std::to_string(wire_index));
  }
  return wire_offset(c, static_cast<WireId>(wire_index), z);
}

// Uniform steps in z of at most segment_length; consecutive segments share
// endpoints. Vertices are shifted by -h^2 x''/12 so each chord has the same
// mean offset as the arc it replaces.
inline std::vector<Segment> discretize(const WirePath& w) {
  if (!(w.segment_length > 0.0)) throw InvalidArgument("segment_length must be positive");
  if (!(w.z_end > w.z_begin)) throw InvalidArgument("wire must have positive length");
  const double span = w.z_end - w.z_begin;
  const auto n = static_cast<std::size_t>(std::ceil(span / w.segment_length - 1e-9));
  const double h = span / static_cast<double>(n);
  std::vector<Segment> segs;
  segs.reserve(n);
  auto vertex = [&](double z) {
    return Vec3{w.x(z) - h * h * w.centerline.curvature(z) / 12.0, 0.0, z};
  };
  Vec3 prev = vertex(w.z_begin);
  for (std::size_t i = 1; i <= n; ++i) {
    const double z = i == n ? w.z_end : w.z_begin + static_cast<double>(i) * h;
    const Vec3 next = vertex(z);
    segs.push_back({prev, next, w.current});
    prev = next;
  }
  return segs;
}

inline std::vector<Segment> discretize(const ChipLayout& c) {
  std::vector<Segment> all;
  for (const auto& w : c.wires) {
    auto s = discretize(w);
    all.insert(all.end(), s.begin(), s.end());
  }
  return all;
}

}  // namespace ctap::chip
