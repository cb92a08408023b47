#pragma once

// Wire fields by the closed-form finite-segment Biot-Savart law, the trapping
// potential mu_eff |B| + V_z on a grid, and per-slice guide minima.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ctap/chipgeom.hpp"
#include "ctap/constants.hpp"
#include "ctap/errors.hpp"
#include "ctap/parallel.hpp"
#include "ctap/qgrid.hpp"
#include "ctap/vec3.hpp"

namespace ctap::field {

using chip::Segment;

struct FieldPoint {
  Vec3 b;  // T
};

// Field of a straight segment carrying current from s.a to s.b.
inline Vec3 segment_field(const Segment& s, const Vec3& p) {
  const Vec3 l = s.b - s.a;
  const Vec3 a = p - s.a;
  const Vec3 b = p - s.b;
  const Vec3 c = cross(l, a);
  const double c2 = dot(c, c);
  if (c2 == 0.0) return {};
  const double f = phys::mu0 * s.current / (4.0 * phys::pi) *
                   (dot(l, a) / length(a) - dot(l, b) / length(b)) / c2;
  return c * f;
}

inline double distance_to_segment(const Segment& s, const Vec3& p) {
  const Vec3 l = s.b - s.a;
  const double l2 = dot(l, l);
  double t = l2 > 0.0 ? dot(p - s.a, l) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return length(p - (s.a + l * t));
}

// Sum of exact segment fields. Throws ProximityError when p is within guard
// of any segment.
inline FieldPoint biot_savart(std::span<const Segment> segments, const Vec3& p, double guard) {
  Vec3 sum;
  for (const auto& s : segments) {
    if (distance_to_segment(s, p) <= guard) {
      std::ostringstream msg;
      msg << "field point (" << p.x << ", " << p.y << ", " << p.z
          << ") lies within " << guard << " m of a wire";
      throw ProximityError(msg.str());
    }
    sum += segment_field(s, p);
  }
  return {sum};
}

// mu0 I / (2 pi B_b): height of the side-guide zero above a straight wire.
inline double trap_height(double current, double bias) {
  if (!(bias > 0.0)) throw InvalidArgument("trap_height requires a positive bias field");
  return phys::mu0 * current / (phys::two_pi * bias);
}

// Joins consecutive collinear segments with equal current. The field of the
// union is identical, only cheaper.
inline std::vector<Segment> coalesce(std::span<const Segment> segs) {
  std::vector<Segment> out;
  for (const auto& s : segs) {
    if (!out.empty()) {
      auto& last = out.back();
      const Vec3 l1 = last.b - last.a;
      const Vec3 l2 = s.b - s.a;
      const Vec3 c = cross(l1, l2);
      if (last.current == s.current && last.b == s.a && dot(c, c) == 0.0 && dot(l1, l2) > 0.0) {
        last.b = s.b;
        continue;
      }
    }
    out.push_back(s);
  }
  return out;
}

class FieldModel {
 public:
  FieldModel() = default;
  FieldModel(std::vector<Segment> segments, Vec3 uniform, double guard)
      : segments_(coalesce(segments)), uniform_(uniform), guard_(guard) {}

  static FieldModel from_layout(const chip::ChipLayout& c) {
    std::vector<Segment> all;
    for (const auto& w : c.wires) {
      if (w.current == 0.0) continue;
      auto s = chip::discretize(w);
      all.insert(all.end(), s.begin(), s.end());
    }
    const Vec3 bias = c.bias_direction * (c.bias_field / length(c.bias_direction));
    return FieldModel(std::move(all), bias + Vec3{0.0, 0.0, c.ioffe_field}, c.segment_length);
  }

  const std::vector<Segment>& segments() const { return segments_; }
  const Vec3& uniform() const { return uniform_; }
  double guard() const { return guard_; }

  Vec3 wires(const Vec3& p) const {
    Vec3 sum;
    for (const auto& s : segments_) sum += segment_field(s, p);
    return sum;
  }
  Vec3 total(const Vec3& p) const { return wires(p) + uniform_; }
  Vec3 checked_total(const Vec3& p) const {
    return biot_savart(segments_, p, guard_).b + uniform_;
  }

  // Smallest distance from p to any segment.
  double clearance(const Vec3& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : segments_) d = std::min(d, distance_to_segment(s, p));
    return d;
  }

 private:
  std::vector<Segment> segments_;
  Vec3 uniform_;
  double guard_ = 0.0;
};

struct TransverseMinimum {
  double x = 0.0;      // m, sub-cell refined
  double y = 0.0;
  double value = 0.0;  // J
  std::size_t ix = 0;  // grid point of the discrete minimum
  std::size_t iy = 0;
};

struct SliceMinima {
  std::array<std::optional<TransverseMinimum>, 3> guide;  // L, M, R
  int n_guides = 0;

  bool merged() const { return n_guides < 3; }
  const std::optional<TransverseMinimum>& operator[](chip::WireId id) const {
    return guide[static_cast<std::size_t>(id)];
  }
};

// Potential in joules on a grid, with minima metadata per z index.
struct PotentialGrid {
  SimGrid grid;
  RealField values;
  double mass = phys::lithium6_mass;
  std::vector<SliceMinima> minima;
  std::vector<std::array<double, 3>> wire_x;  // per z index, m

  double at(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return values[grid.index(ix, iy, iz)];
  }
  double min_value() const { return *std::min_element(values.begin(), values.end()); }
};

namespace detail {

// Discrete strict local minima of slice iz, interior points only.
inline std::vector<TransverseMinimum> slice_local_minima(const PotentialGrid& p, std::size_t iz) {
  const auto& g = p.grid;
  std::vector<TransverseMinimum> found;
  if (g.n[0] < 3 || g.n[1] < 3) return found;
  const double dx = g.spacing(0);
  const double dy = g.spacing(1);
  for (std::size_t ix = 1; ix + 1 < g.n[0]; ++ix) {
    for (std::size_t iy = 1; iy + 1 < g.n[1]; ++iy) {
      const double v0 = p.at(ix, iy, iz);
      bool is_min = true;
      for (int ddx = -1; ddx <= 1 && is_min; ++ddx) {
        for (int ddy = -1; ddy <= 1; ++ddy) {
          if (ddx == 0 && ddy == 0) continue;
          // Ties go to the lower index so a symmetric pair yields one minimum.
          const double nb = p.at(ix + ddx, iy + ddy, iz);
          const bool later = ddx > 0 || (ddx == 0 && ddy > 0);
          if (later ? !(v0 <= nb) : !(v0 < nb)) {
            is_min = false;
            break;
          }
        }
      }
      if (!is_min) continue;
      auto refine = [](double vm, double v, double vp, double& shift) {
        const double curv = vm - 2.0 * v + vp;
        if (!(curv > 0.0)) {
          shift = 0.0;
          return 0.0;
        }
        shift = std::clamp(0.5 * (vm - vp) / curv, -0.5, 0.5);
        return -0.125 * (vm - vp) * (vm - vp) / curv;
      };
      double sx = 0.0;
      double sy = 0.0;
      const double ex = refine(p.at(ix - 1, iy, iz), v0, p.at(ix + 1, iy, iz), sx);
      const double ey = refine(p.at(ix, iy - 1, iz), v0, p.at(ix, iy + 1, iz), sy);
      found.push_back({g.coord(0, ix) + sx * dx, g.coord(1, iy) + sy * dy, v0 + ex + ey, ix, iy});
    }
  }
  return found;
}

inline SliceMinima label_minima(std::vector<TransverseMinimum> found,
                                const std::array<double, 3>& wire_x) {
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.value < b.value; });
  if (found.size() > 3) found.resize(3);
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
  SliceMinima s;
  s.n_guides = static_cast<int>(found.size());
  if (found.size() == 3) {
    for (std::size_t i = 0; i < 3; ++i) s.guide[i] = found[i];
    return s;
  }
  for (const auto& m : found) {
    std::size_t best = 0;
    for (std::size_t w = 1; w < 3; ++w) {
      if (std::abs(m.x - wire_x[w]) < std::abs(m.x - wire_x[best])) best = w;
    }
    if (!s.guide[best] || s.guide[best]->value > m.value) s.guide[best] = m;
  }
  return s;
}

}  // namespace detail

// Fills p.minima from p.values. wire_x defaults to the box sixths when empty.
inline void find_minima(PotentialGrid& p, ThreadPool* pool = nullptr) {
  const auto& g = p.grid;
  if (p.wire_x.size() != g.n[2]) {
    const double lo = g.origin[0];
    const double len = g.extent[0];
    p.wire_x.assign(g.n[2], {lo + len / 6.0, lo + len / 2.0, lo + 5.0 * len / 6.0});
  }
  p.minima.assign(g.n[2], {});
  auto body = [&](std::size_t b, std::size_t e) {
    for (std::size_t iz = b; iz < e; ++iz) {
      p.minima[iz] = detail::label_minima(detail::slice_local_minima(p, iz), p.wire_x[iz]);
    }
  };
  if (pool) {
    pool->parallel_for(g.n[2], body);
  } else {
    body(0, g.n[2]);
  }
}

// Wraps externally computed values (e.g. an analytic test potential).
inline PotentialGrid make_potential(const SimGrid& g, RealField values, double mass,
                                    std::vector<std::array<double, 3>> wire_x = {}) {
  if (values.size() != g.size()) throw GridMismatch("potential values do not match the grid");
  PotentialGrid p{g, std::move(values), mass, {}, std::move(wire_x)};
  find_minima(p);
  return p;
}

// V = mu_eff |B_wires + B_bias + B_ip z| + m omega_z^2 (z - z_max/2)^2 / 2,
// evaluated in parallel over z slices.
inline PotentialGrid assemble_potential(const chip::ChipLayout& c, const SimGrid& g,
                                        ThreadPool* pool = nullptr) {
  c.validate();
  const FieldModel model = FieldModel::from_layout(c);
  // All wires lie in y = 0, so a grid wholly above the guard needs no per-point check.
  const bool needs_check = std::min(std::abs(g.origin[1]),
                                    std::abs(g.origin[1] + g.extent[1] - g.spacing(1))) <=
                               model.guard() ||
                           (g.origin[1] < 0.0 && g.origin[1] + g.extent[1] > 0.0);
  PotentialGrid p;
  p.grid = g;
  p.mass = c.mass;
  p.values.assign(g.size(), 0.0);
  p.wire_x.resize(g.n[2]);
  const double zc = c.z_center();
  auto body = [&](std::size_t b, std::size_t e) {
    for (std::size_t iz = b; iz < e; ++iz) {
      const double z = g.coord(2, iz);
      const double vz = 0.5 * c.mass * c.omega_z * c.omega_z * (z - zc) * (z - zc);
      for (std::size_t w = 0; w < 3; ++w) p.wire_x[iz][w] = c.wires[w].x(z);
      for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
        for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
          const Vec3 r{g.coord(0, ix), g.coord(1, iy), z};
          const Vec3 bf = needs_check ? model.checked_total(r) : model.total(r);
          p.values[g.index(ix, iy, iz)] = c.mu_eff * length(bf) + vz;
        }
      }
    }
  };
  if (pool) {
    pool->parallel_for(g.n[2], body);
  } else {
    body(0, g.n[2]);
  }
  find_minima(p, pool);
  return p;
}

struct TransverseSpectrum {
  double ground = 0.0;     // J, includes the potential at the minimum
  double excited = 0.0;    // J, first transverse excitation
  double omega_1 = 0.0;    // rad/s, principal frequencies, omega_1 <= omega_2
  double omega_2 = 0.0;
  double v_min = 0.0;
};

// Harmonic estimate from the 3-point Hessian of V at the guide's discrete
// minimum.
inline TransverseSpectrum transverse_spectrum(const PotentialGrid& p, std::size_t iz,
                                              chip::WireId guide) {
  if (iz >= p.minima.size()) throw InvalidArgument("z index outside the potential grid");
  const auto& m = p.minima[iz][guide];
  if (!m) {
    throw MinimumAbsent(std::string("no ") + chip::to_string(guide) +
                        " guide minimum in slice " + std::to_string(iz));
  }
  const auto& g = p.grid;
  const std::size_t ix = m->ix;
  const std::size_t iy = m->iy;
  const double dx = g.spacing(0);
  const double dy = g.spacing(1);
  const double vxx = (p.at(ix + 1, iy, iz) - 2.0 * p.at(ix, iy, iz) + p.at(ix - 1, iy, iz)) / (dx * dx);
  const double vyy = (p.at(ix, iy + 1, iz) - 2.0 * p.at(ix, iy, iz) + p.at(ix, iy - 1, iz)) / (dy * dy);
  const double vxy = (p.at(ix + 1, iy + 1, iz) - p.at(ix + 1, iy - 1, iz) -
                      p.at(ix - 1, iy + 1, iz) + p.at(ix - 1, iy - 1, iz)) /
                     (4.0 * dx * dy);
  const double tr = 0.5 * (vxx + vyy);
  const double disc = std::sqrt(0.25 * (vxx - vyy) * (vxx - vyy) + vxy * vxy);
  const double k1 = tr - disc;
  const double k2 = tr + disc;
  if (!(k1 > 0.0)) throw MinimumAbsent("Hessian at the guide minimum is not positive definite");
  TransverseSpectrum s;
  s.omega_1 = std::sqrt(k1 / p.mass);
  s.omega_2 = std::sqrt(k2 / p.mass);
  s.v_min = m->value;
  s.ground = s.v_min + 0.5 * phys::hbar * (s.omega_1 + s.omega_2);
  s.excited = s.ground + phys::hbar * s.omega_1;
  return s;
}

// CSV: z,x_L,y_L,V_L,x_M,y_M,V_M,x_R,y_R,V_R,n_guides. Absent guides are nan.
inline void write_minima_csv(const PotentialGrid& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "z,x_L,y_L,V_L,x_M,y_M,V_M,x_R,y_R,V_R,n_guides\n";
  out << std::setprecision(17);
  for (std::size_t iz = 0; iz < p.minima.size(); ++iz) {
    out << p.grid.coord(2, iz);
    for (const auto& m : p.minima[iz].guide) {
      if (m) {
        out << ',' << m->x << ',' << m->y << ',' << m->value;
      } else {
        out << ",nan,nan,nan";
      }
    }
    out << ',' << p.minima[iz].n_guides << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

}  // namespace ctap::field
