#pragma once

// Guide populations, y-integrated density maps and the boundary monitor.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

#include "ctap/errors.hpp"
#include "ctap/magfield.hpp"
#include "ctap/parallel.hpp"
#include "ctap/qgrid.hpp"

namespace ctap::obs {

// Per z index: x < x_b1 is L, x_b1 <= x < x_b2 is M, the rest is R.
struct GuidePartition {
  SimGrid grid;
  std::vector<double> x_b1;
  std::vector<double> x_b2;
  std::vector<bool> fallback;

  int region(std::size_t ix, std::size_t iz) const {
    const double x = grid.coord(0, ix);
    return x < x_b1[iz] ? 0 : (x < x_b2[iz] ? 1 : 2);
  }
  std::size_t fallback_count() const {
    return static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), true));
  }
};

namespace detail {

// Position of the highest point of min_y V(x) between columns a < b.
inline double ridge(const field::PotentialGrid& p, std::size_t iz, std::size_t a, std::size_t b) {
  const auto& g = p.grid;
  std::vector<double> low(g.n[0], std::numeric_limits<double>::infinity());
  for (std::size_t ix = a; ix <= b; ++ix) {
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) low[ix] = std::min(low[ix], p.at(ix, iy, iz));
  }
  std::size_t best = a;
  for (std::size_t ix = a; ix <= b; ++ix) {
    if (low[ix] > low[best]) best = ix;
  }
  double shift = 0.0;
  if (best > a && best < b) {
    const double curv = low[best - 1] - 2.0 * low[best] + low[best + 1];
    if (curv < 0.0) shift = std::clamp(0.5 * (low[best - 1] - low[best + 1]) / curv, -0.5, 0.5);
  }
  return g.coord(0, best) + shift * g.spacing(0);
}

}  // namespace detail

// Saddle-ridge boundaries between adjacent minima; wire midpoints where the
// slice has fewer than three guides.
inline GuidePartition build_partition(const field::PotentialGrid& p) {
  const auto& g = p.grid;
  if (p.minima.size() != g.n[2]) throw InvalidArgument("potential has no minima metadata");
  GuidePartition part{g, std::vector<double>(g.n[2]), std::vector<double>(g.n[2]),
                      std::vector<bool>(g.n[2], false)};
  for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
    const auto& m = p.minima[iz];
    if (m.n_guides == 3) {
      part.x_b1[iz] = detail::ridge(p, iz, m.guide[0]->ix, m.guide[1]->ix);
      part.x_b2[iz] = detail::ridge(p, iz, m.guide[1]->ix, m.guide[2]->ix);
    } else {
      const auto& w = p.wire_x.at(iz);
      part.x_b1[iz] = 0.5 * (w[0] + w[1]);
      part.x_b2[iz] = 0.5 * (w[1] + w[2]);
      part.fallback[iz] = true;
    }
  }
  return part;
}

struct Populations {
  double p_l = 0.0;
  double p_m = 0.0;
  double p_r = 0.0;
  double sum() const { return p_l + p_m + p_r; }
};

inline Populations populations(const Wavefunction& psi, const GuidePartition& part,
                               ThreadPool* pool = nullptr) {
  const auto& g = psi.grid;
  if (!(g == part.grid)) throw GridMismatch("partition and wavefunction grids differ");
  std::array<std::vector<double>, 3> partial;
  for (auto& v : partial) v.assign(g.n[0], 0.0);
  auto body = [&](std::size_t b, std::size_t e) {
    for (std::size_t ix = b; ix < e; ++ix) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
        const cplx* row = &psi.at(ix, iy, 0);
        for (std::size_t iz = 0; iz < g.n[2]; ++iz) acc[part.region(ix, iz)] += std::norm(row[iz]);
      }
      for (int r = 0; r < 3; ++r) partial[r][ix] = acc[r];
    }
  };
  if (pool) {
    pool->parallel_for(g.n[0], body);
  } else {
    body(0, g.n[0]);
  }
  const double dv = g.cell_volume();
  return {pairwise_sum(partial[0]) * dv, pairwise_sum(partial[1]) * dv,
          pairwise_sum(partial[2]) * dv};
}

// |psi|^2 integrated over y; index ix * nz + iz.
inline RealField density_xz(const Wavefunction& psi) {
  const auto& g = psi.grid;
  RealField map(g.n[0] * g.n[2], 0.0);
  const double dy = g.spacing(1);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      const cplx* row = &psi.at(ix, iy, 0);
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) map[ix * g.n[2] + iz] += std::norm(row[iz]) * dy;
    }
  }
  return map;
}

// Grid of a density_xz map: the y axis collapses to one point.
inline SimGrid density_grid(const SimGrid& g) {
  SimGrid d = g;
  d.n[1] = 1;
  d.extent[1] = g.spacing(1);
  return d;
}

// Weights of a density_xz map in the L, M, R regions.
inline Populations map_weights(const RealField& map, const GuidePartition& part) {
  const auto& g = part.grid;
  if (map.size() != g.n[0] * g.n[2]) throw GridMismatch("density map does not match partition");
  std::array<std::vector<double>, 3> partial;
  for (auto& v : partial) v.assign(g.n[0], 0.0);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
      partial[part.region(ix, iz)][ix] += map[ix * g.n[2] + iz];
    }
  }
  const double da = g.spacing(0) * g.spacing(2);
  return {pairwise_sum(partial[0]) * da, pairwise_sum(partial[1]) * da,
          pairwise_sum(partial[2]) * da};
}

// Probability within margin_cells of the faces of the periodic box normal to
// the selected axes. Axes with fewer than 2 * margin_cells + 1 points are
// ignored.
inline double edge_density(const Wavefunction& psi, std::size_t margin_cells,
                           ThreadPool* pool = nullptr,
                           std::array<bool, 3> axes = {true, true, true}) {
  if (margin_cells < 1) throw InvalidArgument("edge margin must be at least one cell");
  const auto& g = psi.grid;
  auto near = [&](int a, std::size_t i) {
    if (!axes[a] || g.n[a] < 2 * margin_cells + 1) return false;
    return i < margin_cells || i >= g.n[a] - margin_cells;
  };
  return slab_reduce(g, pool, [&](std::size_t ix) {
    double acc = 0.0;
    const bool ex = near(0, ix);
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      const bool exy = ex || near(1, iy);
      const cplx* row = &psi.at(ix, iy, 0);
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        if (exy || near(2, iz)) acc += std::norm(row[iz]);
      }
    }
    return acc;
  }) * g.cell_volume();
}

struct TraceRow {
  double t = 0.0;
  double p_l = 0.0;
  double p_m = 0.0;
  double p_r = 0.0;
  double norm = 0.0;
  double edge = 0.0;
};

struct PopulationTrace {
  std::vector<TraceRow> rows;

  double max_p_m() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, r.p_m);
    return m;
  }
};

inline double transfer_fidelity(const PopulationTrace& trace) {
  if (trace.rows.empty()) throw InvalidArgument("empty population trace");
  return trace.rows.back().p_r;
}

inline void write_trace_csv(const PopulationTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "t,p_l,p_m,p_r,norm,edge\n" << std::setprecision(17);
  for (const auto& r : trace.rows) {
    out << r.t << ',' << r.p_l << ',' << r.p_m << ',' << r.p_r << ',' << r.norm << ',' << r.edge
        << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

}  // namespace ctap::obs
