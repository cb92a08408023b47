#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "ctap/observables.hpp"
#include "ctap/qwf.hpp"

using namespace ctap;
using namespace ctap::obs;

namespace {

// Symmetric x coordinates: origin chosen so x_i = -x_{n-1-i}.
SimGrid symmetric_grid(std::size_t nx, std::size_t ny, std::size_t nz) {
  const double lx = 20e-6;
  return SimGrid{{nx, ny, nz}, {lx, 4e-6, 40e-6}, {-0.5 * lx + 0.5 * lx / nx, 0.0, 0.0}};
}

// Three Gaussian wells at x = -7, 0, 7 um, uniform in z.
field::PotentialGrid three_wells(const SimGrid& g) {
  RealField v(g.size());
  const double w = phys::two_pi * 5e3, m = phys::lithium6_mass;
  for (std::size_t ix = 0; ix < g.n[0]; ++ix)
    for (std::size_t iy = 0; iy < g.n[1]; ++iy)
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const double x = g.coord(0, ix), y = g.coord(1, iy) - 2e-6;
        double e = 0.5 * m * w * w * y * y;
        for (double c : {-7e-6, 0.0, 7e-6}) e -= 1e-29 * std::exp(-(x - c) * (x - c) / 2e-12);
        v[g.index(ix, iy, iz)] = e + 1e-28;
      }
  std::vector<std::array<double, 3>> wires(g.n[2], {-7e-6, 0.0, 7e-6});
  return field::make_potential(g, std::move(v), m, wires);
}

Wavefunction random_state(const SimGrid& g, unsigned seed) {
  Wavefunction w(g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  for (auto& c : w.psi) c = {n(rng), n(rng)};
  normalize(w);
  return w;
}

}  // namespace

TEST(Partition, SymmetricWells) {
  const auto g = symmetric_grid(128, 16, 8);
  const auto p = three_wells(g);
  const auto part = build_partition(p);
  EXPECT_EQ(part.fallback_count(), 0u);
  for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
    EXPECT_NEAR(part.x_b1[iz], -3.5e-6, g.spacing(0));
    EXPECT_NEAR(part.x_b2[iz], 3.5e-6, g.spacing(0));
  }
}

TEST(Partition, MergedSliceFallsBack) {
  const auto g = symmetric_grid(64, 16, 8);
  auto p = three_wells(g);
  p.minima[3].guide[0].reset();
  p.minima[3].n_guides = 2;
  p.wire_x[3] = {-5e-6, 0.0, 5e-6};
  const auto part = build_partition(p);
  EXPECT_TRUE(part.fallback[3]);
  EXPECT_EQ(part.fallback_count(), 1u);
  EXPECT_DOUBLE_EQ(part.x_b1[3], -2.5e-6);
  EXPECT_DOUBLE_EQ(part.x_b2[3], 2.5e-6);
}

TEST(Populations, LocalizedAndSymmetric) {
  const auto g = symmetric_grid(128, 16, 16);
  const auto part = build_partition(three_wells(g));
  Wavefunction w(g);
  for (std::size_t ix = 0; ix < 20; ++ix)
    for (std::size_t iy = 0; iy < 16; ++iy)
      for (std::size_t iz = 0; iz < 16; ++iz) w.at(ix, iy, iz) = 1.0;
  normalize(w);
  const auto p = populations(w, part);
  EXPECT_NEAR(p.p_l, 1.0, 1e-12);
  EXPECT_EQ(p.p_m, 0.0);
  EXPECT_EQ(p.p_r, 0.0);

  GuidePartition sym{g, std::vector<double>(16, -3.5e-6), std::vector<double>(16, 3.5e-6),
                     std::vector<bool>(16, false)};
  Wavefunction s(g);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    const double x = g.coord(0, ix);
    for (std::size_t iy = 0; iy < 16; ++iy)
      for (std::size_t iz = 0; iz < 16; ++iz) s.at(ix, iy, iz) = std::exp(-x * x / 5e-11) * (1.0 + iz);
  }
  normalize(s);
  const auto q = populations(s, sym);
  EXPECT_NEAR(q.p_l, q.p_r, 1e-10);
  EXPECT_GT(q.p_l, 0.01);
}

TEST(Populations, SumEqualsNorm) {
  const auto g = symmetric_grid(64, 16, 16);
  const auto part = build_partition(three_wells(g));
  for (unsigned seed : {1u, 2u, 3u}) {
    auto w = random_state(g, seed);
    scale(w, 0.7);
    const auto p = populations(w, part);
    EXPECT_NEAR(p.sum(), norm(w), 1e-10);
  }
  ThreadPool pool(3);
  const auto w = random_state(g, 4);
  const auto a = populations(w, part);
  const auto b = populations(w, part, &pool);
  EXPECT_EQ(a.p_l, b.p_l);
  EXPECT_EQ(a.p_r, b.p_r);
}

TEST(DensityXz, Marginals) {
  const auto g = make_grid(32, 16, 64, {16e-6, 8e-6, 32e-6}, {-8e-6, -4e-6, -16e-6});
  const double sx = 1e-6, sy = 0.6e-6, sz = 1.5e-6;
  const auto w = gaussian_packet(g, {0.5e-6, 0, -1e-6}, {sx, sy, sz});
  const auto map = density_xz(w);
  double total = 0.0;
  for (double v : map) {
    EXPECT_GE(v, 0.0);
    total += v;
  }
  EXPECT_NEAR(total * g.spacing(0) * g.spacing(2), 1.0, 1e-10);
  // Product of discrete marginal Gaussians.
  auto marginal = [&](int a, double c, double s, std::size_t i) {
    double z = 0.0;
    for (std::size_t k = 0; k < g.n[a]; ++k) {
      const double u = g.coord(a, k) - c;
      z += std::exp(-u * u / (2 * s * s)) * g.spacing(a);
    }
    const double u = g.coord(a, i) - c;
    return std::exp(-u * u / (2 * s * s)) / z;
  };
  for (std::size_t ix = 0; ix < g.n[0]; ix += 3)
    for (std::size_t iz = 0; iz < g.n[2]; iz += 5) {
      const double expect = marginal(0, 0.5e-6, sx, ix) * marginal(2, -1e-6, sz, iz);
      EXPECT_NEAR(map[ix * g.n[2] + iz], expect, 1e-8 * (1.0 / (sx * sz)));
    }
}

TEST(EdgeDensity, Examples) {
  const auto g = make_grid(32, 32, 32, {24e-6, 24e-6, 24e-6}, {-12e-6, -12e-6, -12e-6});
  const auto c = gaussian_packet(g, {0, 0, 0}, {1.5e-6, 1.5e-6, 1.5e-6});
  EXPECT_LT(edge_density(c, 1), 1e-10);
  EXPECT_THROW(edge_density(c, 0), InvalidArgument);

  // Packet centred on the z = origin face: half its mass is in the first cells
  // and, by periodicity, the last cells.
  Wavefunction f(g);
  for (std::size_t ix = 0; ix < 32; ++ix)
    for (std::size_t iy = 0; iy < 32; ++iy)
      for (std::size_t iz = 0; iz < 32; ++iz) {
        const double x = g.coord(0, ix), y = g.coord(1, iy);
        const double z = g.coord(2, iz) - g.origin[2];
        const double zw = std::min(z, g.extent[2] - z);
        f.at(ix, iy, iz) = std::exp(-(x * x + y * y) / 8e-12 - zw * zw / 1e-14);
      }
  normalize(f);
  EXPECT_GT(edge_density(f, 1), 0.45);
  EXPECT_LT(edge_density(f, 1, nullptr, {true, true, false}), 1e-10);
  EXPECT_NEAR(edge_density(f, 1, nullptr, {false, false, true}), edge_density(f, 1), 1e-12);
}

TEST(Trace, FidelityAndCsv) {
  PopulationTrace t;
  EXPECT_THROW(transfer_fidelity(t), InvalidArgument);
  t.rows.push_back({0.0, 1, 0, 0, 1, 0});
  EXPECT_EQ(transfer_fidelity(t), 0.0);
  t.rows.push_back({1.0, 0, 0, 1, 1, 0});
  EXPECT_EQ(transfer_fidelity(t), 1.0);
  const std::string path = ::testing::TempDir() + "trace.csv";
  write_trace_csv(t, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,p_l,p_m,p_r,norm,edge");
}

TEST(Qwf, RoundTripComplex) {
  const auto g = make_grid(8, 16, 8, {1e-6, 2e-6, 3e-6}, {-1e-6, 0.5e-6, 0.0});
  auto w = random_state(g, 12);
  w.time = 0.0125;
  const std::string path = ::testing::TempDir() + "psi.qwf";
  qwf::write(path, w);
  const auto r = qwf::read(path);
  EXPECT_EQ(r.grid.n, g.n);
  for (int a = 0; a < 3; ++a) {
    EXPECT_EQ(r.grid.origin[a], g.origin[a]);
    EXPECT_DOUBLE_EQ(r.grid.spacing(a), g.spacing(a));
  }
  EXPECT_EQ(r.time, w.time);
  EXPECT_EQ(r.psi, w.psi);
  EXPECT_THROW(qwf::read_real(path), FormatError);
}

TEST(Qwf, ExactLayout) {
  SimGrid g{{1, 1, 2}, {1.0, 1.0, 2.0}, {0.0, 0.0, 0.0}};
  RealField v{1.5, -2.0};
  const std::string path = ::testing::TempDir() + "v.qwf";
  qwf::write_real(path, g, v.data(), 3.0);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 24 + 56 + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "QWF1");
  EXPECT_EQ(bytes[4], 1u);
  EXPECT_EQ(bytes[8], 1u);
  EXPECT_EQ(bytes[12], 1u);
  EXPECT_EQ(bytes[28], 2u);
  double tail;
  std::memcpy(&tail, bytes.data() + bytes.size() - 8, 8);
  EXPECT_EQ(tail, -2.0);
  qwf::Header h;
  EXPECT_EQ(qwf::read_real(path, &h), v);
  EXPECT_EQ(h.payload, qwf::Payload::real);
  EXPECT_EQ(h.time, 3.0);
}

TEST(Qwf, RejectsGarbage) {
  const std::string path = ::testing::TempDir() + "bad.qwf";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE0000";
  }
  EXPECT_THROW(qwf::read(path), FormatError);
}
