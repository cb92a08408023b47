#pragma once

// QWF1 grid container: "QWF1", u32 version, u32 payload flag (0 complex,
// 1 real), u64 nx ny nz, f64 x0 dx y0 dy z0 dz time, then the payload in
// storage order. Everything little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ctap/errors.hpp"
#include "ctap/qgrid.hpp"

namespace ctap::qwf {

inline constexpr std::uint32_t version = 1;
enum class Payload : std::uint32_t { complex = 0, real = 1 };

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated QWF1 header");
  return to_little(v);
}

inline void write_doubles(std::ostream& out, const double* p, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) put(out, p[i]);
  }
}

inline void read_doubles(std::istream& in, double* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw FormatError("truncated QWF1 payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) p[i] = to_little(p[i]);
  }
}

inline void write_header(std::ostream& out, const SimGrid& g, Payload flag, double time) {
  out.write("QWF1", 4);
  put<std::uint32_t>(out, version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(flag));
  for (int a = 0; a < 3; ++a) put<std::uint64_t>(out, g.n[a]);
  for (int a = 0; a < 3; ++a) {
    put<double>(out, g.origin[a]);
    put<double>(out, g.spacing(a));
  }
  put<double>(out, time);
}

}  // namespace detail

struct Header {
  Payload payload = Payload::complex;
  SimGrid grid;
  double time = 0.0;
};

inline void write(const std::string& path, const Wavefunction& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  detail::write_header(out, w.grid, Payload::complex, w.time);
  detail::write_doubles(out, reinterpret_cast<const double*>(w.psi.data()), 2 * w.psi.size());
  if (!out) throw Error("failed writing " + path);
}

inline void write_real(const std::string& path, const SimGrid& g, const double* values,
                       double time = 0.0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  detail::write_header(out, g, Payload::real, time);
  detail::write_doubles(out, values, g.size());
  if (!out) throw Error("failed writing " + path);
}

inline Header read_header(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "QWF1", 4) != 0) throw FormatError("not a QWF1 file");
  if (detail::get<std::uint32_t>(in) != version) throw FormatError("unsupported QWF1 version");
  const auto flag = detail::get<std::uint32_t>(in);
  if (flag > 1) throw FormatError("unknown QWF1 payload flag");
  Header h;
  h.payload = static_cast<Payload>(flag);
  std::array<std::uint64_t, 3> n{};
  for (auto& v : n) v = detail::get<std::uint64_t>(in);
  for (int a = 0; a < 3; ++a) {
    h.grid.n[a] = static_cast<std::size_t>(n[a]);
    h.grid.origin[a] = detail::get<double>(in);
    h.grid.extent[a] = detail::get<double>(in) * static_cast<double>(n[a]);
  }
  h.time = detail::get<double>(in);
  return h;
}

inline Wavefunction read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const auto h = read_header(in);
  if (h.payload != Payload::complex) throw FormatError(path + " holds a real payload");
  Wavefunction w(h.grid, h.time);
  detail::read_doubles(in, reinterpret_cast<double*>(w.psi.data()), 2 * w.psi.size());
  return w;
}

inline RealField read_real(const std::string& path, Header* header = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const auto h = read_header(in);
  if (h.payload != Payload::real) throw FormatError(path + " holds a complex payload");
  RealField v(h.grid.size());
  detail::read_doubles(in, v.data(), v.size());
  if (header) *header = h;
  return v;
}

}  // namespace ctap::qwf
