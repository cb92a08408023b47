#pragma once

#include <numbers>

namespace ctap::phys {

// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double mu0 = 1.25663706212e-6;        // T m / A
inline constexpr double bohr_magneton = 9.2740100783e-24;  // J / T
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg

inline constexpr double lithium6_mass = 6.0151228874 * atomic_mass_unit;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace literals {
constexpr double operator""_um(long double v) { return static_cast<double>(v) * 1e-6; }
constexpr double operator""_um(unsigned long long v) { return static_cast<double>(v) * 1e-6; }
constexpr double operator""_us(long double v) { return static_cast<double>(v) * 1e-6; }
constexpr double operator""_us(unsigned long long v) { return static_cast<double>(v) * 1e-6; }
}  // namespace literals

}  // namespace ctap::phys
