#pragma once

// Flat "key = value unit" experiment configuration.
//
//   # comment
//   z_max = 250 um
//   i_middle = 0.07 A
//   nx = 128
//
// Dimensional keys must carry one of the units um, nm, A, T, Hz, s, us.
// Unknown or repeated keys are errors.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ctap/chipgeom.hpp"
#include "ctap/constants.hpp"
#include "ctap/errors.hpp"
#include "ctap/qgrid.hpp"

namespace ctap::exp {

enum class Quantity { length, current, field, frequency, time, number, count, text, flag };

inline constexpr double auto_value = std::numeric_limits<double>::quiet_NaN();

struct ExperimentConfig {
  std::string preset = "desk";

  // chip
  std::string ordering = "counter_intuitive";
  double d0 = 7e-6;
  double d_min = 4.3e-6;
  double straight_run = 12.5e-6;
  double xi = 12.5e-6;
  double bump_half_width = 75e-6;
  double z_pad = 125e-6;
  double segment_length = 0.5e-6;
  double i_left = 0.1;
  double i_middle = 0.07;
  double i_right = 0.1;
  double bias_field = 0.014;
  double ioffe_field = 0.03;
  std::string bias_direction = "x";
  double trap_frequency_z = 20.0;
  std::string species = "li6";
  double moment = 3.3e-4;  // g_F m_F, in Bohr magnetons

  // grid
  std::size_t nx = 128;
  std::size_t ny = 32;
  std::size_t nz = 256;
  double x_span = 20e-6;
  double y_span = 4e-6;
  double z_max = 250e-6;
  double y_origin = 0.6e-6;

  // time
  double dt = 1e-6;
  double total_time = auto_value;  // half a longitudinal period

  // initial state
  double z_start = auto_value;  // 6 sigma_z from the z = 0 face
  double sigma_z = auto_value;
  std::string sigma_z_rule = "coherent";
  double gs_tau = 1e-7;
  double gs_tol = 1e-10;
  std::size_t gs_check_every = 100;
  std::size_t gs_max_steps = 2000000;

  // observers
  std::size_t population_stride = 100;
  std::size_t snapshots = 50;
  std::size_t progress_stride = 1000;
  std::size_t edge_margin = 2;
  double edge_threshold = 1e-6;
  std::string edge_axes = "z";
  bool write_final_state = true;

  std::size_t threads = 0;
  std::string output_dir = "out";

  // sweep
  std::string sweep_parameter = "i_middle";
  std::string sweep_start = "0.065 A";  // in the swept key's units
  std::string sweep_stop = "0.075 A";
  std::string sweep_step = "0.005 A";
  std::string sweep_orderings = "both";

  // bench
  std::string bench_threads = "auto";
  std::size_t bench_warmup = 100;
  std::size_t bench_steps = 300;
  std::size_t bench_batches = 5;

  // three-mode model, dimensionless (hbar = 1)
  std::string tm_ordering = "counter_intuitive";
  std::string tm_shape = "gaussian";
  double tm_peak = 1.0;
  double tm_total_time = 50.0;
  double tm_width_fraction = 1.0 / 18.0;
  double tm_separation_fraction = 1.0 / 14.0;
  double tm_dt = 0.005;
  std::size_t tm_record_stride = 10;
};

using Member = std::variant<double ExperimentConfig::*, std::size_t ExperimentConfig::*,
                            std::string ExperimentConfig::*, bool ExperimentConfig::*>;

struct KeySpec {
  const char* key;
  Quantity quantity;
  Member member;
  bool allows_auto = false;
};

inline const std::vector<KeySpec>& key_table() {
  using C = ExperimentConfig;
  using Q = Quantity;
  static const std::vector<KeySpec> table = {
      {"preset", Q::text, &C::preset},
      {"ordering", Q::text, &C::ordering},
      {"d0", Q::length, &C::d0},
      {"d_min", Q::length, &C::d_min},
      {"straight_run", Q::length, &C::straight_run},
      {"xi", Q::length, &C::xi},
      {"bump_half_width", Q::length, &C::bump_half_width},
      {"z_pad", Q::length, &C::z_pad},
      {"segment_length", Q::length, &C::segment_length},
      {"i_left", Q::current, &C::i_left},
      {"i_middle", Q::current, &C::i_middle},
      {"i_right", Q::current, &C::i_right},
      {"bias_field", Q::field, &C::bias_field},
      {"ioffe_field", Q::field, &C::ioffe_field},
      {"bias_direction", Q::text, &C::bias_direction},
      {"trap_frequency_z", Q::frequency, &C::trap_frequency_z},
      {"species", Q::text, &C::species},
      {"moment", Q::number, &C::moment},
      {"nx", Q::count, &C::nx},
      {"ny", Q::count, &C::ny},
      {"nz", Q::count, &C::nz},
      {"x_span", Q::length, &C::x_span},
      {"y_span", Q::length, &C::y_span},
      {"z_max", Q::length, &C::z_max},
      {"y_origin", Q::length, &C::y_origin},
      {"dt", Q::time, &C::dt},
      {"total_time", Q::time, &C::total_time, true},
      {"z_start", Q::length, &C::z_start, true},
      {"sigma_z", Q::length, &C::sigma_z, true},
      {"sigma_z_rule", Q::text, &C::sigma_z_rule},
      {"gs_tau", Q::time, &C::gs_tau},
      {"gs_tol", Q::number, &C::gs_tol},
      {"gs_check_every", Q::count, &C::gs_check_every},
      {"gs_max_steps", Q::count, &C::gs_max_steps},
      {"population_stride", Q::count, &C::population_stride},
      {"snapshots", Q::count, &C::snapshots},
      {"progress_stride", Q::count, &C::progress_stride},
      {"edge_margin", Q::count, &C::edge_margin},
      {"edge_threshold", Q::number, &C::edge_threshold},
      {"edge_axes", Q::text, &C::edge_axes},
      {"write_final_state", Q::flag, &C::write_final_state},
      {"threads", Q::count, &C::threads},
      {"output_dir", Q::text, &C::output_dir},
      {"sweep_parameter", Q::text, &C::sweep_parameter},
      {"sweep_start", Q::text, &C::sweep_start},
      {"sweep_stop", Q::text, &C::sweep_stop},
      {"sweep_step", Q::text, &C::sweep_step},
      {"sweep_orderings", Q::text, &C::sweep_orderings},
      {"bench_threads", Q::text, &C::bench_threads},
      {"bench_warmup", Q::count, &C::bench_warmup},
      {"bench_steps", Q::count, &C::bench_steps},
      {"bench_batches", Q::count, &C::bench_batches},
      {"tm_ordering", Q::text, &C::tm_ordering},
      {"tm_shape", Q::text, &C::tm_shape},
      {"tm_peak", Q::number, &C::tm_peak},
      {"tm_total_time", Q::number, &C::tm_total_time},
      {"tm_width_fraction", Q::number, &C::tm_width_fraction},
      {"tm_separation_fraction", Q::number, &C::tm_separation_fraction},
      {"tm_dt", Q::number, &C::tm_dt},
      {"tm_record_stride", Q::count, &C::tm_record_stride},
  };
  return table;
}

inline const KeySpec* find_key(std::string_view key) {
  for (const auto& k : key_table()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

struct UnitInfo {
  const char* name;
  Quantity quantity;
  double factor;
};

inline constexpr UnitInfo units[] = {
    {"um", Quantity::length, 1e-6}, {"nm", Quantity::length, 1e-9},
    {"A", Quantity::current, 1.0},  {"T", Quantity::field, 1.0},
    {"Hz", Quantity::frequency, 1.0}, {"s", Quantity::time, 1.0},
    {"us", Quantity::time, 1e-6},
};

inline const char* canonical_unit(Quantity q) {
  switch (q) {
    case Quantity::length: return "um";
    case Quantity::current: return "A";
    case Quantity::field: return "T";
    case Quantity::frequency: return "Hz";
    case Quantity::time: return "s";
    default: return "";
  }
}

inline bool is_dimensional(Quantity q) {
  return q == Quantity::length || q == Quantity::current || q == Quantity::field ||
         q == Quantity::frequency || q == Quantity::time;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Number followed by an optional unit, e.g. "1000 um", "0.5us", "7".
inline double parse_quantity(const std::string& text, const KeySpec& spec) {
  const std::string where = std::string("key '") + spec.key + "'";
  if (spec.allows_auto && text == "auto") return auto_value;
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || !std::isfinite(v)) throw ConfigError(where + ": bad number '" + text + "'");
  const std::string unit = trim(std::string_view(ptr, static_cast<std::size_t>(last - ptr)));
  if (!is_dimensional(spec.quantity)) {
    if (!unit.empty()) throw ConfigError(where + " is dimensionless, got unit '" + unit + "'");
    return v;
  }
  if (unit.empty()) {
    throw ConfigError(where + " needs a unit, e.g. '" + text + " " + canonical_unit(spec.quantity) + "'");
  }
  for (const auto& u : units) {
    if (unit == u.name) {
      if (u.quantity != spec.quantity) {
        throw ConfigError(where + ": unit '" + unit + "' has the wrong dimension");
      }
      return v * u.factor;
    }
  }
  throw ConfigError(where + ": unknown unit '" + unit + "'");
}

inline std::size_t parse_count(const std::string& text, const KeySpec& spec) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string("key '") + spec.key + "': expected a non-negative integer, got '" +
                      text + "'");
  }
  return v;
}

inline bool parse_flag(const std::string& text, const KeySpec& spec) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError(std::string("key '") + spec.key + "': expected true or false, got '" + text + "'");
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

}  // namespace detail

inline void set_value(ExperimentConfig& c, const KeySpec& spec, const std::string& text) {
  std::visit(
      [&](auto m) {
        using T = std::remove_reference_t<decltype(c.*m)>;
        if constexpr (std::is_same_v<T, double>) {
          c.*m = detail::parse_quantity(text, spec);
        } else if constexpr (std::is_same_v<T, std::size_t>) {
          c.*m = detail::parse_count(text, spec);
        } else if constexpr (std::is_same_v<T, bool>) {
          c.*m = detail::parse_flag(text, spec);
        } else {
          if (text.empty()) throw ConfigError(std::string("key '") + spec.key + "' is empty");
          c.*m = text;
        }
      },
      spec.member);
}

// SI value of a numeric key; throws for non-numeric keys.
inline double& numeric_ref(ExperimentConfig& c, const std::string& key) {
  const auto* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  if (!std::holds_alternative<double ExperimentConfig::*>(spec->member)) {
    throw ConfigError("key '" + key + "' is not a real-valued parameter");
  }
  return c.*std::get<double ExperimentConfig::*>(spec->member);
}

// start, start + step, ... while below stop, then stop itself.
inline std::vector<double> sweep_values(const ExperimentConfig& c) {
  const auto* spec = find_key(c.sweep_parameter);
  if (!spec || !std::holds_alternative<double ExperimentConfig::*>(spec->member)) {
    throw ConfigError("sweep_parameter '" + c.sweep_parameter + "' is not a real-valued key");
  }
  KeySpec bound = *spec;
  bound.allows_auto = false;
  const double a = detail::parse_quantity(c.sweep_start, bound);
  const double b = detail::parse_quantity(c.sweep_stop, bound);
  const double h = detail::parse_quantity(c.sweep_step, bound);
  if (!(h > 0.0) || b < a) {
    throw ConfigError("sweep range is empty: need sweep_step > 0 and sweep_stop >= sweep_start");
  }
  const auto n = static_cast<std::size_t>(std::floor((b - a) / h + 1e-9)) + 1;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + static_cast<double>(i) * h;
  if (b - v.back() > 1e-9 * h) v.push_back(b);
  return v;
}

// Value as it would be written in a config file.
inline std::string format_value(const ExperimentConfig& c, const KeySpec& spec) {
  return std::visit(
      [&](auto m) -> std::string {
        using T = std::remove_cvref_t<decltype(c.*m)>;
        if constexpr (std::is_same_v<T, double>) {
          const double v = c.*m;
          if (std::isnan(v)) return "auto";
          if (!is_dimensional(spec.quantity)) return detail::format_double(v);
          const double f = spec.quantity == Quantity::length ? 1e-6 : 1.0;
          return detail::format_double(v / f) + " " + canonical_unit(spec.quantity);
        } else if constexpr (std::is_same_v<T, std::size_t>) {
          return std::to_string(c.*m);
        } else if constexpr (std::is_same_v<T, bool>) {
          return c.*m ? "true" : "false";
        } else {
          return c.*m;
        }
      },
      spec.member);
}

inline std::string to_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.key) + " = " + format_value(c, k) + "\n";
  return out;
}

// 128 x 32 x 256 grid over a 250 um chip with a 20 Hz longitudinal trap.
inline ExperimentConfig desk_preset() { return {}; }

// 256 x 64 x 1024 grid over the full 1000 um chip, 5 Hz longitudinal trap.
inline ExperimentConfig full_preset() {
  ExperimentConfig c;
  c.preset = "full";
  c.straight_run = 50e-6;
  c.xi = 50e-6;
  c.bump_half_width = 300e-6;
  c.z_pad = 500e-6;
  c.trap_frequency_z = 5.0;
  c.nx = 256;
  c.ny = 64;
  c.nz = 1024;
  c.z_max = 1000e-6;
  c.population_stride = 250;
  c.progress_stride = 2000;
  c.sweep_start = "0.0672 A";
  c.sweep_stop = "0.0761 A";
  c.sweep_step = "0.001 A";
  return c;
}

inline chip::Ordering parse_ordering(const std::string& s) {
  if (s == "counter_intuitive") return chip::Ordering::counter_intuitive;
  if (s == "intuitive") return chip::Ordering::intuitive;
  throw ConfigError("ordering must be counter_intuitive or intuitive, got '" + s + "'");
}

inline double species_mass(const std::string& s) {
  if (s == "li6") return phys::lithium6_mass;
  if (s == "rb87") return 86.909180527 * phys::atomic_mass_unit;
  throw ConfigError("unknown species '" + s + "' (li6, rb87)");
}

inline std::array<bool, 3> parse_axes(const std::string& s) {
  std::array<bool, 3> a{false, false, false};
  for (char ch : s) {
    if (ch == 'x') a[0] = true;
    else if (ch == 'y') a[1] = true;
    else if (ch == 'z') a[2] = true;
    else if (ch != ',' && ch != ' ') throw ConfigError("edge_axes takes letters from xyz, got '" + s + "'");
  }
  if (!(a[0] || a[1] || a[2])) throw ConfigError("edge_axes selects no axis");
  return a;
}

inline double omega_z(const ExperimentConfig& c) { return phys::two_pi * c.trap_frequency_z; }

// Half a longitudinal period unless set.
inline double total_time(const ExperimentConfig& c) {
  return std::isnan(c.total_time) ? phys::pi / omega_z(c) : c.total_time;
}

inline std::size_t step_count(const ExperimentConfig& c) {
  return static_cast<std::size_t>(std::llround(total_time(c) / c.dt));
}

inline bool is_full_scale(const ExperimentConfig& c) {
  return c.preset == "full" || c.nx * c.ny * c.nz >= std::size_t{256} * 64 * 1024;
}

inline void validate(const ExperimentConfig& c) {
  if (c.preset != "desk" && c.preset != "full") throw ConfigError("preset must be desk or full");
  parse_ordering(c.ordering);
  parse_ordering(c.tm_ordering);
  species_mass(c.species);
  parse_axes(c.edge_axes);
  if (c.bias_direction != "x" && c.bias_direction != "y") {
    throw ConfigError("bias_direction must be x or y");
  }
  if (c.sigma_z_rule != "coherent" && c.sigma_z_rule != "transverse") {
    throw ConfigError("sigma_z_rule must be coherent or transverse");
  }
  if (c.tm_shape != "gaussian" && c.tm_shape != "sin_squared") {
    throw ConfigError("tm_shape must be gaussian or sin_squared");
  }
  if (c.sweep_orderings != "both" && c.sweep_orderings != "counter_intuitive" &&
      c.sweep_orderings != "intuitive") {
    throw ConfigError("sweep_orderings must be both, counter_intuitive or intuitive");
  }
  for (std::size_t n : {c.nx, c.ny, c.nz}) {
    if (n < 8 || !is_power_of_two(n)) throw ConfigError("grid counts must be powers of two >= 8");
  }
  if (!(c.dt > 0.0) || !(total_time(c) > 0.0)) throw ConfigError("dt and total_time must be positive");
  if (!(c.trap_frequency_z > 0.0)) throw ConfigError("trap_frequency_z must be positive");
  if (!(c.moment > 0.0)) throw ConfigError("moment must be positive");
  if (c.population_stride == 0 || c.edge_margin == 0) {
    throw ConfigError("population_stride and edge_margin must be at least 1");
  }
  if (!(c.gs_tau > 0.0) || !(c.gs_tol > 0.0)) throw ConfigError("gs_tau and gs_tol must be positive");
  sweep_values(c);
  if (!(c.tm_peak >= 0.0) || !(c.tm_total_time > 0.0) || !(c.tm_dt > 0.0)) {
    throw ConfigError("three-mode peak, total time and dt must be positive");
  }
  if (c.bench_steps < 1 || c.bench_batches < 1) throw ConfigError("bench needs steps and batches");
}

// Parses config text on top of the desk preset, or the full preset when
// full_scale is set. A full-scale result requires full_scale.
inline ExperimentConfig parse_config(const std::string& text, bool full_scale = false) {
  std::vector<std::pair<std::string, std::pair<std::string, int>>> entries;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (!find_key(key)) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' already set on line " +
                        std::to_string(it->second));
    }
    seen[key] = lineno;
    entries.push_back({key, {value, lineno}});
  }

  std::string preset = full_scale ? "full" : "desk";
  for (const auto& [k, v] : entries) {
    if (k == "preset") preset = v.first;
  }
  ExperimentConfig c;
  if (preset == "full") {
    c = full_preset();
  } else if (preset != "desk") {
    throw ConfigError("preset must be desk or full, got '" + preset + "'");
  }
  for (const auto& [k, v] : entries) {
    try {
      set_value(c, *find_key(k), v.first);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(v.second) + ": " + e.what());
    }
  }
  validate(c);
  if (is_full_scale(c) && !full_scale) {
    throw ConfigError("full-scale configuration; pass --full-scale to run it");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path, bool full_scale = false) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), full_scale);
}

inline chip::ChipLayout make_layout(const ExperimentConfig& c, chip::Ordering ordering) {
  chip::ChipLayout l;
  l.ordering = ordering;
  l.d0 = c.d0;
  l.d_min = c.d_min;
  l.straight_run = c.straight_run;
  l.xi = c.xi;
  l.bump_half_width = c.bump_half_width;
  l.z_pad = c.z_pad;
  l.segment_length = c.segment_length;
  l.x_span = c.x_span;
  l.y_span = c.y_span;
  l.z_max = c.z_max;
  l.bias_direction = c.bias_direction == "x" ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  l.bias_field = c.bias_field;
  l.ioffe_field = c.ioffe_field;
  l.omega_z = omega_z(c);
  l.mass = species_mass(c.species);
  l.mu_eff = c.moment * phys::bohr_magneton;
  chip::rebuild_wires(l, c.i_left, c.i_middle, c.i_right);
  l.validate();
  return l;
}

inline chip::ChipLayout make_layout(const ExperimentConfig& c) {
  return make_layout(c, parse_ordering(c.ordering));
}

// x centred on the chip, y starting at y_origin above the wire plane, z over
// [0, z_max).
inline SimGrid make_sim_grid(const ExperimentConfig& c) {
  return make_grid(c.nx, c.ny, c.nz, {c.x_span, c.y_span, c.z_max},
                   {-0.5 * c.x_span, c.y_origin, 0.0});
}

}  // namespace ctap::exp
