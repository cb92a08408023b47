#pragma once

// Run orchestration for the sim CLI: each run_* function writes its outputs
// under an output directory together with a run.json manifest.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ctap/config.hpp"
#include "ctap/magfield.hpp"
#include "ctap/observables.hpp"
#include "ctap/propagator.hpp"
#include "ctap/qwf.hpp"
#include "ctap/threemode.hpp"

#ifndef CTAP_VERSION
#define CTAP_VERSION "0.1.0"
#endif

namespace ctap::exp {

namespace fs = std::filesystem;
using json = nlohmann::json;

// A module error tagged with the pipeline stage it came from.
struct StageError : Error {
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage(std::move(stage)) {}
  std::string stage;
};

template <class F>
auto run_stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline json config_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& k : key_table()) j[k.key] = format_value(c, k);
  return j;
}

struct OutputFile {
  std::string path;  // relative to the run directory
  std::uintmax_t bytes = 0;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  json config;
  std::string version = CTAP_VERSION;
  std::string started;
  std::string finished;
  double steps_per_sec = 0.0;
  unsigned threads = 1;
  std::vector<OutputFile> outputs;
  json results = json::object();

  void add_output(const fs::path& dir, const std::string& rel) {
    const fs::path p = dir / rel;
    outputs.push_back({rel, fs::file_size(p), sha256_file(p)});
  }

  json to_json() const {
    json files = json::array();
    for (const auto& o : outputs) files.push_back({{"path", o.path}, {"bytes", o.bytes}, {"sha256", o.sha256}});
    return {{"command", command},  {"version", version},   {"started", started},
            {"finished", finished}, {"threads", threads},   {"steps_per_sec", steps_per_sec},
            {"config", config},    {"results", results},   {"outputs", files}};
  }
};

// Writes run.json through a temporary file and a rename.
inline void write_manifest(const fs::path& dir, RunManifest& m) {
  m.finished = utc_now();
  const fs::path tmp = dir / "run.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << m.to_json().dump(2) << '\n';
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, dir / "run.json");
}

// True when every output listed in dir/run.json exists with its checksum.
inline bool verify_manifest(const fs::path& dir, std::string* problem = nullptr) {
  auto fail = [&](const std::string& why) {
    if (problem) *problem = why;
    return false;
  };
  std::ifstream in(dir / "run.json");
  if (!in) return fail("run.json missing");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    return fail(e.what());
  }
  for (const auto& o : j.at("outputs")) {
    const fs::path p = dir / o.at("path").get<std::string>();
    if (!fs::exists(p)) return fail(p.string() + " missing");
    if (fs::file_size(p) != o.at("bytes").get<std::uintmax_t>()) return fail(p.string() + " size differs");
    if (sha256_file(p) != o.at("sha256").get<std::string>()) return fail(p.string() + " checksum differs");
  }
  return true;
}

struct RunContext {
  ExperimentConfig config;
  fs::path out_dir;
  unsigned threads = 1;
  std::FILE* log = stderr;  // nullptr silences progress output
};

inline RunContext make_context(ExperimentConfig c, const std::string& out_dir = "",
                               unsigned threads = 0) {
  RunContext ctx;
  ctx.out_dir = out_dir.empty() ? fs::path(c.output_dir) : fs::path(out_dir);
  ctx.threads = resolve_thread_count(threads > 0 ? threads : static_cast<unsigned>(c.threads));
  ctx.config = std::move(c);
  return ctx;
}

namespace detail {

inline RunManifest begin_run(const RunContext& ctx, const std::string& command) {
  fs::create_directories(ctx.out_dir);
  RunManifest m;
  m.command = command;
  m.config = config_json(ctx.config);
  m.started = utc_now();
  m.threads = ctx.threads;
  std::ofstream(ctx.out_dir / "config.txt") << to_text(ctx.config);
  m.add_output(ctx.out_dir, "config.txt");
  return m;
}

inline void log(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) {
    std::fprintf(ctx.log, "%s\n", msg.c_str());
    std::fflush(ctx.log);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// three-mode model

struct ThreeModeOutcome {
  threemode::EvolveResult result;
  RunManifest manifest;
};

inline ThreeModeOutcome run_threemode(const RunContext& ctx) {
  const auto& c = ctx.config;
  auto m = detail::begin_run(ctx, "threemode");
  const auto shape = c.tm_shape == "gaussian" ? threemode::PulseShape::gaussian
                                              : threemode::PulseShape::sin_squared;
  const auto pulses = run_stage("threemode", [&] {
    return parse_ordering(c.tm_ordering) == chip::Ordering::counter_intuitive
               ? threemode::PulsePair::counter_intuitive(c.tm_peak, c.tm_total_time, shape,
                                                         c.tm_width_fraction, c.tm_separation_fraction)
               : threemode::PulsePair::intuitive(c.tm_peak, c.tm_total_time, shape,
                                                 c.tm_width_fraction, c.tm_separation_fraction);
  });
  auto r = run_stage("threemode", [&] {
    return threemode::evolve(pulses, threemode::ThreeModeState::left(), c.tm_dt, c.tm_record_stride);
  });
  run_stage("persist", [&] {
    std::ofstream out(ctx.out_dir / "threemode.csv");
    out << "t,p_l,p_m,p_r,norm\n" << std::setprecision(17);
    for (const auto& s : r.samples) {
      out << s.t << ',' << s.state.population(0) << ',' << s.state.population(1) << ','
          << s.state.population(2) << ',' << s.state.norm() << '\n';
    }
    out.close();
    if (!out) throw Error("failed writing threemode.csv");
    m.add_output(ctx.out_dir, "threemode.csv");
    const auto& f = r.final_state();
    m.results = {{"p_l", f.population(0)},     {"p_m", f.population(1)},
                 {"p_r", f.population(2)},     {"max_p_m", r.max_population(1)},
                 {"edge_leakage", pulses.edge_leakage()}, {"warnings", r.warnings}};
    write_manifest(ctx.out_dir, m);
    return 0;
  });
  return {std::move(r), std::move(m)};
}

// ---------------------------------------------------------------------------
// potential and transverse ground state

inline field::PotentialGrid build_potential(const RunContext& ctx, chip::Ordering ordering,
                                            ThreadPool& pool) {
  return run_stage("potential", [&] {
    const auto layout = make_layout(ctx.config, ordering);
    return field::assemble_potential(layout, make_sim_grid(ctx.config), &pool);
  });
}

struct PotentialOutcome {
  field::PotentialGrid potential;
  RunManifest manifest;
};

inline PotentialOutcome run_potential(const RunContext& ctx) {
  auto m = detail::begin_run(ctx, "potential");
  ThreadPool pool(ctx.threads);
  detail::log(ctx, "assembling potential");
  auto p = build_potential(ctx, parse_ordering(ctx.config.ordering), pool);
  run_stage("persist", [&] {
    qwf::write_real((ctx.out_dir / "potential.qwf").string(), p.grid, p.values.data());
    field::write_minima_csv(p, (ctx.out_dir / "minima.csv").string());
    std::ofstream out(ctx.out_dir / "spectrum.csv");
    out << "z,e_l,e_m,e_r\n" << std::setprecision(17);
    std::size_t merged = 0;
    for (std::size_t iz = 0; iz < p.grid.n[2]; ++iz) {
      out << p.grid.coord(2, iz);
      for (auto id : {chip::WireId::left, chip::WireId::middle, chip::WireId::right}) {
        out << ',';
        if (p.minima[iz][id]) {
          out << field::transverse_spectrum(p, iz, id).ground;
        } else {
          out << "nan";
        }
      }
      out << '\n';
      if (p.minima[iz].n_guides != 3) ++merged;
    }
    out.close();
    for (const char* f : {"potential.qwf", "minima.csv", "spectrum.csv"}) m.add_output(ctx.out_dir, f);
    m.results = {{"v_min", p.min_value()}, {"slices_without_three_guides", merged}};
    write_manifest(ctx.out_dir, m);
    return 0;
  });
  return {std::move(p), std::move(m)};
}

struct TransverseState {
  Wavefunction psi;  // on the single-plane grid at z_start
  double energy = 0.0;
  std::size_t steps = 0;
  std::size_t iz = 0;
};

// Longitudinal packet parameters derived from the config.
struct Launch {
  double z_start = 0.0;
  double sigma_z = 0.0;
};

inline double coherent_sigma_z(const ExperimentConfig& c) {
  return std::sqrt(phys::hbar / (2.0 * species_mass(c.species) * omega_z(c)));
}

inline double launch_z(const ExperimentConfig& c, double sigma_z) {
  return std::isnan(c.z_start) ? 6.0 * sigma_z : c.z_start;
}

// Imaginary-time ground state of one guide in transverse slice iz. Points
// outside the guide's region of the partition are raised to the slice maximum
// so the relaxation cannot leak into the neighbouring guides.
inline TransverseState guide_ground_state(const field::PotentialGrid& p,
                                          const obs::GuidePartition& part, std::size_t iz,
                                          chip::WireId guide, const prop::GroundStateOptions& opt) {
  const auto& g = p.grid;
  if (iz >= g.n[2]) throw InvalidArgument("z index outside the potential grid");
  const auto& lm = p.minima[iz][guide];
  if (!lm) {
    throw MinimumAbsent(std::string("no ") + chip::to_string(guide) + " guide in slice " +
                        std::to_string(iz));
  }
  const SimGrid tp = transverse_plane(g, g.coord(2, iz));
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t ix = 0; ix < g.n[0]; ++ix)
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) vmax = std::max(vmax, p.at(ix, iy, iz));
  const int region = static_cast<int>(guide);
  RealField v(tp.size());
  Wavefunction seed(tp);
  const double s = 0.5e-6;
  for (std::size_t ix = 0; ix < g.n[0]; ++ix) {
    const double x = g.coord(0, ix);
    const bool inside = part.region(ix, iz) == region;
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      const double y = g.coord(1, iy);
      v[tp.index(ix, iy, 0)] = inside ? p.at(ix, iy, iz) : vmax;
      const double r2 = (x - lm->x) * (x - lm->x) + (y - lm->y) * (y - lm->y);
      seed.at(ix, iy, 0) = inside ? std::exp(-r2 / (4.0 * s * s)) : 0.0;
    }
  }
  auto r = prop::ground_state_imaginary(tp, v, p.mass, seed, opt);
  return TransverseState{std::move(r.psi), r.energy, r.steps, iz};
}

inline prop::GroundStateOptions ground_state_options(const RunContext& ctx) {
  const auto& c = ctx.config;
  prop::GroundStateOptions opt;
  opt.tau = c.gs_tau;
  opt.tol = c.gs_tol;
  opt.check_every = c.gs_check_every;
  opt.max_steps = c.gs_max_steps;
  opt.threads = ctx.threads;
  return opt;
}

// Left-guide ground state in the slice nearest z.
inline TransverseState left_guide_ground_state(const RunContext& ctx,
                                               const field::PotentialGrid& p,
                                               const obs::GuidePartition& part, double z) {
  return run_stage("groundstate", [&] {
    const auto& g = p.grid;
    const double fz = (z - g.origin[2]) / g.spacing(2);
    if (fz < 0.0 || fz > static_cast<double>(g.n[2] - 1)) {
      throw InvalidArgument("launch position lies outside the grid");
    }
    const auto iz = static_cast<std::size_t>(std::llround(fz));
    return guide_ground_state(p, part, iz, chip::WireId::left, ground_state_options(ctx));
  });
}

struct GroundStateOutcome {
  TransverseState state;
  Launch launch;
  RunManifest manifest;
};

inline GroundStateOutcome run_groundstate(const RunContext& ctx) {
  auto m = detail::begin_run(ctx, "groundstate");
  ThreadPool pool(ctx.threads);
  const auto p = build_potential(ctx, parse_ordering(ctx.config.ordering), pool);
  const auto part = run_stage("partition", [&] { return obs::build_partition(p); });
  Launch l;
  l.sigma_z = coherent_sigma_z(ctx.config);
  l.z_start = launch_z(ctx.config, l.sigma_z);
  auto s = left_guide_ground_state(ctx, p, part, l.z_start);
  run_stage("persist", [&] {
    qwf::write((ctx.out_dir / "groundstate.qwf").string(), s.psi);
    m.add_output(ctx.out_dir, "groundstate.qwf");
    m.results = {{"energy", s.energy},
                 {"steps", s.steps},
                 {"z", p.grid.coord(2, s.iz)},
                 {"mean_x", mean_position(s.psi, 0)},
                 {"mean_y", mean_position(s.psi, 1)},
                 {"rms_x", rms_width(s.psi, 0)},
                 {"rms_y", rms_width(s.psi, 1)}};
    write_manifest(ctx.out_dir, m);
    return 0;
  });
  return {std::move(s), l, std::move(m)};
}

// ---------------------------------------------------------------------------
// 3D propagation

struct EvolveOutcome {
  obs::PopulationTrace trace;
  RunManifest manifest;
  double p_l = 0.0;
  double p_m = 0.0;
  double p_r = 0.0;
};

// Product of the transverse state and a Gaussian envelope in z.
inline Wavefunction launch_state(const SimGrid& g, const Wavefunction& transverse, const Launch& l) {
  Wavefunction psi(g);
  std::vector<double> env(g.n[2]);
  for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
    const double u = g.coord(2, iz) - l.z_start;
    env[iz] = std::exp(-u * u / (4.0 * l.sigma_z * l.sigma_z));
  }
  for (std::size_t ix = 0; ix < g.n[0]; ++ix)
    for (std::size_t iy = 0; iy < g.n[1]; ++iy) {
      const cplx a = transverse.at(ix, iy, 0);
      cplx* row = &psi.at(ix, iy, 0);
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) row[iz] = a * env[iz];
    }
  normalize(psi);
  return psi;
}

inline EvolveOutcome run_evolve(const RunContext& ctx) {
  const auto& c = ctx.config;
  auto m = detail::begin_run(ctx, "evolve");
  const auto ordering = parse_ordering(c.ordering);
  ThreadPool pool(ctx.threads);
  detail::log(ctx, "assembling potential");
  auto p = build_potential(ctx, ordering, pool);
  const auto part = run_stage("partition", [&] { return obs::build_partition(p); });

  Launch l;
  l.sigma_z = std::isnan(c.sigma_z) ? coherent_sigma_z(c) : c.sigma_z;
  detail::log(ctx, "transverse ground state");
  l.z_start = launch_z(c, l.sigma_z);
  auto gs = left_guide_ground_state(ctx, p, part, l.z_start);
  if (std::isnan(c.sigma_z) && c.sigma_z_rule == "transverse") {
    l.sigma_z = std::sqrt(rms_width(gs.psi, 0) * rms_width(gs.psi, 1));
    l.z_start = launch_z(c, l.sigma_z);
  }

  const std::size_t n_steps = step_count(c);
  const auto axes = parse_axes(c.edge_axes);
  fs::create_directories(ctx.out_dir / "snapshots");

  EvolveOutcome out;
  std::vector<std::string> snapshots;
  auto psi = run_stage("initial", [&] { return launch_state(p.grid, gs.psi, l); });
  const double edge0 = obs::edge_density(psi, c.edge_margin, &pool, axes);
  if (edge0 > c.edge_threshold) {
    throw StageError("initial", "initial state has edge density " + std::to_string(edge0) +
                                    " above the threshold");
  }

  auto plan = run_stage("plan", [&] {
    return std::make_unique<prop::StepPlan>(p.grid, p.values, c.dt, prop::Mode::real_time, p.mass,
                                            ctx.threads);
  });

  std::vector<prop::Observer> observers;
  observers.push_back({c.population_stride, [&](const Wavefunction& w, std::size_t) {
                         const auto pop = obs::populations(w, part, &pool);
                         const double edge = obs::edge_density(w, c.edge_margin, &pool, axes);
                         out.trace.rows.push_back({w.time, pop.p_l, pop.p_m, pop.p_r,
                                                   norm(w, &pool), edge});
                         if (edge > c.edge_threshold) {
                           throw EdgeBreach("edge density " + std::to_string(edge) + " at t = " +
                                            std::to_string(w.time) + " s exceeds " +
                                            std::to_string(c.edge_threshold));
                         }
                       }});
  if (c.snapshots > 0) {
    const std::size_t stride = std::max<std::size_t>(1, n_steps / c.snapshots);
    observers.push_back({stride, [&](const Wavefunction& w, std::size_t s) {
                           char name[64];
                           std::snprintf(name, sizeof name, "snapshots/density_%07zu.qwf", s);
                           const auto map = obs::density_xz(w);
                           qwf::write_real((ctx.out_dir / name).string(), obs::density_grid(w.grid),
                                           map.data(), w.time);
                           snapshots.push_back(name);
                         }});
  }
  prop::EvolveOptions eo;
  eo.progress_stride = ctx.log ? c.progress_stride : 0;
  eo.progress_stream = ctx.log;

  auto persist_trace = [&] {
    obs::write_trace_csv(out.trace, (ctx.out_dir / "trace.csv").string());
    m.add_output(ctx.out_dir, "trace.csv");
  };
  detail::log(ctx, "propagating");
  prop::EvolveStats stats;
  try {
    stats = run_stage("evolve", [&] { return prop::evolve_real(psi, *plan, n_steps, observers, eo); });
  } catch (const StageError&) {
    persist_trace();
    m.results = {{"aborted", true}};
    write_manifest(ctx.out_dir, m);
    throw;
  }

  run_stage("persist", [&] {
    persist_trace();
    for (const auto& s : snapshots) m.add_output(ctx.out_dir, s);
    field::write_minima_csv(p, (ctx.out_dir / "minima.csv").string());
    m.add_output(ctx.out_dir, "minima.csv");
    if (c.write_final_state) {
      qwf::write((ctx.out_dir / "final.qwf").string(), psi);
      m.add_output(ctx.out_dir, "final.qwf");
    }
    const auto& last = out.trace.rows.back();
    out.p_l = last.p_l;
    out.p_m = last.p_m;
    out.p_r = last.p_r;
    m.steps_per_sec = stats.steps_per_sec;
    m.results = {{"ordering", c.ordering},
                 {"steps", n_steps},
                 {"p_l", last.p_l},
                 {"p_m", last.p_m},
                 {"p_r", last.p_r},
                 {"max_p_m", out.trace.max_p_m()},
                 {"norm", last.norm},
                 {"max_edge", std::max_element(out.trace.rows.begin(), out.trace.rows.end(),
                                               [](auto& a, auto& b) { return a.edge < b.edge; })
                                  ->edge},
                 {"z_start", l.z_start},
                 {"sigma_z", l.sigma_z},
                 {"transverse_energy", gs.energy},
                 {"transverse_steps", gs.steps},
                 {"partition_fallback_slices", part.fallback_count()},
                 {"wall_seconds", stats.wall_seconds}};
    write_manifest(ctx.out_dir, m);
    return 0;
  });
  out.manifest = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// parameter sweep

struct SweepRow {
  double value = 0.0;
  std::string ordering;
  double p_l = 0.0;
  double p_m = 0.0;
  double p_r = 0.0;
  double max_p_m = 0.0;
};

struct SweepOutcome {
  std::vector<SweepRow> rows;
  RunManifest manifest;

  std::vector<double> final_p_r(const std::string& ordering) const {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.ordering == ordering) v.push_back(r.p_r);
    }
    return v;
  }
};

inline SweepOutcome run_sweep(const RunContext& ctx) {
  const auto& c = ctx.config;
  auto m = detail::begin_run(ctx, "sweep");
  const auto values = run_stage("config", [&] { return sweep_values(c); });
  std::vector<std::string> orderings;
  if (c.sweep_orderings != "intuitive") orderings.push_back("counter_intuitive");
  if (c.sweep_orderings != "counter_intuitive") orderings.push_back("intuitive");

  SweepOutcome out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (const auto& o : orderings) {
      RunContext sub = ctx;
      sub.config.ordering = o;
      numeric_ref(sub.config, c.sweep_parameter) = values[i];
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03zu", o.c_str(), i);
      sub.out_dir = ctx.out_dir / "runs" / name;
      if (ctx.log) {
        std::fprintf(ctx.log, "sweep %s = %.17g (%s)\n", c.sweep_parameter.c_str(), values[i], o.c_str());
      }
      const auto r = run_evolve(sub);
      out.rows.push_back({values[i], o, r.p_l, r.p_m, r.p_r, r.trace.max_p_m()});
    }
  }

  run_stage("persist", [&] {
    {
      std::ofstream csv(ctx.out_dir / "sweep.csv");
      csv << c.sweep_parameter;
      for (const auto& o : orderings) csv << ",p_r_" << o;
      csv << '\n' << std::setprecision(17);
      for (std::size_t i = 0; i < values.size(); ++i) {
        csv << values[i];
        for (std::size_t k = 0; k < orderings.size(); ++k) csv << ',' << out.rows[i * orderings.size() + k].p_r;
        csv << '\n';
      }
      std::ofstream runs(ctx.out_dir / "sweep_runs.csv");
      runs << c.sweep_parameter << ",ordering,p_l,p_m,p_r,max_p_m\n" << std::setprecision(17);
      for (const auto& r : out.rows) {
        runs << r.value << ',' << r.ordering << ',' << r.p_l << ',' << r.p_m << ',' << r.p_r << ','
             << r.max_p_m << '\n';
      }
    }
    m.add_output(ctx.out_dir, "sweep.csv");
    m.add_output(ctx.out_dir, "sweep_runs.csv");
    json spread = json::object();
    for (const auto& o : orderings) {
      const auto v = out.final_p_r(o);
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      spread[o] = {{"min_p_r", *lo}, {"max_p_r", *hi}, {"spread", *hi - *lo}};
    }
    m.results = {{"parameter", c.sweep_parameter}, {"values", values}, {"p_r", spread}};
    write_manifest(ctx.out_dir, m);
    return 0;
  });
  out.manifest = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// kernel benchmark

struct BenchPoint {
  unsigned threads = 1;
  double median = 0.0;  // steps per second
  double min = 0.0;
  double max = 0.0;
};

struct BenchReport {
  std::vector<BenchPoint> points;
  double projected_seconds = 0.0;  // full-length run at the best rate
  RunManifest manifest;

  double speedup(unsigned threads) const {
    double base = 0.0, at = 0.0;
    for (const auto& p : points) {
      if (p.threads == 1) base = p.median;
      if (p.threads == threads) at = p.median;
    }
    return base > 0.0 ? at / base : 0.0;
  }
};

inline std::vector<unsigned> bench_thread_counts(const std::string& spec, unsigned hardware) {
  std::vector<unsigned> t;
  if (spec == "auto") {
    hardware = std::max(1u, hardware);
    for (unsigned n = 1; n <= hardware; n *= 2) t.push_back(n);
    if (t.back() != hardware) t.push_back(hardware);
    return t;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto s = detail::trim(item);
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
      throw ConfigError("bench_threads must be 'auto' or a list like '1,2,4'");
    }
    t.push_back(v);
  }
  if (t.empty()) throw ConfigError("bench_threads is empty");
  return t;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline BenchReport run_bench(const RunContext& ctx) {
  const auto& c = ctx.config;
  auto m = detail::begin_run(ctx, "bench");
  const auto counts = run_stage("config", [&] {
    return bench_thread_counts(c.bench_threads, std::thread::hardware_concurrency());
  });
  const auto g = run_stage("grid", [&] { return make_sim_grid(c); });
  const double mass = species_mass(c.species);
  // The kernel cost does not depend on the potential values.
  RealField v(g.size());
  const double w = phys::two_pi * 5e3;
  for (std::size_t ix = 0; ix < g.n[0]; ++ix)
    for (std::size_t iy = 0; iy < g.n[1]; ++iy)
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const double x = g.coord(0, ix), y = g.coord(1, iy) - g.origin[1] - 0.5 * g.extent[1];
        v[g.index(ix, iy, iz)] = 0.5 * mass * w * w * (x * x + y * y);
      }
  Wavefunction seed(g);
  for (std::size_t ix = 0; ix < g.n[0]; ++ix)
    for (std::size_t iy = 0; iy < g.n[1]; ++iy)
      for (std::size_t iz = 0; iz < g.n[2]; ++iz) {
        const double x = g.coord(0, ix) / g.extent[0], z = g.coord(2, iz) / g.extent[2] - 0.5;
        seed.at(ix, iy, iz) = std::exp(-50.0 * (x * x + z * z));
      }
  normalize(seed);

  BenchReport rep;
  const std::size_t batches = c.bench_batches;
  const std::size_t per_batch = (c.bench_steps + batches - 1) / batches;
  for (unsigned t : counts) {
    run_stage("bench", [&] {
      prop::StepPlan plan(g, v, c.dt, prop::Mode::real_time, mass, t);
      auto psi = seed;
      prop::evolve_real(psi, plan, c.bench_warmup);
      std::vector<double> rates;
      for (std::size_t b = 0; b < batches; ++b) {
        rates.push_back(prop::evolve_real(psi, plan, per_batch).steps_per_sec);
      }
      rep.points.push_back({t, median_of(rates), *std::min_element(rates.begin(), rates.end()),
                            *std::max_element(rates.begin(), rates.end())});
      if (ctx.log) {
        std::fprintf(ctx.log, "threads=%u steps/s=%.3f (%.3f..%.3f)\n", t, rep.points.back().median,
                     rep.points.back().min, rep.points.back().max);
      }
      return 0;
    });
  }
  double best = 0.0;
  for (const auto& p : rep.points) best = std::max(best, p.median);
  rep.projected_seconds = 1e5 / best;

  run_stage("persist", [&] {
    {
      std::ofstream csv(ctx.out_dir / "bench.csv");
      csv << "threads,steps_per_sec\n" << std::setprecision(17);
      for (const auto& p : rep.points) csv << p.threads << ',' << p.median << '\n';
    }
    m.add_output(ctx.out_dir, "bench.csv");
    json pts = json::array();
    for (const auto& p : rep.points) {
      pts.push_back({{"threads", p.threads},
                     {"median_steps_per_sec", p.median},
                     {"min_steps_per_sec", p.min},
                     {"max_steps_per_sec", p.max},
                     {"speedup", rep.speedup(p.threads)}});
    }
    m.steps_per_sec = best;
    m.results = {{"grid", {g.n[0], g.n[1], g.n[2]}},
                 {"timed_steps_per_thread_count", per_batch * batches},
                 {"warmup_steps", c.bench_warmup},
                 {"points", pts},
                 {"projected_1e5_step_hours", rep.projected_seconds / 3600.0}};
    write_manifest(ctx.out_dir, m);
    return 0;
  });
  rep.manifest = std::move(m);
  return rep;
}

}  // namespace ctap::exp
