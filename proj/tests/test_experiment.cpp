#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "ctap/experiment.hpp"

using namespace ctap;
using namespace ctap::exp;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("ctap_" + name);
  fs::remove_all(p);
  return p;
}

// Coarse grid that still holds three guides; a few hundred steps. Lines in
// extra replace the defaults below.
ExperimentConfig tiny(const std::string& extra = "") {
  std::map<std::string, std::string> kv = {
      {"nx", "32"},          {"ny", "8"},           {"nz", "64"},
      {"total_time", "200 us"}, {"population_stride", "50"}, {"snapshots", "4"},
      {"progress_stride", "0"}, {"gs_tau", "0.2 us"}, {"gs_tol", "1e-8"}};
  std::istringstream in(extra);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[exp::detail::trim(line.substr(0, eq))] = exp::detail::trim(line.substr(eq + 1));
  }
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return parse_config(text);
}

RunContext quiet(ExperimentConfig c, const fs::path& out) {
  auto ctx = make_context(std::move(c), out.string(), 1);
  ctx.log = nullptr;
  return ctx;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Config, EmptyTextIsDeskPreset) {
  const auto c = parse_config("");
  EXPECT_EQ(c.preset, "desk");
  EXPECT_EQ(c.nx * c.ny * c.nz, 128u * 32 * 256);
  EXPECT_DOUBLE_EQ(c.z_max, 250e-6);
  EXPECT_DOUBLE_EQ(c.trap_frequency_z, 20.0);
  EXPECT_EQ(step_count(c), 25000u);
  EXPECT_NEAR(total_time(c), 0.025, 1e-15);
}

TEST(Config, UnitsConvertToSi) {
  const auto c = parse_config(
      "z_max = 500 um\nsegment_length = 250nm\ni_middle = 0.0672 A\nbias_field = 0.02 T\n"
      "trap_frequency_z = 10 Hz\ndt = 2 us\ntotal_time = 0.01 s\nz_start = auto\n");
  EXPECT_DOUBLE_EQ(c.z_max, 500e-6);
  EXPECT_DOUBLE_EQ(c.segment_length, 250e-9);
  EXPECT_DOUBLE_EQ(c.i_middle, 0.0672);
  EXPECT_DOUBLE_EQ(c.bias_field, 0.02);
  EXPECT_DOUBLE_EQ(c.dt, 2e-6);
  EXPECT_EQ(step_count(c), 5000u);
  EXPECT_TRUE(std::isnan(c.z_start));
}

TEST(Config, CommentsAndWhitespace) {
  const auto c = parse_config("# header\n\n   nx=64   # trailing\n\tordering = intuitive\n");
  EXPECT_EQ(c.nx, 64u);
  EXPECT_EQ(c.ordering, "intuitive");
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("zmax = 250 um\n"), ConfigError);
  EXPECT_THROW(parse_config("z_max = 250\n"), ConfigError);
  EXPECT_THROW(parse_config("z_max = 250 A\n"), ConfigError);
  EXPECT_THROW(parse_config("z_max = 250 mm\n"), ConfigError);
  EXPECT_THROW(parse_config("nx = 64 um\n"), ConfigError);
  EXPECT_THROW(parse_config("nx = 100\n"), ConfigError);
  EXPECT_THROW(parse_config("nx = -8\n"), ConfigError);
  EXPECT_THROW(parse_config("nx = 64\nnx = 64\n"), ConfigError);
  EXPECT_THROW(parse_config("ordering = sideways\n"), ConfigError);
  EXPECT_THROW(parse_config("just a line\n"), ConfigError);
  EXPECT_THROW(parse_config("z_start = auto um\n"), ConfigError);
  EXPECT_THROW(parse_config("dt = auto\n"), ConfigError);
  EXPECT_THROW(parse_config("sweep_start = 0.08 A\nsweep_stop = 0.07 A\n"), ConfigError);
  EXPECT_THROW(parse_config("sweep_parameter = ordering\n"), ConfigError);
  try {
    parse_config("nx = 64\n\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Config, FullScaleGate) {
  EXPECT_THROW(parse_config("preset = full\n"), ConfigError);
  EXPECT_THROW(parse_config("nx = 256\nny = 64\nnz = 1024\n"), ConfigError);
  const auto p = parse_config("", true);
  EXPECT_EQ(p.preset, "full");
  EXPECT_EQ(p.nz, 1024u);
  EXPECT_DOUBLE_EQ(p.z_max, 1000e-6);
  EXPECT_DOUBLE_EQ(p.xi, 50e-6);
  EXPECT_NEAR(total_time(p), 0.1, 1e-15);
  EXPECT_EQ(step_count(p), 100000u);
  EXPECT_EQ(sweep_values(p).size(), 10u);
  // A desk config stays desk-scale even when the flag is given with a preset key.
  EXPECT_EQ(parse_config("preset = desk\n", true).preset, "desk");
}

TEST(Config, TextRoundTrip) {
  const auto a = parse_config("d_min = 4.3 um\ni_middle = 0.0672 A\nsigma_z = 3.5 um\nmoment = 5e-4\n");
  const auto b = parse_config(to_text(a));
  EXPECT_EQ(to_text(a), to_text(b));
  EXPECT_EQ(a.d_min, b.d_min);
  EXPECT_EQ(a.i_middle, b.i_middle);
  EXPECT_EQ(a.sigma_z, b.sigma_z);
  EXPECT_TRUE(std::isnan(b.z_start));
}

TEST(Config, SweepValues) {
  auto c = parse_config("sweep_start = 0.07 A\nsweep_stop = 0.07 A\n");
  EXPECT_EQ(sweep_values(c), std::vector<double>{0.07});
  c = parse_config("sweep_start = 0.0672 A\nsweep_stop = 0.0761 A\nsweep_step = 0.001 A\n");
  const auto v = sweep_values(c);
  ASSERT_EQ(v.size(), 10u);
  EXPECT_NEAR(v[8], 0.0752, 1e-15);
  EXPECT_EQ(v.back(), 0.0761);
  c = parse_config("sweep_parameter = z_max\nsweep_start = 200 um\nsweep_stop = 300 um\nsweep_step = 50 um\n");
  EXPECT_EQ(sweep_values(c).size(), 3u);
  EXPECT_THROW(parse_config("sweep_parameter = z_max\n"), ConfigError);  // bounds in amperes
}

TEST(Config, LayoutFromConfig) {
  const auto c = parse_config("i_middle = 0.065 A\nordering = intuitive\nmoment = 0.5\n");
  const auto l = make_layout(c);
  EXPECT_EQ(l.ordering, chip::Ordering::intuitive);
  EXPECT_DOUBLE_EQ(l.wire(chip::WireId::middle).current, 0.065);
  EXPECT_DOUBLE_EQ(l.mu_eff, chip::physical_moment);
  EXPECT_DOUBLE_EQ(l.omega_z, phys::two_pi * 20.0);
  EXPECT_DOUBLE_EQ(l.z_max, 250e-6);
  const auto g = make_sim_grid(c);
  EXPECT_DOUBLE_EQ(g.origin[0], -10e-6);
  EXPECT_DOUBLE_EQ(g.origin[1], 0.6e-6);
}

TEST(Bench, ThreadCounts) {
  EXPECT_EQ(bench_thread_counts("auto", 1), (std::vector<unsigned>{1}));
  EXPECT_EQ(bench_thread_counts("auto", 8), (std::vector<unsigned>{1, 2, 4, 8}));
  EXPECT_EQ(bench_thread_counts("auto", 6), (std::vector<unsigned>{1, 2, 4, 6}));
  EXPECT_EQ(bench_thread_counts("1, 3", 8), (std::vector<unsigned>{1, 3}));
  EXPECT_THROW(bench_thread_counts("0", 8), ConfigError);
  EXPECT_THROW(bench_thread_counts("two", 8), ConfigError);
}

TEST(Bench, ReportAndCsv) {
  const auto out = scratch("bench");
  const auto c = parse_config("nx = 16\nny = 8\nnz = 32\nbench_warmup = 5\nbench_steps = 30\nbench_threads = 1\n");
  const auto r = run_bench(quiet(c, out));
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_GT(r.points[0].median, 0.0);
  EXPECT_LE(r.points[0].min, r.points[0].median);
  EXPECT_GE(r.points[0].max, r.points[0].median);
  EXPECT_EQ(r.speedup(1), 1.0);
  std::ifstream csv(out / "bench.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "threads,steps_per_sec");
  EXPECT_TRUE(verify_manifest(out));
}

TEST(Manifest, ChecksumsDetectTampering) {
  const auto out = scratch("manifest");
  run_threemode(quiet(parse_config("tm_total_time = 10\n"), out));
  std::string why;
  EXPECT_TRUE(verify_manifest(out, &why)) << why;
  EXPECT_FALSE(fs::exists(out / "run.json.tmp"));
  const auto j = json::parse(slurp(out / "run.json"));
  EXPECT_EQ(j.at("command"), "threemode");
  EXPECT_EQ(j.at("config").at("tm_total_time"), "10");
  EXPECT_FALSE(j.at("started").get<std::string>().empty());
  { std::ofstream(out / "threemode.csv", std::ios::app) << "x"; }
  EXPECT_FALSE(verify_manifest(out, &why));
  EXPECT_NE(why.find("threemode.csv"), std::string::npos);
}

TEST(Sha256, KnownVector) {
  const auto p = scratch("sha");
  fs::create_directories(p);
  { std::ofstream(p / "abc") << "abc"; }
  EXPECT_EQ(sha256_file(p / "abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ThreeModeRun, CsvAndResults) {
  const auto out = scratch("threemode");
  const auto r = run_threemode(quiet(parse_config(""), out));
  EXPECT_GT(r.result.final_state().population(2), 0.999);
  std::ifstream csv(out / "threemode.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "t,p_l,p_m,p_r,norm");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, r.result.samples.size());
}

TEST(EvolveRun, PipelineOutputs) {
  const auto out = scratch("evolve");
  const auto r = run_evolve(quiet(tiny(), out));
  std::string why;
  EXPECT_TRUE(verify_manifest(out, &why)) << why;
  // Rows at steps 0, 50, ..., 200.
  ASSERT_EQ(r.trace.rows.size(), 5u);
  EXPECT_EQ(r.trace.rows.front().t, 0.0);
  EXPECT_NEAR(r.trace.rows.back().t, 200e-6, 1e-15);
  for (const auto& row : r.trace.rows) {
    EXPECT_NEAR(row.p_l + row.p_m + row.p_r, row.norm, 1e-10);
    EXPECT_NEAR(row.norm, 1.0, 1e-9);
    EXPECT_LT(row.edge, 1e-6);
  }
  EXPECT_GT(r.trace.rows.front().p_l, 0.99);
  EXPECT_TRUE(fs::exists(out / "final.qwf"));
  std::size_t snaps = 0;
  for (const auto& e : fs::directory_iterator(out / "snapshots")) {
    const auto h = [&] {
      std::ifstream in(e.path(), std::ios::binary);
      return qwf::read_header(in);
    }();
    EXPECT_EQ(h.grid.n[1], 1u);
    ++snaps;
  }
  EXPECT_EQ(snaps, 5u);
  const auto j = json::parse(slurp(out / "run.json"));
  EXPECT_GT(j.at("steps_per_sec").get<double>(), 0.0);
  EXPECT_NEAR(j.at("results").at("z_start").get<double>(), 6.0 * coherent_sigma_z(tiny()), 1e-15);
}

TEST(EvolveRun, Deterministic) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_evolve(quiet(tiny("snapshots = 0\nwrite_final_state = false\n"), a));
  run_evolve(quiet(tiny("snapshots = 0\nwrite_final_state = false\n"), b));
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
  EXPECT_EQ(slurp(a / "minima.csv"), slurp(b / "minima.csv"));
}

TEST(EvolveRun, EdgeBreachNamesStage) {
  const auto out = scratch("breach");
  try {
    run_evolve(quiet(tiny("z_start = 3 um\n"), out));
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage, "initial");
  }
  try {
    run_evolve(quiet(tiny("z_start = 60 um\nedge_threshold = 1e-30\n"), scratch("breach2")));
    FAIL();
  } catch (const StageError& e) {
    EXPECT_TRUE(e.stage == "initial" || e.stage == "evolve") << e.stage;
  }
}

TEST(SweepRun, OneRowPerOrdering) {
  const auto out = scratch("sweep");
  const auto r = run_sweep(quiet(tiny("sweep_start = 0.07 A\nsweep_stop = 0.07 A\nsnapshots = 0\n"
                                      "write_final_state = false\ntotal_time = 100 us\n"),
                                 out));
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].ordering, "counter_intuitive");
  EXPECT_EQ(r.rows[1].ordering, "intuitive");
  std::ifstream csv(out / "sweep.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "i_middle,p_r_counter_intuitive,p_r_intuitive");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 1u);
  EXPECT_TRUE(verify_manifest(out));
  EXPECT_TRUE(verify_manifest(out / "runs" / "intuitive_000"));
}

#ifdef SIM_EXECUTABLE
TEST(Cli, FailingStageIsReported) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  auto run = [&](const std::string& cfg, const std::string& cmd) {
    { std::ofstream(dir / "c.cfg") << cfg; }
    const std::string line = std::string(SIM_EXECUTABLE) + " " + cmd + " --config " +
                             (dir / "c.cfg").string() + " --out " + (dir / "out").string() +
                             " --threads 1 2> " + (dir / "err.txt").string() + " > /dev/null";
    const int status = std::system(line.c_str());
    return std::make_pair(WEXITSTATUS(status), slurp(dir / "err.txt"));
  };
  auto [code, err] = run("z_max = 250\n", "evolve");
  EXPECT_NE(code, 0);
  EXPECT_NE(err.find("stage 'config'"), std::string::npos) << err;
  std::tie(code, err) = run("nx = 32\nny = 8\nnz = 64\nz_start = 3 um\n", "evolve");
  EXPECT_NE(code, 0);
  EXPECT_NE(err.find("stage 'initial'"), std::string::npos) << err;
  std::tie(code, err) = run("tm_total_time = 5\n", "threemode");
  EXPECT_EQ(code, 0) << err;
}
#endif
