// sim: command-line driver for the chip CTAP simulations.
//
//   sim threemode|potential|groundstate|evolve|sweep|bench --config FILE
//       [--out DIR] [--threads N] [--full-scale]

#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "ctap/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  unsigned threads = 0;
  bool full_scale = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config, "experiment config file (desk preset if omitted)");
  sub->add_option("-o,--out", o.out, "output directory (default: output_dir from the config)");
  sub->add_option("-t,--threads", o.threads, "worker threads (default: config, then SIM_THREADS, then 1)");
  sub->add_flag("--full-scale", o.full_scale, "allow full-scale grids; selects the full preset");
}

int dispatch(const std::string& cmd, const Options& o) {
  using namespace ctap::exp;
  ExperimentConfig cfg;
  try {
    cfg = o.config.empty() ? parse_config("", o.full_scale) : load_config(o.config, o.full_scale);
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  const auto ctx = make_context(cfg, o.out, o.threads);
  std::fprintf(stderr, "sim %s: %s, %u thread(s), output in %s\n", cmd.c_str(), cfg.preset.c_str(),
               ctx.threads, ctx.out_dir.c_str());

  if (cmd == "threemode") {
    const auto r = run_threemode(ctx);
    std::printf("p_l=%.10f p_m=%.10f p_r=%.10f max_p_m=%.6f\n", r.result.final_state().population(0),
                r.result.final_state().population(1), r.result.final_state().population(2),
                r.result.max_population(1));
  } else if (cmd == "potential") {
    const auto r = run_potential(ctx);
    std::printf("%s\n", r.manifest.results.dump().c_str());
  } else if (cmd == "groundstate") {
    const auto r = run_groundstate(ctx);
    std::printf("%s\n", r.manifest.results.dump().c_str());
  } else if (cmd == "evolve") {
    const auto r = run_evolve(ctx);
    std::printf("p_l=%.6f p_m=%.6f p_r=%.6f max_p_m=%.6f\n", r.p_l, r.p_m, r.p_r, r.trace.max_p_m());
  } else if (cmd == "sweep") {
    const auto r = run_sweep(ctx);
    for (const auto& row : r.rows) {
      std::printf("%s=%.6g %s p_r=%.6f\n", cfg.sweep_parameter.c_str(), row.value, row.ordering.c_str(),
                  row.p_r);
    }
  } else if (cmd == "bench") {
    const auto r = run_bench(ctx);
    for (const auto& p : r.points) {
      std::printf("threads=%u steps/s=%.4f speedup=%.3f\n", p.threads, p.median, r.speedup(p.threads));
    }
    std::printf("projected 1e5-step run: %.2f h\n", r.projected_seconds / 3600.0);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chip-based CTAP simulations"};
  app.require_subcommand(1);
  Options o;
  for (const char* name : {"threemode", "potential", "groundstate", "evolve", "sweep", "bench"}) {
    add_common(app.add_subcommand(name), o);
  }
  app.get_subcommand("threemode")->description("three-mode model population transfer");
  app.get_subcommand("potential")->description("assemble the chip potential and guide minima");
  app.get_subcommand("groundstate")->description("transverse ground state of the left guide");
  app.get_subcommand("evolve")->description("full 3D propagation with population traces");
  app.get_subcommand("sweep")->description("repeat evolve over a parameter range, both orderings");
  app.get_subcommand("bench")->description("split-operator kernel throughput per thread count");
  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cmd, o);
  } catch (const ctap::exp::StageError& e) {
    std::fprintf(stderr, "sim %s: %s\n", cmd.c_str(), e.what());
    return e.stage == "config" ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sim %s: stage 'setup' failed: %s\n", cmd.c_str(), e.what());
    return 1;
  }
}
