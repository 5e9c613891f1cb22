#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "deqmcl/deqmcl.hpp"
#include "deqmcl/harness/config.hpp"
#include "deqmcl/harness/oracle_check.hpp"
#include "deqmcl/harness/render.hpp"
#include "deqmcl/harness/runner.hpp"
#include "deqmcl/harness/trace.hpp"

namespace fs = std::filesystem;
using namespace deqmcl;

namespace {

fs::path output_dir(const std::string& flag, const ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DEQMCL_OUT"); env != nullptr && *env != '\0') return env;
  return cfg.outputs;
}

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed,
                     const std::string& methods) {
  if (seed) cfg.master_seed = *seed;
  if (!methods.empty()) {
    cfg.methods.clear();
    std::stringstream ss(methods);
    std::string m;
    while (std::getline(ss, m, ',')) cfg.methods.push_back(parse_method(m));
  }
}

int cmd_run(const std::string& config, const std::optional<std::uint64_t>& seed,
            const std::string& methods, const std::string& out_flag, unsigned jobs,
            bool no_traces) {
  auto cfg = load_config(config);
  apply_overrides(cfg, seed, methods);
  const fs::path out = output_dir(out_flag, cfg);
  const auto res = run_experiment(cfg, out, jobs, !no_traces);
  std::cout << report_text(cfg, res);
  std::cout << "\nwrote " << (out / "summary.csv").string() << '\n';
  for (const auto& t : res.trials)
    if (t.failed)
      std::cerr << "warning: " << method_name(t.method) << " trial " << t.trial
                << " failed: " << t.failure << '\n';
  return 0;
}

int cmd_oracle(const std::string& config, const std::optional<std::uint64_t>& seed,
               const std::string& out_flag) {
  auto cfg = load_config(config);
  apply_overrides(cfg, seed, "");
  const fs::path out = output_dir(out_flag, cfg);
  fs::create_directories(out);
  const auto r = run_oracle_check(cfg);
  write_file(out / "oracle_tv.csv", oracle_tv_csv(r));
  std::cout << "lattice states: " << r.n_states << ", seeds: " << cfg.oracle.seeds << '\n';
  std::cout << "mean TV per (t, offset):\n";
  for (const auto& [key, tv] : r.mean_tv)
    std::cout << "  t=" << key.first << " offset=" << key.second << "  " << fmt_num(tv) << '\n';
  std::cout << "worst mean TV " << fmt_num(r.worst_mean_tv) << " (threshold "
            << fmt_num(cfg.oracle.tv_threshold) << "), " << fmt_num(r.seconds) << " s\n";
  std::cout << "wrote " << (out / "oracle_tv.csv").string() << '\n';
  return r.worst_mean_tv <= cfg.oracle.tv_threshold ? 0 : 1;
}

int cmd_render(const std::string& config, const std::string& trace, const std::string& out_flag,
               std::optional<std::size_t> step) {
  const auto cfg = load_config(config);
  const auto grid = load_grid_file(cfg.map_path.string());
  const fs::path out = output_dir(out_flag, cfg);
  fs::create_directories(out);
  std::size_t written = 0;
  for (const auto& j : read_trace(trace)) {
    if (j.value("kind", "") != "step" || !j.contains("clouds")) continue;
    const auto rec = step_record_from(j);
    if (step && rec.t != *step) continue;
    const fs::path file =
        out / (rec.method + "_trial" + std::to_string(rec.trial) + "_t" + std::to_string(rec.t) + ".svg");
    write_file(file, render_snapshot(rec, grid));
    ++written;
  }
  if (written == 0) {
    std::cerr << "no trace records with particle clouds"
              << (step ? " at step " + std::to_string(*step) : std::string()) << '\n';
    return 1;
  }
  std::cout << "wrote " << written << " snapshot(s) to " << out.string() << '\n';
  return 0;
}

int cmd_map_check(const std::string& config) {
  const auto cfg = load_config(config);
  const auto grid = load_grid_file(cfg.map_path.string());
  std::cout << "map " << cfg.map_path.string() << ": " << grid.width() << " x " << grid.height()
            << " cells at " << grid.resolution() << ", " << grid.free_cell_count()
            << " free\n";
  try {
    const World world = build_world(cfg);
    const auto poses = rollout(cfg.start, world.plan);
    const Pose& end = poses.back();
    std::cout << "plan: " << world.plan.horizon() << " actions, rollout collisions "
              << rollout_collisions(world.grid, cfg.start, world.plan, cfg.filter.collision_step)
              << ", end pose (" << end.x << ", " << end.y << "), distance to start "
              << std::hypot(end.x - cfg.start.x, end.y - cfg.start.y) << '\n';
    std::size_t blocked = 0;
    for (std::size_t k = 0; k < cfg.n_trials; ++k) blocked += simulate_truth(cfg, world, k).blocked_steps;
    std::cout << "noisy truth: " << blocked << " blocked steps over " << cfg.n_trials
              << " trials\n";
  } catch (const PlanError& e) {
    std::cout << "plan rejected: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Queue-based Monte-Carlo localization benchmark"};
  app.require_subcommand(1);

  std::string config, methods, out, trace;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> step;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool no_traces = false;

  auto* run = app.add_subcommand("run", "run the localization experiment");
  run->add_option("--config", config, "experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--methods", methods, "comma-separated subset of methods");
  run->add_option("--out", out, "output directory");
  run->add_option("--jobs", jobs, "worker threads");
  run->add_flag("--no-traces", no_traces, "skip per-trial trace files");

  auto* oracle = app.add_subcommand("oracle", "compare DEQ-MCL marginals with exact inference");
  oracle->add_option("--config", config, "oracle config")->required()->check(CLI::ExistingFile);
  oracle->add_option("--seed", seed, "override the master seed");
  oracle->add_option("--out", out, "output directory");

  auto* render = app.add_subcommand("render", "render SVG snapshots from a trace");
  render->add_option("--config", config, "experiment config (for the map)")
      ->required()
      ->check(CLI::ExistingFile);
  render->add_option("--trace", trace, "trace file (.ndjson)")->required()->check(CLI::ExistingFile);
  render->add_option("--step", step, "only this step");
  render->add_option("--out", out, "output directory");

  auto* check = app.add_subcommand("map-check", "audit the plan rollout against the map");
  check->add_option("--config", config, "experiment config")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed, methods, out, jobs, no_traces);
    if (*oracle) return cmd_oracle(config, seed, out);
    if (*render) return cmd_render(config, trace, out, step);
    if (*check) return cmd_map_check(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
