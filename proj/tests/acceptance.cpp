// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Tolerances are fixed here, not read from configs.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "deqmcl/deqmcl.hpp"
#include "deqmcl/harness/config.hpp"
#include "deqmcl/harness/oracle_check.hpp"
#include "deqmcl/harness/runner.hpp"

using namespace deqmcl;
namespace fs = std::filesystem;

namespace {

constexpr double kOracleTv = 0.05;
constexpr double kOracleSeconds = 60.0;
constexpr double kMinRelativeGain = 0.10;
constexpr double kSignFlipAlpha = 0.05;
constexpr double kPaperSeconds = 600.0;
constexpr double kSmoothingShare = 0.80;
constexpr std::size_t kSmoothingSeeds = 20;
constexpr std::size_t kResampleVectors = 1000;
constexpr double kStepErrorTol = 1e-12;
constexpr std::size_t kReductionSteps = 100;

const fs::path kData = DEQMCL_DATA_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Verdict& v) {
  std::printf("criterion %d %-28s %s  %s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

template <class F>
Verdict guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }
bool same_bits(const Pose& a, const Pose& b) {
  return same_bits(a.x, b.x) && same_bits(a.y, b.y) && same_bits(a.theta, b.theta);
}

// ---------------------------------------------------------------- 1

Verdict oracle_equivalence() {
  const auto cfg = load_config(kData / "tiny.cfg");
  const auto r = run_oracle_check(cfg);
  const bool ok = r.worst_mean_tv <= kOracleTv && r.seconds < kOracleSeconds;
  return {ok, fmt("%zu states, L=%zu, n=%zu, %zu seeds: worst mean TV %.4f (<= %.2f), %.1f s",
                  r.n_states, cfg.filter_for(Method::deq_mcl).lag,
                  cfg.filter_for(Method::deq_mcl).n_particles, cfg.oracle.seeds, r.worst_mean_tv,
                  kOracleTv, r.seconds)};
}

// ---------------------------------------------------------------- 2

struct Scenario {
  ActionPlan plan;
  std::vector<DepthScan> scans;
};

Scenario scenario(const OccupancyGrid& g, const Pose& start, const std::vector<Action>& actions,
                  const BeamConfig& beams, std::uint64_t seed) {
  Scenario s;
  s.plan.actions = actions;
  RandomStream rng(seed);
  Pose x = start;
  for (const auto& a : actions) {
    x = step_true(x, a, {0.05, 0.01, 0.0}, rng);
    s.scans.push_back(sense(g, x, beams, {0, 0, 1.0}, rng));
  }
  return s;
}

InitSampler<Pose> around(const Pose& p) {
  return [p](RandomStream& rng) {
    const double x = p.x + 2.0 * rng.normal();
    const double y = p.y + 2.0 * rng.normal();
    return Pose(x, y, p.theta + 0.1 * rng.normal());
  };
}

FilterConfig reduction_cfg() {
  FilterConfig c;
  c.n_particles = 300;
  c.lag = 0;
  c.motion_noise = {0.2, 0.05, 0.0};
  c.sensor_sigma = 1.5;
  return c;
}

template <class A, class B>
bool sets_equal(const ParticleSet<Pose>& a, const B& b, A&& pose_of_b) {
  for (std::size_t i = 0; i < a.states.size(); ++i)
    if (!same_bits(a.states[i], pose_of_b(b, i)) || !same_bits(a.log_weights[i], b.log_weights[i]))
      return false;
  return true;
}

Verdict reductions() {
  const BeamConfig beams{{-0.5, 0.0, 0.5}, 60.0, 0.5};
  std::vector<std::string> broken;

  {  // DEQ-MCL with L = 0 on an empty map
    const OccupancyGrid g(400, 400, 1.0);
    const Pose start(200, 200, 0);
    const auto sc = scenario(g, start, std::vector<Action>(kReductionSteps, {1.0, 0.05}), beams, 3);
    const auto cfg = reduction_cfg();
    const PlanarModel model(g, cfg, beams);
    RandomStream r1(42), r2(42);
    auto a = mcl_init(model, cfg, around(start), r1);
    auto q = deq_init(model, cfg, around(start), sc.plan, r2);
    bool ok = true;
    for (std::size_t t = 1; t <= kReductionSteps && ok; ++t) {
      mcl_step(a, sc.plan.at(t), sc.scans[t - 1], model, cfg, r1);
      deq_step(q, t, sc.plan.at(t), sc.scans[t - 1], sc.plan, model, cfg, r2);
      ok = sets_equal(a, q, [](const auto& s, std::size_t i) { return s.at(i, 0); });
    }
    if (!ok) broken.push_back("deq(L=0)");
  }

  OccupancyGrid corridor(60, 20, 1.0);
  corridor.fill_cells(0, 0, 60, 1);
  corridor.fill_cells(0, 19, 60, 20);
  corridor.fill_cells(0, 0, 1, 20);
  corridor.fill_cells(59, 0, 60, 20);
  const Pose start(10, 10, 0);
  std::vector<Action> actions(kReductionSteps, Action{0.4, 0.0});
  for (std::size_t k = 0; k < actions.size(); k += 10) actions[k].omega = k % 20 ? -0.3 : 0.3;

  {  // map-motion MCL with beta = 0
    const auto sc = scenario(corridor, start, actions, beams, 4);
    auto cfg = reduction_cfg();
    cfg.beta = 0.0;
    const PlanarModel model(corridor, cfg, beams);
    RandomStream r1(7), r2(7);
    auto a = mcl_init(model, cfg, around(start), r1);
    auto b = mcl_init(model, cfg, around(start), r2);
    bool ok = true;
    for (std::size_t t = 1; t <= kReductionSteps && ok; ++t) {
      mcl_step(a, sc.plan.at(t), sc.scans[t - 1], model, cfg, r1);
      mcl_map_motion_step(b, sc.plan.at(t), sc.scans[t - 1], model, cfg, r2);
      ok = sets_equal(a, b, [](const auto& s, std::size_t i) { return s.states[i]; });
    }
    if (!ok) broken.push_back("map-motion(beta=0)");
  }

  {  // smoother with L = 0
    const auto sc = scenario(corridor, start, actions, beams, 5);
    const auto cfg = reduction_cfg();
    const PlanarModel model(corridor, cfg, beams);
    RandomStream r1(8), r2(8);
    auto a = mcl_init(model, cfg, around(start), r1);
    auto q = smoother_init(model, cfg, around(start), sc.plan, r2);
    bool ok = true;
    for (std::size_t t = 1; t <= kReductionSteps && ok; ++t) {
      mcl_step(a, sc.plan.at(t), sc.scans[t - 1], model, cfg, r1);
      mcl_smoother_step(q, t, sc.plan.at(t), sc.scans[t - 1], sc.plan, model, cfg, r2);
      ok = sets_equal(a, q, [](const auto& s, std::size_t i) { return s.at(i, 0); });
    }
    if (!ok) broken.push_back("smoother(L=0)");
  }

  if (broken.empty()) return {true, fmt("three reductions bit-exact over %zu steps", kReductionSteps)};
  std::string d = "not bit-exact:";
  for (const auto& b : broken) d += ' ' + b;
  return {false, d};
}

// ---------------------------------------------------------------- 3, 4

struct PaperRun {
  ExperimentResult result;
  double seconds = 0.0;
};

const SummaryRow* row_of(const ExperimentResult& r, Method m) {
  for (const auto& row : r.summary)
    if (row.method == m) return &row;
  return nullptr;
}

Verdict table_ordering(const PaperRun& run) {
  const auto& r = run.result;
  const Method order[] = {Method::deq_mcl, Method::mcl_smoother, Method::mcl_map_motion, Method::mcl};
  std::vector<double> rmse;
  std::size_t failed = 0;
  for (auto m : order) {
    const auto* row = row_of(r, m);
    if (!row) return {false, "method missing from paper.cfg: " + method_name(m)};
    rmse.push_back(row->rmse_mean);
    failed += row->trials_failed;
  }
  const bool ordered = rmse[0] < rmse[1] && rmse[1] < rmse[2] && rmse[2] < rmse[3];
  const double gain = 1.0 - rmse[0] / rmse[3];

  std::vector<double> deq, mcl;
  for (const auto& t : r.trials) {
    if (t.method == Method::deq_mcl) deq.push_back(t.failed ? NAN : t.metrics.rmse);
    if (t.method == Method::mcl) mcl.push_back(t.failed ? NAN : t.metrics.rmse);
  }
  double p = 1.0;
  if (failed == 0 && deq.size() == mcl.size() && !deq.empty()) {
    std::vector<double> d;
    for (std::size_t i = 0; i < deq.size(); ++i) d.push_back(mcl[i] - deq[i]);
    p = paired_sign_flip_pvalue(d);
  }
  const bool ok = failed == 0 && ordered && gain >= kMinRelativeGain && p < kSignFlipAlpha &&
                  run.seconds < kPaperSeconds;
  return {ok, fmt("RMSE deq %.3f, smoother %.3f, map-motion %.3f, mcl %.3f; ordered=%s, "
                  "gain %.1f%% (>= %.0f%%), sign-flip p=%.4f (< %.2f), failed trials %zu, %.0f s",
                  rmse[0], rmse[1], rmse[2], rmse[3], ordered ? "yes" : "no", 100.0 * gain,
                  100.0 * kMinRelativeGain, p, kSignFlipAlpha, failed, run.seconds)};
}

Verdict entropy_variance(const PaperRun& run) {
  const auto* deq = row_of(run.result, Method::deq_mcl);
  const auto* mcl = row_of(run.result, Method::mcl);
  if (!deq || !mcl) return {false, "paper.cfg must run deq-mcl and mcl"};
  const double vd = deq->variance.x + deq->variance.y;
  const double vm = mcl->variance.x + mcl->variance.y;
  const bool ok = deq->trials_failed == 0 && mcl->trials_failed == 0 &&
                  deq->entropy_mean < mcl->entropy_mean && vd < vm;
  return {ok, fmt("entropy %.3f vs %.3f nats, positional variance %.2f vs %.2f (deq vs mcl)",
                  deq->entropy_mean, mcl->entropy_mean, vd, vm)};
}

// ---------------------------------------------------------------- 5

Verdict smoothing_reduction() {
  auto cfg = load_config(kData / "corridor.cfg");
  const World world = build_world(cfg);
  const FilterConfig fcfg = cfg.filter_for(Method::mcl_smoother);
  const PlanarModel model(world.grid, fcfg, cfg.beams);
  const std::size_t L = fcfg.lag;
  if (L == 0) return {false, "corridor.cfg needs a positive lag"};
  std::size_t pairs = 0, reduced = 0;
  for (std::size_t seed = 0; seed < kSmoothingSeeds; ++seed) {
    const auto truth = simulate_truth(cfg, world, seed);
    auto rng = derive_stream(cfg.master_seed, "filter/mcl-smoother", seed);
    MethodFilter f(Method::mcl_smoother, fcfg, model, make_init_sampler(cfg, world.grid), world.plan,
                   rng);
    std::vector<double> filtered(world.plan.horizon() + 1, 0.0);
    for (std::size_t t = 1; t <= world.plan.horizon(); ++t) {
      f.step(t, world.plan.at(t), truth.scans[t - 1], rng);
      const auto v0 = belief_variance(f.marginal(0));
      filtered[t] = v0.x + v0.y;
      if (t > L) {
        const auto vl = belief_variance(f.marginal(-static_cast<int>(L)));
        ++pairs;
        if (vl.x + vl.y <= filtered[t - L]) ++reduced;
      }
    }
  }
  const double share = static_cast<double>(reduced) / static_cast<double>(pairs);
  return {share >= kSmoothingShare,
          fmt("%zu seeds, L=%zu: offset -L variance <= filtered variance in %zu/%zu pairs "
              "(%.1f%%, need %.0f%%)",
              kSmoothingSeeds, L, reduced, pairs, 100.0 * share, 100.0 * kSmoothingShare)};
}

// ---------------------------------------------------------------- 6

Verdict resampling_bound() {
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<std::size_t> size_dist(1, 200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0;
  for (std::size_t k = 0; k < kResampleVectors; ++k) {
    const std::size_t n = size_dist(gen);
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) {
      // A mix of zeros, tiny and ordinary weights.
      const double r = u(gen);
      x = r < 0.2 ? 0.0 : (r < 0.3 ? 1e-9 * u(gen) : u(gen));
      total += x;
    }
    if (total == 0.0) w[0] = total = 1.0;
    for (auto& x : w) x /= total;
    RandomStream rng(k + 1);
    const auto idx = systematic_resample(w, rng);
    std::vector<std::size_t> count(n, 0);
    for (auto i : idx) ++count[i];
    for (std::size_t i = 0; i < n; ++i) {
      const double expect = static_cast<double>(n) * w[i];
      const double lo = std::floor(expect), hi = std::ceil(expect);
      if (static_cast<double>(count[i]) < lo || static_cast<double>(count[i]) > hi) ++violations;
    }
    if (idx.size() != n) ++violations;
  }
  return {violations == 0,
          fmt("%zu random weight vectors, %zu bound violations", kResampleVectors, violations)};
}

// ---------------------------------------------------------------- 7

Verdict step_error_examples() {
  auto one = [](Pose p) { return BeliefSnapshot<Pose>{0, 0, {p}, {1.0}}; };
  const double e0 = step_error(one({0, 0, 0}), {0, 0, 0}).e;
  const double e5 = step_error(one({3, 4, 0}), {0, 0, 0}).e;
  const double e2 = step_error(one({0, 0, 0}), {0, 0, std::numbers::pi}).e;
  const bool ok = std::abs(e0) <= kStepErrorTol && std::abs(e5 - 5.0) <= kStepErrorTol &&
                  std::abs(e2 - 2.0) <= kStepErrorTol;
  return {ok, fmt("errors %.15g, %.15g, %.15g (want 0, 5, 2 within 1e-12)", e0, e5, e2)};
}

// ---------------------------------------------------------------- 8

Verdict cli_determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no --cli given"};
  const auto cfg = (kData / "paper.cfg").string();
  std::vector<std::string> outputs;
  for (int k = 0; k < 2; ++k) {
    const fs::path out = work / ("determinism_" + std::to_string(k));
    fs::remove_all(out);
    const std::string cmd = "\"" + cli + "\" run --config \"" + cfg + "\" --seed 7 --no-traces --out \"" +
                            out.string() + "\" > \"" + (work / "determinism.log").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, fmt("cli exited with status %d", rc)};
    outputs.push_back(slurp(out / "summary.csv"));
  }
  const bool ok = outputs[0] == outputs[1] && !outputs[0].empty();
  return {ok, fmt("two runs with --seed 7: summary.csv %s (%zu bytes)",
                  ok ? "byte-identical" : "differs", outputs[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEQ-MCL acceptance run"};
  std::string cli;
  std::string work = (fs::temp_directory_path() / "deqmcl_acceptance").string();
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--cli", cli, "path to the deqmcl executable (criterion 8)");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--jobs", jobs, "worker threads for the paper.cfg run");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  report(1, "oracle-equivalence", guarded(oracle_equivalence));
  report(2, "reduction-identities", guarded(reductions));

  PaperRun paper;
  Verdict paper_error;
  try {
    const auto cfg = load_config(kData / "paper.cfg");
    const auto t0 = std::chrono::steady_clock::now();
    paper.result = run_experiment(cfg, fs::path(work) / "paper", jobs, false);
    paper.seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    paper_error = {false, std::string("exception: ") + e.what()};
  }
  if (!paper_error.detail.empty()) {
    report(3, "table-ordering", paper_error);
    report(4, "entropy-variance", paper_error);
  } else {
    report(3, "table-ordering", guarded([&] { return table_ordering(paper); }));
    report(4, "entropy-variance", guarded([&] { return entropy_variance(paper); }));
  }

  report(5, "smoothing-variance", guarded(smoothing_reduction));
  report(6, "resampling-bound", guarded(resampling_bound));
  report(7, "step-error-examples", guarded(step_error_examples));
  report(8, "cli-determinism", guarded([&] { return cli_determinism(cli, work); }));

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
