#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "deqmcl/filters/mcl.hpp"
#include "deqmcl/filters/model.hpp"
#include "deqmcl/filters/queue_filter.hpp"
#include "deqmcl/harness/config.hpp"
#include "deqmcl/harness/trace.hpp"
#include "deqmcl/metrics.hpp"
#include "deqmcl/random.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

struct World {
  OccupancyGrid grid;
  ActionPlan plan;
};

inline World build_world(const ExperimentConfig& cfg) {
  OccupancyGrid grid = load_grid_file(cfg.map_path.string());
  ActionPlan plan;
  if (!cfg.explicit_actions.empty()) {
    plan.actions = cfg.explicit_actions;
  } else {
    plan = build_loop_plan(grid, cfg.start, cfg.waypoints, cfg.v_step, cfg.omega_step,
                           cfg.filter.collision_step);
  }
  if (plan.horizon() == 0) throw ConfigError("plan is empty");
  return {std::move(grid), std::move(plan)};
}

struct GroundTruth {
  std::vector<Pose> poses;  // x_0 .. x_T
  std::vector<DepthScan> scans;  // o_1 .. o_T at scans[t - 1]
  std::size_t blocked_steps = 0;
};

/// Noisy execution of the plan. A step whose motion segment would enter an
/// obstacle keeps its new heading but not its translation (the robot bumps).
/// Depends only on (master seed, trial), never on the method.
inline GroundTruth simulate_truth(const ExperimentConfig& cfg, const World& world,
                                  std::size_t trial) {
  auto truth_rng = derive_stream(cfg.master_seed, "truth", trial);
  auto sensor_rng = derive_stream(cfg.master_seed, "sensor", trial);
  GroundTruth g;
  g.poses.reserve(world.plan.horizon() + 1);
  g.poses.push_back(cfg.start);
  for (std::size_t t = 1; t <= world.plan.horizon(); ++t) {
    const Pose& prev = g.poses.back();
    Pose next = step_true(prev, world.plan.at(t), cfg.noise, truth_rng);
    if (segment_collision_count(world.grid, prev.position(), next.position(),
                                cfg.filter.collision_step) > 0) {
      next = Pose(prev.x, prev.y, next.theta);
      ++g.blocked_steps;
    }
    g.poses.push_back(next);
    g.scans.push_back(sense(world.grid, next, cfg.beams, cfg.noise, sensor_rng));
  }
  return g;
}

inline InitSampler<Pose> make_init_sampler(const ExperimentConfig& cfg, const OccupancyGrid& grid) {
  const Pose start = cfg.start;
  const InitialBelief init = cfg.init;
  if (init.kind == InitialBelief::Kind::uniform) {
    const double w = grid.world_width(), h = grid.world_height();
    return [w, h](RandomStream& rng) {
      const double x = rng.uniform() * w;
      const double y = rng.uniform() * h;
      const double th = (2.0 * rng.uniform() - 1.0) * std::numbers::pi;
      return Pose(x, y, th);
    };
  }
  return [start, init](RandomStream& rng) {
    const double x = start.x + init.sigma_xy * rng.normal();
    const double y = start.y + init.sigma_xy * rng.normal();
    const double th = start.theta + init.sigma_theta * rng.normal();
    return Pose(x, y, th);
  };
}

/// Uniform handle over the flat and the queue filters.
class MethodFilter {
public:
  MethodFilter(Method method, const FilterConfig& cfg, const PlanarModel& model,
               const InitSampler<Pose>& init, const ActionPlan& plan, RandomStream& rng)
      : method_(method), cfg_(cfg), model_(&model), plan_(&plan) {
    switch (method) {
      case Method::mcl:
      case Method::mcl_map_motion: state_ = mcl_init(model, cfg, init, rng); break;
      case Method::mcl_smoother: state_ = smoother_init(model, cfg, init, plan, rng); break;
      case Method::deq_mcl: state_ = deq_init(model, cfg, init, plan, rng); break;
    }
  }

  void step(std::size_t t, const Action& executed, const DepthScan& scan, RandomStream& rng) {
    switch (method_) {
      case Method::mcl:
        mcl_step(std::get<0>(state_), executed, scan, *model_, cfg_, rng);
        break;
      case Method::mcl_map_motion:
        mcl_map_motion_step(std::get<0>(state_), executed, scan, *model_, cfg_, rng);
        break;
      case Method::mcl_smoother:
        mcl_smoother_step(std::get<1>(state_), t, executed, scan, *plan_, *model_, cfg_, rng);
        break;
      case Method::deq_mcl:
        deq_step(std::get<1>(state_), t, executed, scan, *plan_, *model_, cfg_, rng);
        break;
    }
  }

  std::size_t past() const { return state_.index() == 0 ? 0 : std::get<1>(state_).past; }
  std::size_t future() const { return state_.index() == 0 ? 0 : std::get<1>(state_).future; }
  std::size_t past_lag() const {
    return state_.index() == 0 ? 0 : std::get<1>(state_).shape.past_lag;
  }

  double ess() const {
    return state_.index() == 0 ? std::get<0>(state_).last_ess : std::get<1>(state_).last_ess;
  }

  BeliefSnapshot<Pose> marginal(int offset) const {
    if (state_.index() == 0) {
      if (offset != 0) throw std::out_of_range("flat filter only holds offset 0");
      return belief_of(std::get<0>(state_));
    }
    return queue_marginal(std::get<1>(state_), offset);
  }

private:
  Method method_;
  FilterConfig cfg_;
  const PlanarModel* model_;
  const ActionPlan* plan_;
  std::variant<ParticleSet<Pose>, QueueState<Pose>> state_;
};

struct TrialResult {
  Method method = Method::mcl;
  std::size_t trial = 0;
  bool failed = false;
  std::string failure;
  TrialMetrics metrics;
  std::size_t blocked_steps = 0;
};

inline EstimateRecord score_estimate(const std::string& method, std::size_t trial,
                                     const BeliefSnapshot<Pose>& b, const Pose& truth,
                                     const MetricsConfig& mc) {
  EstimateRecord r;
  r.method = method;
  r.trial = trial;
  r.t = b.time;
  r.offset = b.offset;
  r.truth = truth;
  r.mean = belief_mean(b);
  r.e = pose_error(r.mean, truth);
  r.entropy = belief_entropy(b, mc.entropy_cell, mc.heading_bins);
  r.variance = belief_variance(b);
  return r;
}

inline std::vector<OffsetCloud> clouds_of(const MethodFilter& f) {
  std::vector<int> offsets{0};
  if (f.past() > 0) offsets.insert(offsets.begin(), -static_cast<int>(f.past()));
  if (f.future() > 0) offsets.push_back(static_cast<int>(f.future()));
  std::vector<OffsetCloud> out;
  for (int off : offsets) {
    const auto b = f.marginal(off);
    OffsetCloud c;
    c.offset = off;
    c.points.reserve(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) c.points.push_back({b.states[i], b.weights[i]});
    out.push_back(std::move(c));
  }
  return out;
}

using RecordSink = std::function<void(const nlohmann::json&)>;

/// One (method, trial) run. Filters receive the commanded plan actions and
/// the scans of the shared ground truth.
inline TrialResult run_trial(const ExperimentConfig& cfg, const World& world, Method method,
                             std::size_t trial, const RecordSink& sink = {}) {
  const std::string name = method_name(method);
  const FilterConfig fcfg = cfg.filter_for(method);
  const GroundTruth truth = simulate_truth(cfg, world, trial);
  const PlanarModel model(world.grid, fcfg, cfg.beams);
  auto rng = derive_stream(cfg.master_seed, "filter/" + name, trial);

  TrialResult result;
  result.method = method;
  result.trial = trial;
  result.blocked_steps = truth.blocked_steps;

  std::vector<EstimateRecord> scored;
  const std::size_t T = world.plan.horizon();
  try {
    MethodFilter filter(method, fcfg, model, make_init_sampler(cfg, world.grid), world.plan, rng);
    const bool lagged = cfg.metrics.evaluation == Evaluation::lagged;
    const std::size_t lag = lagged ? filter.past_lag() : 0;
    auto emit_estimate = [&](int offset) {
      const auto b = filter.marginal(offset);
      auto rec = score_estimate(name, trial, b, truth.poses[b.time], cfg.metrics);
      if (sink) sink(to_json(rec));
      scored.push_back(std::move(rec));
    };
    for (std::size_t t = 1; t <= T; ++t) {
      filter.step(t, world.plan.at(t), truth.scans[t - 1], rng);

      StepRecord step;
      step.method = name;
      step.trial = trial;
      step.t = t;
      step.truth = truth.poses[t];
      step.current_mean = belief_mean(filter.marginal(0));
      step.e_t = pose_error(step.current_mean, step.truth);
      step.ess = filter.ess();
      if (cfg.cloud_every > 0 && t % cfg.cloud_every == 0) step.clouds = clouds_of(filter);
      if (sink) sink(to_json(step));

      if (t > lag) emit_estimate(-static_cast<int>(lag));
      if (t == T) {
        const std::size_t first = T > lag ? T - lag + 1 : 1;
        for (std::size_t j = first; j <= T; ++j)
          emit_estimate(static_cast<int>(j) - static_cast<int>(T));
      }
    }
  } catch (const DegeneracyError& e) {
    result.failed = true;
    result.failure = e.what();
    if (sink) sink({{"kind", "failure"}, {"method", name}, {"trial", trial}, {"reason", e.what()}});
    return result;
  }

  std::vector<StepError> errors;
  double entropy = 0.0;
  PoseVariance var;
  for (const auto& r : scored) {
    errors.push_back({r.t, r.e});
    entropy += r.entropy;
    var.x += r.variance.x;
    var.y += r.variance.y;
    var.c += r.variance.c;
    var.s += r.variance.s;
  }
  const double n = static_cast<double>(scored.size());
  result.metrics.rmse = trial_rmse(errors, cfg.metrics.aggregation);
  result.metrics.errors = std::move(errors);
  result.metrics.entropy = entropy / n;
  result.metrics.variance = {var.x / n, var.y / n, var.c / n, var.s / n};
  return result;
}

struct SummaryRow {
  Method method = Method::mcl;
  std::size_t trials_ok = 0;
  std::size_t trials_failed = 0;
  double rmse_mean = 0.0;
  double rmse_sd = 0.0;
  double entropy_mean = 0.0;
  PoseVariance variance;
};

inline SummaryRow summarize(Method m, const std::vector<TrialResult>& results) {
  SummaryRow row;
  row.method = m;
  std::vector<double> rmse;
  for (const auto& r : results) {
    if (r.method != m) continue;
    if (r.failed) {
      ++row.trials_failed;
      continue;
    }
    ++row.trials_ok;
    rmse.push_back(r.metrics.rmse);
    row.entropy_mean += r.metrics.entropy;
    row.variance.x += r.metrics.variance.x;
    row.variance.y += r.metrics.variance.y;
    row.variance.c += r.metrics.variance.c;
    row.variance.s += r.metrics.variance.s;
  }
  if (row.trials_ok > 0) {
    const double n = static_cast<double>(row.trials_ok);
    row.rmse_mean = mean_of(rmse);
    row.rmse_sd = sample_sd(rmse);
    row.entropy_mean /= n;
    row.variance = {row.variance.x / n, row.variance.y / n, row.variance.c / n,
                    row.variance.s / n};
  }
  return row;
}

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "method,rmse_mean,rmse_sd,entropy_mean,var_x,var_y,var_cos,var_sin\n";
  for (const auto& r : rows) {
    out += method_name(r.method) + ',' + fmt_num(r.rmse_mean) + ',' + fmt_num(r.rmse_sd) + ',' +
           fmt_num(r.entropy_mean) + ',' + fmt_num(r.variance.x) + ',' + fmt_num(r.variance.y) +
           ',' + fmt_num(r.variance.c) + ',' + fmt_num(r.variance.s) + '\n';
  }
  return out;
}

inline std::string trials_csv(const std::vector<TrialResult>& results) {
  std::string out = "method,trial,rmse,entropy,var_x,var_y,var_cos,var_sin\n";
  for (const auto& r : results) {
    out += method_name(r.method) + ',' + std::to_string(r.trial) + ',';
    if (r.failed) {
      out += "nan,nan,nan,nan,nan,nan\n";
      continue;
    }
    const auto& m = r.metrics;
    out += fmt_num(m.rmse) + ',' + fmt_num(m.entropy) + ',' + fmt_num(m.variance.x) + ',' +
           fmt_num(m.variance.y) + ',' + fmt_num(m.variance.c) + ',' + fmt_num(m.variance.s) +
           '\n';
  }
  return out;
}

/// One-sided exact sign-flip test on paired differences (H1: mean > 0).
inline double paired_sign_flip_pvalue(const std::vector<double>& diffs) {
  const std::size_t n = diffs.size();
  if (n == 0 || n > 20) throw std::invalid_argument("sign-flip test needs 1..20 pairs");
  double observed = 0.0;
  for (double d : diffs) observed += d;
  std::size_t at_least = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1u) ? -diffs[i] : diffs[i];
    if (s >= observed - 1e-12) ++at_least;
  }
  return static_cast<double>(at_least) / static_cast<double>(total);
}

struct ExperimentResult {
  std::vector<TrialResult> trials;
  std::vector<SummaryRow> summary;
};

inline std::string report_text(const ExperimentConfig& cfg, const ExperimentResult& res) {
  std::ostringstream out;
  out << "Self-localization benchmark (" << cfg.n_trials << " trials, master seed "
      << cfg.master_seed << ")\n";
  out << "Absolute values are not expected to match the reference results: the map,\n"
         "noise levels and sensor model are reconstructions. Only the ordering of the\n"
         "methods is meaningful.\n\n";
  out << "method           RMSE (SD)            entropy    var_x      var_y      var_cos  "
         "var_sin  failed\n";
  for (const auto& r : res.summary) {
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %8.3f (%8.3f)  %9.3f  %9.3f  %9.3f  %7.4f  %7.4f  %zu\n",
                  method_name(r.method).c_str(), r.rmse_mean, r.rmse_sd, r.entropy_mean,
                  r.variance.x, r.variance.y, r.variance.c, r.variance.s, r.trials_failed);
    out << line;
  }
  std::vector<double> deq, mcl;
  for (const auto& t : res.trials) {
    if (t.failed) continue;
    if (t.method == Method::deq_mcl) deq.push_back(t.metrics.rmse);
    if (t.method == Method::mcl) mcl.push_back(t.metrics.rmse);
  }
  if (!deq.empty() && deq.size() == mcl.size()) {
    std::vector<double> d;
    for (std::size_t i = 0; i < deq.size(); ++i) d.push_back(mcl[i] - deq[i]);
    out << "\npaired sign-flip test, mcl - deq-mcl RMSE > 0: p = "
        << fmt_num(paired_sign_flip_pvalue(d)) << '\n';
  }
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string trace_file_name(Method m, std::size_t trial) {
  return method_name(m) + "_trial" + std::to_string(trial) + ".ndjson";
}

/// Runs every (method, trial) pair, possibly on several threads, and writes
/// summary.csv, trials.csv, report.txt and traces/ under out_dir. Outputs are
/// a pure function of the config.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir, unsigned jobs = 1,
                                       bool write_traces = true) {
  const World world = build_world(cfg);
  std::filesystem::create_directories(out_dir);
  if (write_traces) std::filesystem::create_directories(out_dir / "traces");

  struct Task {
    Method method;
    std::size_t trial;
  };
  std::vector<Task> tasks;
  for (auto m : cfg.methods)
    for (std::size_t k = 0; k < cfg.n_trials; ++k) tasks.push_back({m, k});

  ExperimentResult res;
  res.trials.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        std::unique_ptr<TraceWriter> writer;
        RecordSink sink;
        if (write_traces) {
          writer = std::make_unique<TraceWriter>(
              (out_dir / "traces" / trace_file_name(tasks[i].method, tasks[i].trial)).string());
          sink = [&writer](const nlohmann::json& j) { writer->write(j); };
        }
        res.trials[i] = run_trial(cfg, world, tasks[i].method, tasks[i].trial, sink);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (auto m : cfg.methods) res.summary.push_back(summarize(m, res.trials));
  write_file(out_dir / "trials.csv", trials_csv(res.trials));
  write_file(out_dir / "summary.csv", summary_csv(res.summary));
  write_file(out_dir / "report.txt", report_text(cfg, res));
  if (error) std::rethrow_exception(error);
  return res;
}

}  // namespace deqmcl
