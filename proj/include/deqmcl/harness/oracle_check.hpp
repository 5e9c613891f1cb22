#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deqmcl/filters/queue_filter.hpp"
#include "deqmcl/harness/config.hpp"
#include "deqmcl/harness/runner.hpp"
#include "deqmcl/oracle.hpp"

namespace deqmcl {

struct OracleTvRow {
  std::size_t seed = 0;
  std::size_t t = 0;
  int offset = 0;
  double tv = 0.0;
};

struct OracleCheckResult {
  std::size_t n_states = 0;
  std::vector<OracleTvRow> rows;
  std::map<std::pair<std::size_t, int>, double> mean_tv;  // (t, offset) -> mean over seeds
  double worst_mean_tv = 0.0;
  double seconds = 0.0;
};

/// Runs DEQ-MCL on the discretized instance described by the config and
/// compares every queue marginal with the exact posterior, for each seed.
/// Sensor noise differs per seed; the true lattice path is the snapped
/// noise-free plan rollout.
inline OracleCheckResult run_oracle_check(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const World world = build_world(cfg);
  const FilterConfig fcfg = cfg.filter_for(Method::deq_mcl);

  std::vector<Action> action_set;
  for (const auto& a : world.plan.actions)
    if (std::find(action_set.begin(), action_set.end(), a) == action_set.end())
      action_set.push_back(a);
  const DiscreteHmm hmm =
      discretize(world.grid, fcfg, cfg.beams, action_set, cfg.oracle.cell, cfg.oracle.heading_bins);
  const DiscreteModel model(hmm);
  const std::size_t n = hmm.size();

  const std::size_t start_state = hmm.state_of(cfg.start);
  const std::size_t start_bin = start_state % static_cast<std::size_t>(hmm.heading_bins());
  std::vector<double> initial(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (s % static_cast<std::size_t>(hmm.heading_bins()) != start_bin) continue;
    const Pose p = hmm.state_pose(s);
    const double d2 = (p.x - cfg.start.x) * (p.x - cfg.start.x) +
                      (p.y - cfg.start.y) * (p.y - cfg.start.y);
    const double sig = cfg.oracle.init_sigma_xy;
    initial[s] = std::exp(-0.5 * d2 / (sig * sig));
  }
  std::vector<double> init_cdf(n);
  {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) init_cdf[s] = (acc += initial[s]);
    for (double& c : init_cdf) c /= acc;
  }
  const InitSampler<std::size_t> init = [&init_cdf](RandomStream& rng) {
    const double u = rng.uniform();
    return static_cast<std::size_t>(std::upper_bound(init_cdf.begin(), init_cdf.end(), u) -
                                    init_cdf.begin());
  };

  std::vector<Pose> truth;
  for (const auto& p : rollout(cfg.start, world.plan)) truth.push_back(hmm.state_pose(hmm.state_of(p)));

  OracleCheckResult res;
  res.n_states = n;
  const std::size_t T = world.plan.horizon();
  std::map<std::pair<std::size_t, int>, std::pair<double, std::size_t>> acc;
  for (std::size_t seed = 0; seed < cfg.oracle.seeds; ++seed) {
    auto sensor_rng = derive_stream(cfg.master_seed, "oracle/sensor", seed);
    QueueQuery q;
    q.initial = initial;
    q.executed = world.plan.actions;
    q.plan = world.plan;
    q.past_lag = fcfg.lag;
    q.future_lag = fcfg.lag;
    q.map_prior = true;
    for (std::size_t t = 1; t <= T; ++t)
      q.emissions.push_back(
          hmm.emission_log(sense(world.grid, truth[t], cfg.beams, cfg.noise, sensor_rng)));

    auto rng = derive_stream(cfg.master_seed, "oracle/deq", seed);
    auto state = deq_init(model, fcfg, init, world.plan, rng);
    for (std::size_t t = 1; t <= T; ++t) {
      deq_step(state, t, world.plan.at(t), q.emissions[t - 1], world.plan, model, fcfg, rng);
      q.t = t;
      const auto exact = exact_queue_posterior(hmm, q);
      for (int off = -static_cast<int>(state.past); off <= static_cast<int>(state.future); ++off) {
        const auto b = queue_marginal(state, off);
        const double tv = total_variation(lattice_histogram(n, b.states, b.weights), exact.at(off));
        res.rows.push_back({seed, t, off, tv});
        auto& a = acc[{t, off}];
        a.first += tv;
        a.second += 1;
      }
    }
  }
  for (const auto& [key, v] : acc) {
    const double m = v.first / static_cast<double>(v.second);
    res.mean_tv[key] = m;
    res.worst_mean_tv = std::max(res.worst_mean_tv, m);
  }
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline std::string oracle_tv_csv(const OracleCheckResult& r) {
  std::string out = "seed,t,offset,tv\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.seed) + ',' + std::to_string(row.t) + ',' +
           std::to_string(row.offset) + ',' + fmt_num(row.tv) + '\n';
  return out;
}

}  // namespace deqmcl
