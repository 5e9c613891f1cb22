#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "deqmcl/filters/model.hpp"
#include "deqmcl/filters/weights.hpp"

namespace deqmcl {

class InitializationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Weighted particles at a single time index. Weights are normalized and sum
/// to one.
template <class State>
struct BeliefSnapshot {
  std::size_t time = 0;
  int offset = 0;
  std::vector<State> states;
  std::vector<double> weights;

  std::size_t size() const { return states.size(); }
};

/// Flat particle set used by plain MCL and map-motion MCL.
template <class State>
struct ParticleSet {
  std::vector<State> states;
  std::vector<double> log_weights;
  std::size_t time = 0;
  double last_ess = 0.0;

  std::size_t size() const { return states.size(); }
};

template <class State>
using InitSampler = std::function<State(RandomStream&)>;

namespace detail {

/// Draws n states; inadmissible ones start with zero weight.
template <StateSpaceModel M>
std::vector<double> draw_initial(const M& model, const InitSampler<typename M::State>& init,
                                 std::size_t n, RandomStream& rng,
                                 std::vector<typename M::State>& states) {
  states.clear();
  states.reserve(n);
  std::vector<double> lw(n, 0.0);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    states.push_back(init(rng));
    if (model.admissible(states.back()))
      any = true;
    else
      lw[i] = -std::numeric_limits<double>::infinity();
  }
  if (!any) throw InitializationError("initial belief sampler produced only occupied states");
  return lw;
}

/// Normalizes, then resamples when ESS < threshold * n. Returns the selected
/// indices (empty when no resampling happened) and stores the pre-resampling
/// ESS.
inline std::vector<std::size_t> reweight_and_select(std::vector<double>& log_weights,
                                                    double threshold, RandomStream& rng,
                                                    double& ess_out) {
  normalize_log_weights(log_weights);
  const auto w = weights_from_log(log_weights);
  ess_out = effective_sample_size(w);
  const double n = static_cast<double>(log_weights.size());
  if (ess_out < threshold * n) {
    auto idx = systematic_resample(w, rng);
    std::fill(log_weights.begin(), log_weights.end(), -std::log(n));
    return idx;
  }
  return {};
}

}  // namespace detail

template <StateSpaceModel M>
ParticleSet<typename M::State> mcl_init(const M& model, const FilterConfig& cfg,
                                        const InitSampler<typename M::State>& init,
                                        RandomStream& rng) {
  cfg.validate();
  ParticleSet<typename M::State> set;
  set.log_weights = detail::draw_initial(model, init, cfg.n_particles, rng, set.states);
  normalize_log_weights(set.log_weights);
  set.last_ess = effective_sample_size(weights_from_log(set.log_weights));
  return set;
}

/// Propagate every particle through the motion model (optionally adding the
/// traversability prior of its motion segment), weight by the observation,
/// resample when the effective sample size drops below threshold.
template <StateSpaceModel M>
void mcl_update(ParticleSet<typename M::State>& set, const typename M::Control& action,
                const typename M::Observation& obs, const M& model, const FilterConfig& cfg,
                bool with_map_prior, RandomStream& rng) {
  if (set.states.empty()) throw std::invalid_argument("empty particle set");
  for (std::size_t i = 0; i < set.states.size(); ++i) {
    const auto prev = set.states[i];
    set.states[i] = model.sample_motion(prev, action, rng);
    if (with_map_prior) set.log_weights[i] += model.transition_log_prior(prev, set.states[i]);
  }
  for (std::size_t i = 0; i < set.states.size(); ++i)
    set.log_weights[i] += model.observation_log_likelihood(obs, set.states[i]);

  const auto idx =
      detail::reweight_and_select(set.log_weights, cfg.resample_threshold, rng, set.last_ess);
  if (!idx.empty()) {
    std::vector<typename M::State> next;
    next.reserve(idx.size());
    for (auto j : idx) next.push_back(set.states[j]);
    set.states = std::move(next);
  }
  ++set.time;
}

template <StateSpaceModel M>
void mcl_step(ParticleSet<typename M::State>& set, const typename M::Control& action,
              const typename M::Observation& obs, const M& model, const FilterConfig& cfg,
              RandomStream& rng) {
  mcl_update(set, action, obs, model, cfg, false, rng);
}

/// MCL with the factorized map-based motion model p(x|x',a) p(x|m).
template <StateSpaceModel M>
void mcl_map_motion_step(ParticleSet<typename M::State>& set, const typename M::Control& action,
                         const typename M::Observation& obs, const M& model,
                         const FilterConfig& cfg, RandomStream& rng) {
  mcl_update(set, action, obs, model, cfg, true, rng);
}

template <class State>
BeliefSnapshot<State> belief_of(const ParticleSet<State>& set) {
  return {set.time, 0, set.states, weights_from_log(set.log_weights)};
}

}  // namespace deqmcl
