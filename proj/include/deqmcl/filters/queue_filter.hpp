#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "deqmcl/filters/mcl.hpp"
#include "deqmcl/filters/model.hpp"
#include "deqmcl/filters/weights.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

/// Which part of the window a queue filter keeps and whether appended
/// transitions are weighted by the map prior.
///   MCL with smoother: {L, 0, false}
///   DEQ-MCL:           {L, L, true}
struct QueueShape {
  std::size_t past_lag = 0;
  std::size_t future_lag = 0;
  bool map_prior = false;
};

template <class State>
struct QueueNode {
  State state;
  double log_prior = 0.0;  // map prior of the transition into this state
};

/// One joint trajectory hypothesis x_{t-P} .. x_{t+F}.
template <class State>
struct QueueParticle {
  std::vector<QueueNode<State>> trajectory;
};

/// Monte-Carlo representation of the queue posterior at time `time`. Every
/// particle covers the same time span [time - past, time + future].
template <class State>
struct QueueState {
  QueueShape shape;
  std::size_t time = 0;
  std::size_t horizon = 0;
  std::size_t past = 0;
  std::size_t future = 0;
  std::vector<QueueParticle<State>> particles;
  std::vector<double> log_weights;
  double last_ess = 0.0;

  std::size_t size() const { return particles.size(); }
  std::size_t oldest_time() const { return time - past; }
  std::size_t newest_time() const { return time + future; }

  const State& at(std::size_t particle, int offset) const {
    return particles[particle].trajectory[static_cast<std::size_t>(static_cast<long>(past) + offset)]
        .state;
  }
};

namespace detail {

template <StateSpaceModel M>
void extend_to(QueueParticle<typename M::State>& p, double& log_weight, std::size_t last_time,
               std::size_t target_time, std::size_t now, const typename M::Control* executed,
               const ActionPlan& plan, const M& model, bool map_prior, RandomStream& rng) {
  for (std::size_t s = last_time + 1; s <= target_time; ++s) {
    const auto& prev = p.trajectory.back().state;
    const Action& control = (executed != nullptr && s == now) ? *executed : plan.at(s);
    QueueNode<typename M::State> node{model.sample_motion(prev, control, rng), 0.0};
    if (map_prior) {
      node.log_prior = model.transition_log_prior(prev, node.state);
      log_weight += node.log_prior;
    }
    p.trajectory.push_back(std::move(node));
  }
}

template <class State>
void resample_queues(QueueState<State>& q, RandomStream& rng, double threshold) {
  const auto idx = reweight_and_select(q.log_weights, threshold, rng, q.last_ess);
  if (idx.empty()) return;
  std::vector<QueueParticle<State>> next;
  next.reserve(idx.size());
  for (auto j : idx) next.push_back(q.particles[j]);
  q.particles = std::move(next);
}

}  // namespace detail

/// Initial queue at time 0: n draws from the initial belief, each rolled
/// forward min(future_lag, T) steps along the plan. Rolled transitions carry
/// the map prior when the shape asks for it.
template <StateSpaceModel M>
  requires std::same_as<typename M::Control, Action>
QueueState<typename M::State> queue_init(const M& model, const FilterConfig& cfg, QueueShape shape,
                                         const InitSampler<typename M::State>& init,
                                         const ActionPlan& plan, RandomStream& rng) {
  cfg.validate();
  QueueState<typename M::State> q;
  q.shape = shape;
  q.horizon = plan.horizon();
  q.future = std::min(shape.future_lag, q.horizon);

  std::vector<typename M::State> starts;
  q.log_weights = detail::draw_initial(model, init, cfg.n_particles, rng, starts);
  q.particles.resize(cfg.n_particles);
  for (std::size_t i = 0; i < cfg.n_particles; ++i) {
    auto& traj = q.particles[i].trajectory;
    traj.reserve(shape.past_lag + shape.future_lag + 1);
    traj.push_back({starts[i], 0.0});
    detail::extend_to(q.particles[i], q.log_weights[i], 0, q.future, 0, nullptr, plan, model,
                      shape.map_prior, rng);
  }
  normalize_log_weights(q.log_weights);
  q.last_ess = effective_sample_size(weights_from_log(q.log_weights));
  return q;
}

template <StateSpaceModel M>
  requires std::same_as<typename M::Control, Action>
QueueState<typename M::State> deq_init(const M& model, const FilterConfig& cfg,
                                       const InitSampler<typename M::State>& init,
                                       const ActionPlan& plan, RandomStream& rng) {
  return queue_init(model, cfg, QueueShape{cfg.lag, cfg.lag, true}, init, plan, rng);
}

template <StateSpaceModel M>
  requires std::same_as<typename M::Control, Action>
QueueState<typename M::State> smoother_init(const M& model, const FilterConfig& cfg,
                                            const InitSampler<typename M::State>& init,
                                            const ActionPlan& plan, RandomStream& rng) {
  return queue_init(model, cfg, QueueShape{cfg.lag, 0, false}, init, plan, rng);
}

/// Advances the queue from t-1 to t:
///  - the oldest state leaves once the past side is full (marginalization),
///  - the state predicted for t becomes current (or is sampled under the
///    executed action when the queue holds no future side),
///  - the future side is topped up to min(future_lag, T - t) by sampling
///    along the plan, the appended transition carrying the map prior,
///  - the current state is weighted by the observation,
///  - whole queues are resampled when ESS < threshold * n.
/// With cfg.replan_on_divergence and executed != planned action, every state
/// from t on is re-sampled from x_{t-1} and its old priors are dropped.
template <StateSpaceModel M>
  requires std::same_as<typename M::Control, Action>
void queue_step(QueueState<typename M::State>& q, std::size_t t, const Action& executed,
                const typename M::Observation& obs, const ActionPlan& plan, const M& model,
                const FilterConfig& cfg, RandomStream& rng) {
  if (t != q.time + 1)
    throw std::invalid_argument("queue step out of order: expected t = " +
                                std::to_string(q.time + 1) + ", got " + std::to_string(t));
  if (q.particles.empty()) throw std::invalid_argument("empty queue");

  const std::size_t new_past = std::min(t, q.shape.past_lag);
  const std::size_t new_future = t >= q.horizon ? 0 : std::min(q.shape.future_lag, q.horizon - t);
  const std::size_t new_oldest = t - new_past;
  const std::size_t old_oldest = q.oldest_time();
  const std::size_t drop = new_oldest - old_oldest;
  const bool replan = cfg.replan_on_divergence && q.future > 0 && t <= q.horizon &&
                      !(executed == plan.at(t));

  for (std::size_t i = 0; i < q.particles.size(); ++i) {
    auto& traj = q.particles[i].trajectory;
    std::size_t last = q.newest_time();
    if (replan) {
      // Keep x_{oldest} .. x_{t-1}.
      const std::size_t keep = t - old_oldest;
      for (std::size_t k = keep; k < traj.size(); ++k) q.log_weights[i] -= traj[k].log_prior;
      traj.resize(keep);
      last = t - 1;
    }
    detail::extend_to(q.particles[i], q.log_weights[i], last, t + new_future, t, &executed, plan,
                      model, q.shape.map_prior, rng);
    traj.erase(traj.begin(), traj.begin() + static_cast<long>(drop));
  }

  q.time = t;
  q.past = new_past;
  q.future = new_future;

  for (std::size_t i = 0; i < q.particles.size(); ++i)
    q.log_weights[i] += model.observation_log_likelihood(obs, q.at(i, 0));

  detail::resample_queues(q, rng, cfg.resample_threshold);
}

template <StateSpaceModel M>
  requires std::same_as<typename M::Control, Action>
void deq_step(QueueState<typename M::State>& q, std::size_t t, const Action& executed,
              const typename M::Observation& obs, const ActionPlan& plan, const M& model,
              const FilterConfig& cfg, RandomStream& rng) {
  queue_step(q, t, executed, obs, plan, model, cfg, rng);
}

template <StateSpaceModel M>
  requires std::same_as<typename M::Control, Action>
void mcl_smoother_step(QueueState<typename M::State>& q, std::size_t t, const Action& executed,
                       const typename M::Observation& obs, const ActionPlan& plan,
                       const M& model, const FilterConfig& cfg, RandomStream& rng) {
  queue_step(q, t, executed, obs, plan, model, cfg, rng);
}

/// Weighted cloud of the state at `offset` steps from the current time;
/// weights are the joint queue weights.
template <class State>
BeliefSnapshot<State> queue_marginal(const QueueState<State>& q, int offset) {
  if (offset < -static_cast<long>(q.past) || offset > static_cast<long>(q.future))
    throw std::out_of_range("offset " + std::to_string(offset) + " outside queue span [-" +
                            std::to_string(q.past) + ", +" + std::to_string(q.future) + "]");
  BeliefSnapshot<State> b;
  b.time = static_cast<std::size_t>(static_cast<long>(q.time) + offset);
  b.offset = offset;
  b.states.reserve(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) b.states.push_back(q.at(i, offset));
  b.weights = weights_from_log(q.log_weights);
  return b;
}

}  // namespace deqmcl
