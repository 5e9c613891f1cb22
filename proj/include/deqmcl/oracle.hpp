#pragma once

// Exact inference on small discretized instances. Ground truth for the queue
// filters: the same recursions evaluated by forward-backward and, for tiny
// lattices, by brute-force enumeration of every joint trajectory.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "deqmcl/filters/model.hpp"
#include "deqmcl/gridmap.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

class LatticeTooLargeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ImpossibleEvidenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct TransitionEntry {
  std::size_t to = 0;
  double prob = 0.0;
  double log_prior = 0.0;  // -beta * C for the center-to-center segment
};

/// Pose lattice (cells x heading bins) with per-action sparse transition rows.
class DiscreteHmm {
public:
  static constexpr std::size_t max_states = 10000;

  DiscreteHmm(const OccupancyGrid& grid, double cell, int n_heading_bins)
      : grid_(&grid), cell_(cell), n_heading_(n_heading_bins) {
    if (!(cell > 0.0) || n_heading_bins < 1)
      throw std::invalid_argument("lattice cell and heading bins must be positive");
    nx_ = static_cast<int>(std::ceil(grid.world_width() / cell - 1e-9));
    ny_ = static_cast<int>(std::ceil(grid.world_height() / cell - 1e-9));
    const std::size_t n = static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_) *
                          static_cast<std::size_t>(n_heading_);
    if (n > max_states)
      throw LatticeTooLargeError("lattice has " + std::to_string(n) + " states (" +
                                 std::to_string(nx_) + " x " + std::to_string(ny_) + " x " +
                                 std::to_string(n_heading_) + "), limit is " +
                                 std::to_string(max_states));
  }

  std::size_t size() const {
    return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_) *
           static_cast<std::size_t>(n_heading_);
  }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int heading_bins() const { return n_heading_; }
  double cell() const { return cell_; }
  const OccupancyGrid& grid() const { return *grid_; }

  std::size_t index(int ix, int iy, int ih) const {
    return (static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) +
            static_cast<std::size_t>(ix)) *
               static_cast<std::size_t>(n_heading_) +
           static_cast<std::size_t>(ih);
  }

  Pose state_pose(std::size_t s) const {
    const int ih = static_cast<int>(s % static_cast<std::size_t>(n_heading_));
    const std::size_t c = s / static_cast<std::size_t>(n_heading_);
    const int ix = static_cast<int>(c % static_cast<std::size_t>(nx_));
    const int iy = static_cast<int>(c / static_cast<std::size_t>(nx_));
    return Pose((ix + 0.5) * cell_, (iy + 0.5) * cell_,
                ih * 2.0 * std::numbers::pi / n_heading_);
  }

  /// Nearest lattice state; positions outside the lattice clamp to its border.
  std::size_t state_of(const Pose& p) const {
    const int ix = std::clamp(static_cast<int>(std::floor(p.x / cell_)), 0, nx_ - 1);
    const int iy = std::clamp(static_cast<int>(std::floor(p.y / cell_)), 0, ny_ - 1);
    const double bin = 2.0 * std::numbers::pi / n_heading_;
    long ih = std::lround(p.theta / bin) % n_heading_;
    if (ih < 0) ih += n_heading_;
    return index(ix, iy, static_cast<int>(ih));
  }

  bool admissible(std::size_t s) const { return !grid_->occupied(state_pose(s).position()); }

  std::size_t action_index(const Action& a) const {
    for (std::size_t k = 0; k < actions_.size(); ++k)
      if (actions_[k] == a) return k;
    throw std::out_of_range("action not in the discretized action set");
  }

  const std::vector<Action>& actions() const { return actions_; }

  const std::vector<TransitionEntry>& row(std::size_t action, std::size_t s) const {
    return rows_[action][s];
  }

  double row_sum(std::size_t action, std::size_t s) const {
    double sum = 0.0;
    for (const auto& e : rows_[action][s]) sum += e.prob;
    return sum;
  }

  /// Log emission of every state for one scan.
  std::vector<double> emission_log(const DepthScan& scan) const {
    std::vector<double> out(size());
    for (std::size_t s = 0; s < size(); ++s)
      out[s] = observation_log_likelihood(scan, state_pose(s), *grid_, sensor_sigma_, max_range_,
                                          raycast_step_);
    return out;
  }

  double beta() const { return beta_; }
  double collision_step() const { return collision_step_; }

private:
  friend DiscreteHmm discretize(const OccupancyGrid&, const FilterConfig&, const BeamConfig&,
                                const std::vector<Action>&, double, int, int);

  const OccupancyGrid* grid_;
  double cell_;
  int n_heading_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<Action> actions_;
  std::vector<std::vector<std::vector<TransitionEntry>>> rows_;
  double beta_ = 0.0;
  double collision_step_ = 1.0;
  double sensor_sigma_ = 1.0;
  double max_range_ = 1.0;
  double raycast_step_ = 0.5;
};

namespace detail {
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Midpoints and Gaussian masses of `nodes` equal intervals over +-4 sigma.
inline std::vector<std::pair<double, double>> gaussian_nodes(double sigma, int nodes) {
  if (sigma <= 0.0 || nodes <= 1) return {{0.0, 1.0}};
  std::vector<std::pair<double, double>> out;
  const double lo = -4.0, width = 8.0 / nodes;
  for (int k = 0; k < nodes; ++k) {
    const double a = lo + k * width;
    const double b = a + width;
    out.emplace_back(sigma * (a + 0.5 * width), normal_cdf(b) - normal_cdf(a));
  }
  return out;
}
}  // namespace detail

/// Builds the lattice HMM. Each (state, action) row integrates the Gaussian
/// (v, omega) perturbation of motion_sample over a midpoint grid of
/// `quadrature_nodes` per dimension, maps every node's successor pose to its
/// lattice state and renormalizes. Transition log priors use the same
/// segment-count rule as traversability_log_prior between lattice centers.
inline DiscreteHmm discretize(const OccupancyGrid& grid, const FilterConfig& cfg,
                              const BeamConfig& beams, const std::vector<Action>& actions,
                              double cell, int n_heading_bins, int quadrature_nodes = 9) {
  cfg.validate();
  DiscreteHmm hmm(grid, cell, n_heading_bins);
  hmm.actions_ = actions;
  hmm.beta_ = cfg.beta;
  hmm.collision_step_ = cfg.collision_step;
  hmm.sensor_sigma_ = cfg.sensor_sigma;
  hmm.max_range_ = beams.max_range;
  hmm.raycast_step_ = beams.raycast_step;

  const auto v_nodes = detail::gaussian_nodes(cfg.motion_noise.sigma_v, quadrature_nodes);
  const auto w_nodes = detail::gaussian_nodes(cfg.motion_noise.sigma_omega, quadrature_nodes);
  const std::size_t n = hmm.size();
  hmm.rows_.resize(actions.size());
  std::vector<double> acc(n, 0.0);
  std::vector<std::size_t> touched;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    hmm.rows_[k].resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      const Pose from = hmm.state_pose(s);
      touched.clear();
      double total = 0.0;
      for (const auto& [dv, mv] : v_nodes)
        for (const auto& [dw, mw] : w_nodes) {
          const Pose to = apply_action(from, {actions[k].v + dv, actions[k].omega + dw});
          const std::size_t d = hmm.state_of(to);
          if (acc[d] == 0.0) touched.push_back(d);
          acc[d] += mv * mw;
          total += mv * mw;
        }
      std::sort(touched.begin(), touched.end());
      auto& row = hmm.rows_[k][s];
      row.reserve(touched.size());
      for (auto d : touched) {
        const double lp = traversability_log_prior(grid, from, hmm.state_pose(d), cfg.beta,
                                                   cfg.collision_step);
        row.push_back({d, acc[d] / total, lp});
        acc[d] = 0.0;
      }
    }
  }
  return hmm;
}

/// The discretized instance seen as a StateSpaceModel, so the particle
/// filters can run on exactly the model the oracle evaluates. Observations
/// are precomputed per-state log emissions.
class DiscreteModel {
public:
  using State = std::size_t;
  using Control = Action;
  using Observation = std::vector<double>;

  explicit DiscreteModel(const DiscreteHmm& hmm) : hmm_(&hmm) {}

  std::size_t sample_motion(std::size_t s, const Action& a, RandomStream& rng) const {
    const auto& row = hmm_->row(hmm_->action_index(a), s);
    const double u = rng.uniform();
    double cum = 0.0;
    for (const auto& e : row) {
      cum += e.prob;
      if (u < cum) return e.to;
    }
    return row.back().to;
  }

  double observation_log_likelihood(const std::vector<double>& emission, std::size_t s) const {
    return emission[s];
  }

  double transition_log_prior(std::size_t from, std::size_t to) const {
    return traversability_log_prior(hmm_->grid(), hmm_->state_pose(from), hmm_->state_pose(to),
                                    hmm_->beta(), hmm_->collision_step());
  }

  bool admissible(std::size_t s) const { return hmm_->admissible(s); }

private:
  const DiscreteHmm* hmm_;
};

static_assert(StateSpaceModel<DiscreteModel>);

/// Marginals of the queue posterior at time t, one vector per offset in
/// [-past, +future].
struct QueuePosterior {
  std::size_t time = 0;
  std::size_t past = 0;
  std::size_t future = 0;
  std::vector<std::vector<double>> marginals;

  const std::vector<double>& at(int offset) const {
    return marginals.at(static_cast<std::size_t>(static_cast<long>(past) + offset));
  }
};

/// Inputs of an exact query. Transitions 1..t use `executed`, later ones use
/// `plan`; emissions[s-1] is the log emission vector of o_s.
struct QueueQuery {
  std::vector<double> initial;  // p(x_0), any non-negative scale
  std::vector<Action> executed;
  ActionPlan plan;
  std::vector<std::vector<double>> emissions;
  std::size_t past_lag = 0;
  std::size_t future_lag = 0;
  bool map_prior = true;
  std::size_t t = 0;
};

namespace detail {
inline void check_query(const DiscreteHmm& hmm, const QueueQuery& q) {
  if (q.initial.size() != hmm.size()) throw std::invalid_argument("initial belief size mismatch");
  if (q.executed.size() < q.t || q.emissions.size() < q.t)
    throw std::invalid_argument("need executed actions and observations up to t");
}

inline std::size_t query_future(const QueueQuery& q) {
  const std::size_t T = q.plan.horizon();
  return q.t >= T ? 0 : std::min(q.future_lag, T - q.t);
}

inline const Action& query_action(const QueueQuery& q, std::size_t s) {
  return s <= q.t ? q.executed[s - 1] : q.plan.at(s);
}

inline double normalize_or_throw(std::vector<double>& v, const char* where) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (!(sum > 0.0) || !std::isfinite(sum))
    throw ImpossibleEvidenceError(std::string("zero-probability evidence in ") + where);
  for (double& x : v) x /= sum;
  return sum;
}
}  // namespace detail

/// Forward filtering to t, forward prediction to t + F and a backward pass
/// over the whole chain. Each unnormalized transition is K(i, j) exp(lp(i, j)).
inline QueuePosterior exact_queue_posterior(const DiscreteHmm& hmm, const QueueQuery& q) {
  detail::check_query(hmm, q);
  const std::size_t n = hmm.size();
  const std::size_t F = detail::query_future(q);
  const std::size_t P = std::min(q.t, q.past_lag);
  const std::size_t end = q.t + F;

  auto emission = [&](std::size_t s, std::size_t j) {
    return s <= q.t && s >= 1 ? std::exp(q.emissions[s - 1][j]) : 1.0;
  };
  auto weight = [&](const TransitionEntry& e) {
    return e.prob * (q.map_prior ? std::exp(e.log_prior) : 1.0);
  };

  std::vector<std::vector<double>> alpha(end + 1, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    alpha[0][i] = hmm.admissible(i) ? q.initial[i] : 0.0;
  detail::normalize_or_throw(alpha[0], "initial belief");
  for (std::size_t s = 1; s <= end; ++s) {
    const std::size_t a = hmm.action_index(detail::query_action(q, s));
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[s - 1][i] == 0.0) continue;
      for (const auto& e : hmm.row(a, i)) alpha[s][e.to] += alpha[s - 1][i] * weight(e);
    }
    for (std::size_t j = 0; j < n; ++j) alpha[s][j] *= emission(s, j);
    detail::normalize_or_throw(alpha[s], "forward pass");
  }

  std::vector<std::vector<double>> beta(end + 1, std::vector<double>(n, 1.0));
  for (std::size_t s = end; s >= 1; --s) {
    const std::size_t a = hmm.action_index(detail::query_action(q, s));
    auto& prev = beta[s - 1];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (const auto& e : hmm.row(a, i)) acc += weight(e) * emission(s, e.to) * beta[s][e.to];
      prev[i] = acc;
    }
    double mx = *std::max_element(prev.begin(), prev.end());
    if (mx > 0.0)
      for (double& b : prev) b /= mx;
  }

  QueuePosterior out;
  out.time = q.t;
  out.past = P;
  out.future = F;
  for (std::size_t s = q.t - P; s <= end; ++s) {
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = alpha[s][i] * beta[s][i];
    detail::normalize_or_throw(m, "marginal");
    out.marginals.push_back(std::move(m));
  }
  return out;
}

/// Brute-force enumeration of every trajectory x_0 .. x_{t+F}. Only for
/// lattices of a handful of states.
inline QueuePosterior enumerate_queue_posterior(const DiscreteHmm& hmm, const QueueQuery& q) {
  detail::check_query(hmm, q);
  const std::size_t n = hmm.size();
  const std::size_t F = detail::query_future(q);
  const std::size_t P = std::min(q.t, q.past_lag);
  const std::size_t end = q.t + F;
  if (std::pow(static_cast<double>(n), static_cast<double>(end + 1)) > 5e6)
    throw LatticeTooLargeError("enumeration over " + std::to_string(n) + "^" +
                               std::to_string(end + 1) + " trajectories is too large");

  // Dense unnormalized transition matrices per step.
  std::vector<std::vector<double>> dense(end + 1);
  for (std::size_t s = 1; s <= end; ++s) {
    const std::size_t a = hmm.action_index(detail::query_action(q, s));
    dense[s].assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& e : hmm.row(a, i))
        dense[s][i * n + e.to] += e.prob * (q.map_prior ? std::exp(e.log_prior) : 1.0);
  }

  std::vector<std::vector<double>> acc(P + 1 + F, std::vector<double>(n, 0.0));
  std::vector<std::size_t> path(end + 1, 0);
  std::function<void(std::size_t, double)> walk = [&](std::size_t s, double w) {
    if (w == 0.0) return;
    if (s == end + 1) {
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k][path[q.t - P + k]] += w;
      return;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double wj;
      if (s == 0)
        wj = hmm.admissible(j) ? q.initial[j] : 0.0;
      else
        wj = dense[s][path[s - 1] * n + j];
      if (s >= 1 && s <= q.t) wj *= std::exp(q.emissions[s - 1][j]);
      path[s] = j;
      walk(s + 1, w * wj);
    }
  };
  walk(0, 1.0);

  QueuePosterior out;
  out.time = q.t;
  out.past = P;
  out.future = F;
  for (auto& m : acc) {
    detail::normalize_or_throw(m, "enumeration");
    out.marginals.push_back(std::move(m));
  }
  return out;
}

/// Classical forward algorithm without map priors: p(x_t | a_{1:t}, o_{1:t}).
inline std::vector<double> forward_filter(const DiscreteHmm& hmm, const std::vector<double>& initial,
                                          const std::vector<Action>& executed,
                                          const std::vector<std::vector<double>>& emissions,
                                          std::size_t t) {
  const std::size_t n = hmm.size();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = hmm.admissible(i) ? initial[i] : 0.0;
  detail::normalize_or_throw(a, "initial belief");
  for (std::size_t s = 1; s <= t; ++s) {
    const std::size_t k = hmm.action_index(executed[s - 1]);
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& e : hmm.row(k, i)) next[e.to] += a[i] * e.prob;
    for (std::size_t j = 0; j < n; ++j) next[j] *= std::exp(emissions[s - 1][j]);
    detail::normalize_or_throw(next, "forward filter");
    a = std::move(next);
  }
  return a;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distribution size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

/// Histogram of a weighted discrete-state cloud over the lattice.
inline std::vector<double> lattice_histogram(std::size_t n_states,
                                             const std::vector<std::size_t>& states,
                                             const std::vector<double>& weights) {
  std::vector<double> h(n_states, 0.0);
  for (std::size_t i = 0; i < states.size(); ++i) h[states[i]] += weights[i];
  return h;
}

}  // namespace deqmcl
