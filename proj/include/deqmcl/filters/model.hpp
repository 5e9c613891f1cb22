#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "deqmcl/gridmap.hpp"
#include "deqmcl/random.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

/// What the filters need from a generative model: a motion proposal, an
/// observation likelihood and the map-based log prior of one transition.
template <class M>
concept StateSpaceModel = requires(const M& m, const typename M::State& s,
                                   const typename M::Control& a,
                                   const typename M::Observation& o, RandomStream& rng) {
  { m.sample_motion(s, a, rng) } -> std::convertible_to<typename M::State>;
  { m.observation_log_likelihood(o, s) } -> std::convertible_to<double>;
  { m.transition_log_prior(s, s) } -> std::convertible_to<double>;
  { m.admissible(s) } -> std::convertible_to<bool>;
};

struct FilterConfig {
  std::size_t n_particles = 1000;
  std::size_t lag = 20;
  double beta = 10.0;
  NoiseParams motion_noise{0.5, 0.05, 0.0};
  double sensor_sigma = 2.0;
  double resample_threshold = 0.5;
  double collision_step = 1.0;
  bool replan_on_divergence = false;

  void validate() const {
    if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
    if (!(sensor_sigma > 0.0)) throw std::invalid_argument("sensor_sigma must be > 0");
    if (!(resample_threshold >= 0.0 && resample_threshold <= 1.0))
      throw std::invalid_argument("resample_threshold must lie in [0, 1]");
    if (!(collision_step > 0.0)) throw std::invalid_argument("collision_step must be > 0");
    if (motion_noise.sigma_v < 0.0 || motion_noise.sigma_omega < 0.0)
      throw std::invalid_argument("motion noise must be >= 0");
  }
};

/// apply_action with Gaussian-perturbed (v, omega); same draw order as
/// step_true.
inline Pose motion_sample(const Pose& pose, const Action& action, const NoiseParams& noise,
                          RandomStream& rng) {
  return apply_action(pose, perturb_action(action, noise, rng));
}

/// Sum over beams of the Gaussian log-density of the range residual against
/// the raycast prediction. Poses inside obstacles have likelihood zero.
inline double observation_log_likelihood(const DepthScan& scan, const Pose& pose,
                                         const OccupancyGrid& grid, double sensor_sigma,
                                         double max_range, double raycast_step) {
  if (!(sensor_sigma > 0.0)) throw std::invalid_argument("sensor_sigma must be > 0");
  if (grid.occupied(pose.position())) return -std::numeric_limits<double>::infinity();
  const double log_norm = -std::log(sensor_sigma * std::sqrt(2.0 * std::numbers::pi));
  const double inv_var = 1.0 / (sensor_sigma * sensor_sigma);
  double ll = 0.0;
  for (std::size_t b = 0; b < scan.ranges.size(); ++b) {
    const double expected =
        raycast(grid, pose.position(), pose.theta + scan.beam_headings[b], max_range, raycast_step);
    const double r = scan.ranges[b] - expected;
    ll += log_norm - 0.5 * r * r * inv_var;
  }
  return ll;
}

/// log exp(-beta * C), C being the collision count of the motion segment.
inline double traversability_log_prior(const OccupancyGrid& grid, const Pose& prev,
                                       const Pose& next, double beta, double step) {
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (beta == 0.0) return 0.0;
  return -beta * segment_collision_count(grid, prev.position(), next.position(), step);
}

/// Planar robot on an occupancy grid: unicycle motion, beam range sensor,
/// and the exp(-beta C) traversability factor.
class PlanarModel {
public:
  using State = Pose;
  using Control = Action;
  using Observation = DepthScan;

  PlanarModel(const OccupancyGrid& grid, const FilterConfig& cfg, const BeamConfig& beams)
      : grid_(&grid),
        noise_(cfg.motion_noise),
        sensor_sigma_(cfg.sensor_sigma),
        beta_(cfg.beta),
        collision_step_(cfg.collision_step),
        max_range_(beams.max_range),
        raycast_step_(beams.raycast_step) {}

  Pose sample_motion(const Pose& pose, const Action& a, RandomStream& rng) const {
    return motion_sample(pose, a, noise_, rng);
  }

  double observation_log_likelihood(const DepthScan& scan, const Pose& pose) const {
    return deqmcl::observation_log_likelihood(scan, pose, *grid_, sensor_sigma_, max_range_,
                                              raycast_step_);
  }

  double transition_log_prior(const Pose& prev, const Pose& next) const {
    return traversability_log_prior(*grid_, prev, next, beta_, collision_step_);
  }

  bool admissible(const Pose& pose) const { return !grid_->occupied(pose.position()); }

  const OccupancyGrid& grid() const { return *grid_; }
  double beta() const { return beta_; }

private:
  const OccupancyGrid* grid_;
  NoiseParams noise_;
  double sensor_sigma_;
  double beta_;
  double collision_step_;
  double max_range_;
  double raycast_step_;
};

static_assert(StateSpaceModel<PlanarModel>);

}  // namespace deqmcl
