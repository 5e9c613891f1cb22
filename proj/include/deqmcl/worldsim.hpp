#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "deqmcl/gridmap.hpp"
#include "deqmcl/random.hpp"

namespace deqmcl {

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose() = default;
  Pose(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}

  Point2 position() const { return {x, y}; }

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Forward displacement and heading change for one step.
struct Action {
  double v = 0.0;
  double omega = 0.0;

  friend bool operator==(const Action&, const Action&) = default;
};

/// Action sequence of length T. Action t (1-based) moves the robot from
/// x_{t-1} to x_t; the initial pose is x_0.
struct ActionPlan {
  std::vector<Action> actions;

  std::size_t horizon() const { return actions.size(); }
  const Action& at(std::size_t t) const {
    if (t < 1 || t > actions.size()) throw std::out_of_range("plan step out of range");
    return actions[t - 1];
  }
};

struct NoiseParams {
  double sigma_v = 0.0;
  double sigma_omega = 0.0;
  double sigma_range = 0.0;
};

struct BeamConfig {
  std::vector<double> headings;  // relative to robot heading
  double max_range = 100.0;
  double raycast_step = 0.5;

  static BeamConfig default_fan() {
    const double deg = std::numbers::pi / 180.0;
    return {{-60 * deg, -30 * deg, 0.0, 30 * deg, 60 * deg}, 100.0, 0.5};
  }
};

struct DepthScan {
  std::vector<double> ranges;
  std::vector<double> beam_headings;
};

class PlanError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Rotate, then translate along the new heading.
inline Pose apply_action(const Pose& pose, const Action& action) {
  const double theta = normalize_angle(pose.theta + action.omega);
  Pose out;
  out.x = pose.x + action.v * std::cos(theta);
  out.y = pose.y + action.v * std::sin(theta);
  out.theta = theta;
  return out;
}

/// Draws v noise, then omega noise: exactly two variates.
inline Action perturb_action(const Action& action, const NoiseParams& noise, RandomStream& rng) {
  const double dv = rng.normal();
  const double dw = rng.normal();
  return {action.v + noise.sigma_v * dv, action.omega + noise.sigma_omega * dw};
}

inline Pose step_true(const Pose& pose, const Action& action, const NoiseParams& noise,
                      RandomStream& rng) {
  return apply_action(pose, perturb_action(action, noise, rng));
}

/// One range per beam, in beam order; one normal variate per beam.
inline DepthScan sense(const OccupancyGrid& grid, const Pose& pose, const BeamConfig& beams,
                       const NoiseParams& noise, RandomStream& rng) {
  if (beams.headings.empty()) throw std::invalid_argument("beam configuration is empty");
  if (grid.occupied(pose.position()))
    throw SensorInObstacleError("sensing pose is inside an obstacle");
  DepthScan scan;
  scan.beam_headings = beams.headings;
  scan.ranges.reserve(beams.headings.size());
  for (double h : beams.headings) {
    const double r =
        raycast(grid, pose.position(), pose.theta + h, beams.max_range, beams.raycast_step);
    const double noisy = r + noise.sigma_range * rng.normal();
    scan.ranges.push_back(std::clamp(noisy, 0.0, beams.max_range));
  }
  return scan;
}

/// Noise-free rollout x_0..x_T of a plan.
inline std::vector<Pose> rollout(const Pose& start, const ActionPlan& plan) {
  std::vector<Pose> poses{start};
  poses.reserve(plan.horizon() + 1);
  for (const auto& a : plan.actions) poses.push_back(apply_action(poses.back(), a));
  return poses;
}

/// Total collision samples over every inter-pose segment of the noise-free
/// rollout.
inline int rollout_collisions(const OccupancyGrid& grid, const Pose& start,
                              const ActionPlan& plan, double collision_step = 1.0) {
  const auto poses = rollout(start, plan);
  int total = 0;
  for (std::size_t i = 1; i < poses.size(); ++i)
    total += segment_collision_count(grid, poses[i - 1].position(), poses[i].position(),
                                     collision_step);
  return total;
}

/// Turn-then-drive plan through the waypoints. Rotations are capped at
/// omega_step per action; the last rotation of each turn lands exactly on
/// the bearing. Drives stop once within v_step of the waypoint.
inline ActionPlan build_loop_plan(const OccupancyGrid& grid, const Pose& start,
                                  const std::vector<Point2>& waypoints, double v_step,
                                  double omega_step, double collision_step = 1.0) {
  if (!(v_step > 0.0) || !(omega_step > 0.0))
    throw std::invalid_argument("plan step sizes must be positive");
  if (grid.occupied(start.position())) throw PlanError("start pose is inside an obstacle");
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    if (grid.occupied(waypoints[i]))
      throw PlanError("waypoint " + std::to_string(i) + " is in occupied space");

  ActionPlan plan;
  Pose pose = start;
  auto emit = [&](Action a) {
    plan.actions.push_back(a);
    pose = apply_action(pose, a);
  };
  for (const auto& wp : waypoints) {
    double dist = std::hypot(wp.x - pose.x, wp.y - pose.y);
    if (dist < v_step) continue;
    double turn = normalize_angle(std::atan2(wp.y - pose.y, wp.x - pose.x) - pose.theta);
    while (std::abs(turn) >= 1e-12) {
      emit({0.0, std::clamp(turn, -omega_step, omega_step)});
      turn = normalize_angle(std::atan2(wp.y - pose.y, wp.x - pose.x) - pose.theta);
    }
    const std::size_t guard = plan.actions.size() + static_cast<std::size_t>(dist / v_step) + 2;
    while (dist >= v_step) {
      if (plan.actions.size() > guard) throw PlanError("drive toward waypoint did not converge");
      emit({v_step, 0.0});
      dist = std::hypot(wp.x - pose.x, wp.y - pose.y);
    }
  }

  const auto poses = rollout(start, plan);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (segment_collision_count(grid, poses[i - 1].position(), poses[i].position(),
                                collision_step) > 0)
      throw PlanError("noise-free rollout collides at plan step " + std::to_string(i));
  }
  return plan;
}

}  // namespace deqmcl
