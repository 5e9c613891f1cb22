#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "deqmcl/filters/mcl.hpp"
#include "deqmcl/worldsim.hpp"

namespace deqmcl {

struct StepError {
  std::size_t t = 0;
  double e = 0.0;
};

/// Weighted means of (x, y, cos theta, sin theta).
struct PoseMean {
  double x = 0.0;
  double y = 0.0;
  double c = 0.0;
  double s = 0.0;
};

struct PoseVariance {
  double x = 0.0;
  double y = 0.0;
  double c = 0.0;
  double s = 0.0;

  double positional() const { return x + y; }
};

struct TrialMetrics {
  double rmse = 0.0;
  std::vector<StepError> errors;
  double entropy = 0.0;
  PoseVariance variance;
};

enum class ErrorAggregation { mean_error, root_mean_square };

inline void require_nonempty(const BeliefSnapshot<Pose>& b) {
  if (b.states.empty()) throw std::invalid_argument("empty belief");
  if (b.weights.size() != b.states.size())
    throw std::invalid_argument("belief weights and states differ in length");
}

inline PoseMean belief_mean(const BeliefSnapshot<Pose>& b) {
  require_nonempty(b);
  PoseMean m;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double w = b.weights[i];
    m.x += w * b.states[i].x;
    m.y += w * b.states[i].y;
    m.c += w * std::cos(b.states[i].theta);
    m.s += w * std::sin(b.states[i].theta);
  }
  return m;
}

/// e_t from a stored mean: Euclidean distance in (x, y, cos, sin).
inline double pose_error(const PoseMean& m, const Pose& truth) {
  const double dx = m.x - truth.x;
  const double dy = m.y - truth.y;
  const double dc = m.c - std::cos(truth.theta);
  const double ds = m.s - std::sin(truth.theta);
  return std::sqrt(dx * dx + dy * dy + dc * dc + ds * ds);
}

/// Angle enters through the mean of cos and the mean of sin, not through a
/// circular mean.
inline StepError step_error(const BeliefSnapshot<Pose>& b, const Pose& truth) {
  return {b.time, pose_error(belief_mean(b), truth)};
}

inline double trial_rmse(std::span<const StepError> errors,
                         ErrorAggregation mode = ErrorAggregation::mean_error) {
  if (errors.empty()) throw std::invalid_argument("no step errors to aggregate");
  double acc = 0.0;
  for (const auto& e : errors)
    acc += mode == ErrorAggregation::mean_error ? e.e : e.e * e.e;
  acc /= static_cast<double>(errors.size());
  return mode == ErrorAggregation::mean_error ? acc : std::sqrt(acc);
}

/// Plug-in entropy (nats) of the weighted histogram over (x, y, theta) bins.
inline double belief_entropy(const BeliefSnapshot<Pose>& b, double cell, int n_heading_bins) {
  require_nonempty(b);
  if (!(cell > 0.0) || n_heading_bins < 1)
    throw std::invalid_argument("entropy binning must be positive");
  const double bin = 2.0 * std::numbers::pi / n_heading_bins;
  std::map<std::tuple<std::int64_t, std::int64_t, int>, double> hist;
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto& p = b.states[i];
    int hb = static_cast<int>(std::floor((p.theta + std::numbers::pi) / bin));
    hb = std::clamp(hb, 0, n_heading_bins - 1);
    hist[{static_cast<std::int64_t>(std::floor(p.x / cell)),
          static_cast<std::int64_t>(std::floor(p.y / cell)), hb}] += b.weights[i];
    total += b.weights[i];
  }
  double h = 0.0;
  for (const auto& [key, w] : hist) {
    if (w <= 0.0) continue;
    const double p = w / total;
    h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

inline PoseVariance belief_variance(const BeliefSnapshot<Pose>& b) {
  const PoseMean m = belief_mean(b);
  PoseVariance v;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double w = b.weights[i];
    const auto& p = b.states[i];
    const double dx = p.x - m.x, dy = p.y - m.y;
    const double dc = std::cos(p.theta) - m.c, ds = std::sin(p.theta) - m.s;
    v.x += w * dx * dx;
    v.y += w * dy * dy;
    v.c += w * dc * dc;
    v.s += w * ds * ds;
  }
  return v;
}

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace deqmcl
