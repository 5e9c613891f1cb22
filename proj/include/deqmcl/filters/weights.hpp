#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "deqmcl/random.hpp"

namespace deqmcl {

/// Every particle weight vanished; the caller decides how to recover.
class DegeneracyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shifts log-weights in place so that sum(exp(lw)) == 1. Returns the log of
/// the normalizer that was removed.
inline double normalize_log_weights(std::span<double> log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("empty particle set");
  const double peak = *std::max_element(log_weights.begin(), log_weights.end());
  if (!(peak > -std::numeric_limits<double>::infinity()) || std::isnan(peak))
    throw DegeneracyError("all particle weights are zero");
  double sum = 0.0;
  for (double lw : log_weights) sum += std::exp(lw - peak);
  const double log_norm = peak + std::log(sum);
  for (double& lw : log_weights) lw -= log_norm;
  return log_norm;
}

inline std::vector<double> weights_from_log(std::span<const double> log_weights) {
  std::vector<double> w(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), w.begin(),
                 [](double lw) { return std::exp(lw); });
  return w;
}

/// 1 / sum(w^2) for normalized weights.
inline double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

/// Systematic resampling: one uniform offset u in [0, 1/n), then n equally
/// spaced pointers u + k/n over the cumulative weights. Returns the selected
/// source index for each of the n outputs, in non-decreasing order. Weights
/// need not be normalized. Consumes exactly one uniform variate.
inline std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                                    RandomStream& rng,
                                                    std::size_t n_out = 0) {
  const std::size_t m = weights.size();
  if (m == 0) throw std::invalid_argument("empty particle set");
  const std::size_t n = n_out == 0 ? m : n_out;

  double total = 0.0;
  std::size_t last_positive = m;
  for (std::size_t i = 0; i < m; ++i) {
    if (weights[i] < 0.0 || std::isnan(weights[i]))
      throw std::invalid_argument("negative or NaN weight");
    total += weights[i];
    if (weights[i] > 0.0) last_positive = i;
  }
  if (!(total > 0.0)) throw DegeneracyError("all particle weights are zero");

  // Pointers live in [0, n) and cumulative weights are scaled to total n.
  const double scale = static_cast<double>(n) / total;
  const double u = rng.uniform();
  std::vector<std::size_t> out;
  out.reserve(n);
  std::size_t i = 0;
  double cum = weights[0] * scale;
  for (std::size_t k = 0; k < n; ++k) {
    const double pointer = u + static_cast<double>(k);
    while (pointer >= cum && i < last_positive) {
      ++i;
      cum += weights[i] * scale;
    }
    out.push_back(i);
  }
  return out;
}

}  // namespace deqmcl
