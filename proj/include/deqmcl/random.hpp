#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace deqmcl {

/// Seedable random stream. Every consumer (truth, sensor, each filter) owns
/// one, so compared methods can run under common random numbers.
///
/// Draw order contract: normal() and uniform() each consume exactly one
/// variate from the stream, in call order.
class RandomStream {
public:
  explicit RandomStream(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
    normal_.reset();
    uniform_.reset();
  }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sigma) { return mean + sigma * normal_(engine_); }

  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace detail

/// Seed for the named stream of one trial. Pure function of its inputs.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view stream,
                                    std::uint64_t trial) {
  std::uint64_t h = detail::splitmix64(master_seed);
  h = detail::splitmix64(h ^ detail::fnv1a(stream));
  return detail::splitmix64(h ^ trial);
}

inline RandomStream derive_stream(std::uint64_t master_seed, std::string_view stream,
                                  std::uint64_t trial) {
  return RandomStream(derive_seed(master_seed, stream, trial));
}

}  // namespace deqmcl
