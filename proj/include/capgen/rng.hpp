#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace capgen {

// Seedable counter-based generator (splitmix64). A single u64 word of state
// makes checkpointed runs bit-reproducible; callers own the instance and
// thread it explicitly into anything stochastic.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller without a cached spare, so the state stays a single word.
  double normal() {
    double u = 1.0 - uniform();
    double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Index draw proportional to non-negative weights.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("Rng::categorical: weights sum to zero");
    const double r = uniform() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (r < cum) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent deterministic stream, e.g. one per dataset record.
  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    r.next_u64();
    return r;
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

}  // namespace capgen
