#pragma once

#include <cstdint>
#include <random>

namespace mfamd {

// splitmix64 finalizer. Used to turn structured ids into well separated seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seedable RNG stream.
//
// substream(id) derives a stream that is deterministic given the parent's
// key alone (the parent's engine state is not consumed), so per-block and
// per-cell streams are reproducible under any thread schedule. Substreams of
// distinct ids, and a parent and its substreams, behave as independent
// generators for Monte Carlo purposes.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(seed), engine_(mix64(seed)) {}

  RngStream substream(std::uint64_t id) const {
    return RngStream(mix64(key_ ^ mix64(id ^ 0xd1b54a32d192ed03ull)));
  }
  RngStream substream(std::uint64_t a, std::uint64_t b) const {
    return substream(mix64(a) + 0x9e3779b97f4a7c15ull * b);
  }

  std::uint64_t key() const { return key_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  double normal() {
    return std::normal_distribution<double>(0.0, 1.0)(engine_);
  }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace mfamd
