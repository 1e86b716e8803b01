#pragma once

#include <cstdint>
#include <random>

namespace qldp {

/// Mixes a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t z);

/// Stream labels so that the same (seed, replica) never shares a generator
/// between unrelated consumers.
enum class StreamTag : std::uint64_t {
  Medium = 1,
  Path = 2,
  FastPath = 3,
  Resolvent = 4,
  Ergodic = 5,
};

/// Independent generator for (seed, tag, replica). The stream depends only on
/// these three values, so replicas can run in any order.
std::mt19937_64 make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t replica = 0);

/// Standard normal sampler bound to one stream.
class GaussianSource {
 public:
  explicit GaussianSource(std::mt19937_64 engine) : engine_(std::move(engine)) {}

  double operator()() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace qldp
