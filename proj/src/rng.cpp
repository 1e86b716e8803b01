#include "qldp/rng.hpp"

#include <array>

namespace qldp {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::mt19937_64 make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t replica) {
  const std::uint64_t a = mix64(seed);
  const std::uint64_t b = mix64(a ^ mix64(static_cast<std::uint64_t>(tag)));
  const std::uint64_t c = mix64(b ^ mix64(replica + 0x632be59bd9b4e019ULL));
  std::array<std::uint32_t, 6> words{
      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace qldp
