#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace marl_dyn {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a seed and a list of keys (run index, grid index, stream id...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(base);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

enum class StreamKind : std::uint64_t { action = 1, minibatch = 2, environment = 3, init = 4 };

/// Independent per-purpose random streams for one simulation run.
///
/// action realizes exploration/policy-sampling noise, minibatch realizes
/// gradient noise from replay sampling, environment feeds the transition
/// noise hook and init draws network initializations. Streams are keyed per
/// agent so adding an agent never shifts another agent's draws.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t run_seed) : seed_(run_seed), environment_(stream_seed(StreamKind::environment, 0)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_seed(StreamKind kind, std::uint64_t agent) const noexcept {
    return derive_seed(seed_, {static_cast<std::uint64_t>(kind), agent});
  }
  Rng make(StreamKind kind, std::uint64_t agent) const { return Rng(stream_seed(kind, agent)); }
  Rng& environment() noexcept { return environment_; }

 private:
  std::uint64_t seed_;
  Rng environment_;
};

}  // namespace marl_dyn
