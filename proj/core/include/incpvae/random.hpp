#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace incpvae {

// Independent random streams. Each purpose draws from its own generator so
// that e.g. changing the batch order never perturbs weight initialization.
enum class Stream : std::uint64_t {
  kInit = 1,     // weight initialization
  kReparam = 2,  // epsilon for the reparameterization trick
  kNoise = 3,    // OOD noise injection
  kShuffle = 4,  // mini-batch order
  kEval = 5,     // fixed evaluation epsilon
  kSynthetic = 6,
  kTarget = 7,   // posterior-sample target mode
};

// xoshiro256** 1.0 (Blackman & Vigna), seeded through splitmix64.
//
// The stream id is mixed into the seed, so Rng(seed, kInit) and
// Rng(seed, kNoise) produce unrelated sequences. Normal deviates use the
// Box-Muller transform on two 53-bit uniforms; both outputs of each
// transform are consumed in order. The whole pipeline is specified here so
// results do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, Stream stream = Stream::kInit);
  Rng(std::uint64_t seed, Stream stream, std::uint64_t substream);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [0, bound), bound > 0, without modulo bias.
  std::uint64_t uniform_index(std::uint64_t bound);
  double normal();

 private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Derives a child seed, e.g. one per noise level.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// In-place Fisher-Yates shuffle driven by `rng`.
void shuffle(std::vector<std::size_t>& items, Rng& rng);

}  // namespace incpvae
