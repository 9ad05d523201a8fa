#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace simit {

/// Deterministic RNG with explicitly implemented distributions so that
/// sequences are reproducible across standard libraries and serializable
/// for bit-exact checkpoint resume.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  /// Standard normal via Box-Muller; second sample of each pair is cached.
  double normal();

  /// Bernoulli(p).
  bool coin(double p) { return uniform() < p; }

  std::string serialize() const;
  static Rng deserialize(const std::string& s);

  /// Derives an independent substream from a root seed and a stream tag.
  static Rng substream(std::uint64_t root_seed, std::uint64_t stream);

 private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// splitmix64 finalizer; used for seed derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace simit
