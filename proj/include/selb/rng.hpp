#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace selb {

// Mixes a root seed with a stream name (or index) so that independent
// consumers (init, shuffle, dropout, noise, ...) draw from unrelated
// streams that are still fully determined by the root seed.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view name);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Deterministic random source. All sampling is implemented directly on top
// of mt19937_64 (no std::uniform_*_distribution, no std::shuffle) so the
// produced streams do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n); n must be >= 1.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller (pairs cached).
  double normal();

  // Fisher-Yates using this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // Child stream derived from this stream's seed and a name; independent of
  // how much of the parent stream has been consumed.
  Rng substream(std::string_view name) const {
    return Rng(mix_seed(seed_, name));
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace selb
