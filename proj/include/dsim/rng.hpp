#pragma once

#include <cstdint>
#include <vector>

namespace dsim {

// Counter-based generator: output i of stream (seed, stream_id) is a pure
// function of (seed, stream_id, i), so independent streams can be handed out
// without coordination and replay is exact.
class Rng {
 public:
  Rng() = default;
  Rng(std::uint64_t seed, std::uint64_t stream_id) : key_(derive_key(seed, stream_id)) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t next() { return mix(key_ ^ (0xd1b54a32d192ed03ULL * ++ctr_)); }

  // Uniform in [0, bound), bound > 0. Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t bound) {
    std::uint64_t threshold = -bound % bound;
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return unit() < p;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream_id) {
    return mix(mix(seed) ^ mix(stream_id * 0x2545f4914f6cdd1dULL + 1));
  }

  std::uint64_t key_ = 0x853c49e6748fea9bULL;
  std::uint64_t ctr_ = 0;
};

}  // namespace dsim
