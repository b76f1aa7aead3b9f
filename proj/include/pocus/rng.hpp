#ifndef POCUS_RNG_HPP
#define POCUS_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pocus {

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// Deterministic RNG. All conversions from raw 64-bit draws are written out
// explicitly so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream tagged by name; a pure function of (seed, tag).
  static Rng derived(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = fnv1a64(tag);
    h = fnv1a64(&seed, sizeof(seed), h);
    return Rng(h);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace pocus

#endif  // POCUS_RNG_HPP
