#ifndef ADVRE_RNG_H_
#define ADVRE_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace advre {

// Deterministic random source. Derived values are computed by hand from the
// raw 64-bit engine output rather than std:: distributions, whose algorithms
// differ between standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent sub-stream for a named purpose ("data", "init", "dropout",
  // "batch", ...), so stages stay reproducible on their own.
  static Rng stream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h),
                      static_cast<std::uint32_t>(h >> 32)};
    Rng rng;
    rng.engine_.seed(seq);
    return rng;
  }

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // k distinct elements drawn uniformly without replacement (all of them,
  // in random order, when k >= v.size()).
  template <typename T>
  std::vector<T> sample(std::vector<T> v, std::size_t k) {
    const std::size_t take = k < v.size() ? k : v.size();
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(v[i], v[i + below(v.size() - i)]);
    }
    v.resize(take);
    return v;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace advre

#endif  // ADVRE_RNG_H_
