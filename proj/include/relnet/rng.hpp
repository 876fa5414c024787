#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace relnet {

// 64-bit FNV-1a over a byte string, seeded so distinct (seed, site) pairs
// land in distinct streams.
constexpr uint64_t fnv1a64(std::string_view s,
                           uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {
constexpr uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based stream (SplitMix64): output i is mix(key + i*gamma), so a
// stream is fully determined by its key and the number of draws made.
class RngStream {
 public:
  explicit RngStream(uint64_t key) : state_(key) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return detail::mix64(state_);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // inclusive on both ends
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return next_double() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Root generator. Every stochastic site derives its stream from
// (seed, site name[, index]); draw order at one site never perturbs another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  RngStream stream(std::string_view site) const {
    return RngStream(detail::mix64(seed_ ^ fnv1a64(site)));
  }

  RngStream stream(std::string_view site, uint64_t index) const {
    return RngStream(detail::mix64(detail::mix64(seed_ ^ fnv1a64(site)) +
                                   index * 0x9e3779b97f4a7c15ull));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
};

}  // namespace relnet
