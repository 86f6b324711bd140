#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace stril {

// Counter-based pseudo-random generator. A generator is a (key, counter)
// pair; drawing advances only the counter, and independent streams are
// obtained by deriving a new key from the parent key and a stream tag.
// All randomness in the library flows through handles of this type so that
// runs are reproducible regardless of evaluation order elsewhere.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x7c1592adc6f0358bULL)) {}

  // New independent stream; the child starts with a fresh counter.
  Rng derive(std::uint64_t tag) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(tag + 0x9e3779b97f4a7c15ULL));
    child.counter_ = 0;
    child.has_cached_normal_ = false;
    return child;
  }

  Rng derive(std::string_view tag) const { return derive(hash(tag)); }

  Rng derive(std::uint64_t a, std::uint64_t b) const {
    return derive(a).derive(b);
  }

  Rng derive(std::string_view tag, std::uint64_t b) const {
    return derive(tag).derive(b);
  }

  std::uint64_t next_u64() {
    return mix((++counter_) * 0x9e3779b97f4a7c15ULL + key_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    const std::uint64_t un = std::uint64_t(n);
    const std::uint64_t limit = ~std::uint64_t(0) - ~std::uint64_t(0) % un;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return int(x % un);
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0x1.0p-60) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
  }

  std::vector<double> normals(int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = normal();
    return out;
  }

  // Index sampled from an (unnormalized is not allowed) probability vector.
  int categorical(const std::vector<double>& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return int(i);
    }
    return int(probs.size()) - 1;
  }

  static std::uint64_t hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace stril
