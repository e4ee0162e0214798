#pragma once
// Deterministic splittable RNG (splitmix64 core). This is the only
// randomness source in the library; every consumer derives a child
// stream from a label so results do not depend on call order.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mvt {

class Rng {
public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  // Child generator derived from this generator's seed and a label.
  // Independent of how many values the parent has drawn.
  Rng split(std::string_view label) const {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return Rng(mix(seed_ ^ 0x9e3779b97f4a7c15ULL, h));
  }
  Rng split(std::string_view label, uint64_t index) const {
    return Rng(mix(split(label).seed_, index));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }  // [0,1)

  float uniform(float lo, float hi) {
    return lo + (hi - lo) * static_cast<float>(uniform());
  }

  int64_t index(int64_t n) {  // uniform in [0, n)
    int64_t v = static_cast<int64_t>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  // Box-Muller; hand-rolled because std distributions are not
  // bit-reproducible across standard libraries.
  float normal() {
    constexpr double two_pi = 6.283185307179586476925287;
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return static_cast<float>(r * std::cos(two_pi * u2));
  }

  float truncated_normal(float stddev) {  // resampled outside 2 sigma
    for (;;) {
      float z = normal();
      if (std::fabs(z) <= 2.0f) return z * stddev;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(index(i + 1))]);
    }
  }

  uint64_t seed() const { return seed_; }

private:
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t seed_;
  uint64_t state_;
};

}  // namespace mvt
