#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace sononet {

// xoshiro256** with splitmix64 seeding. Hand-rolled so that draws are
// reproducible across standard library implementations; every stochastic
// component in the project goes through this generator.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  // Independent substream: serial and parallel generation over streams agree.
  static Rng stream(uint64_t seed, uint64_t stream_id) {
    uint64_t x = seed;
    uint64_t a = splitmix64(x);
    x = a ^ (stream_id * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull);
    return Rng(splitmix64(x));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0,1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return lo + int(next_u64() % uint64_t(hi - lo + 1));
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

  // Standard normal via Box-Muller, one spare cached.
  float normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 1e-300);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = float(r * std::sin(a));
    has_spare_ = true;
    return float(r * std::cos(a));
  }

  bool bernoulli(double p) { return next_double() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<uint64_t, 4> state_{};
  float spare_ = 0.f;
  bool has_spare_ = false;
};

}  // namespace sononet
