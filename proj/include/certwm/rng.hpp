#pragma once

// Counter-based deterministic random numbers. Every noise sample is a pure
// function of (master_seed, image_id, sample_index), so batches are
// byte-identical regardless of thread count or scheduling, and any single
// sample can be regenerated in isolation.

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace certwm {

namespace detail {

// SplitMix64 output function (Steele, Lea, Flood 2014); also used as the
// avalanche mixer when deriving stream keys.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a;
  splitmix64_next(s);
  s ^= b + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
  splitmix64_next(s);
  return s;
}

}  // namespace detail

// FNV-1a, used to derive stable image identifiers from file names.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// One stream keyed by (master_seed, image_id, sample_index).
class CounterRng {
 public:
  CounterRng(std::uint64_t master_seed, std::uint64_t image_id,
             std::uint64_t sample_index) {
    state_ = detail::mix(detail::mix(master_seed, image_id), sample_index);
  }

  std::uint64_t next_u64() { return detail::splitmix64_next(state_); }

  // Uniform in the open interval (0,1); never returns an endpoint.
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; generated in pairs.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_open01();
    double u2 = next_open01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill_gaussian(std::span<double> out, double sigma) {
    for (auto& v : out) v = sigma * next_gaussian();
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// N(0, sigma^2 I) noise for sample j of an image, as a flat buffer of the
// given element count.
inline std::vector<double> sample_noise(std::size_t element_count, double sigma,
                                        std::uint64_t master_seed,
                                        std::uint64_t image_id,
                                        std::uint64_t sample_index) {
  std::vector<double> noise(element_count);
  CounterRng rng(master_seed, image_id, sample_index);
  rng.fill_gaussian(noise, sigma);
  return noise;
}

}  // namespace certwm
