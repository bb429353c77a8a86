#include "rtsim/rng.hpp"

#include <cmath>

namespace rtsim {

namespace {

// splitmix64; good enough statistically and trivially portable.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::string_view name)
    : state_(mix(master_seed ^ fnv1a(name))) {}

std::uint64_t RngStream::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double RngStream::uniform_open01() {
  // (x + 1) / 2^53 with x in [0, 2^53) yields (0, 1].
  const std::uint64_t x = next_u64() >> 11;
  return static_cast<double>(x + 1) * (1.0 / 9007199254740992.0);
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling to stay unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal(double mean, double stddev) {
  // Box-Muller, one value per call; the discarded pair keeps replay trivial.
  const double u1 = uniform_open01();
  const double u2 = uniform_open01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

double RngStream::normal_truncated(double mean, double stddev, double lo) {
  for (;;) {
    const double v = normal(mean, stddev);
    if (v >= lo) return v;
  }
}

}  // namespace rtsim
