#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cakgcn {

// Deterministic random stream. mt19937_64 is fully specified by the standard;
// the bounded/real draws below avoid std::*_distribution, whose output is
// implementation-defined, so identical seeds give identical streams on any
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform on [0, n)
  std::uint64_t next_index(std::uint64_t n);

  // uniform on [0, 1) with 53 random bits
  double next_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // uniform on [lo, hi)
  double next_real(double lo, double hi) { return lo + (hi - lo) * next_real(); }

  bool next_bernoulli(double p) { return next_real() < p; }

  // Box-Muller standard normal
  double next_normal();

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// 64-bit FNV-1a, used both for content digests and for deriving named
// sub-streams from a master seed.
std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis = 1469598103934665603ull);
std::uint64_t fnv1a64(std::string_view s);

// Derives an independent stream from (seed, label[, index]) so adding or
// removing one consumer never shifts another consumer's draws.
Rng make_rng(std::uint64_t seed, std::string_view label);
Rng make_rng(std::uint64_t seed, std::string_view label, std::uint64_t index);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_index(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace cakgcn
