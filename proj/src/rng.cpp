#include "cakgcn/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cakgcn {

std::uint64_t Rng::next_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_index(0)");
  // rejection sampling to stay exactly uniform
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = next_real();
  } while (u1 <= 0.0);
  u2 = next_real();
  double mag = std::sqrt(-2.0 * std::log(u1));
  double two_pi = 6.283185307179586476925286766559;
  spare_ = mag * std::sin(two_pi * u2);
  have_spare_ = true;
  return mag * std::cos(two_pi * u2);
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = basis;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

Rng make_rng(std::uint64_t seed, std::string_view label) {
  return Rng(splitmix64(seed ^ fnv1a64(label)));
}

Rng make_rng(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed ^ fnv1a64(label)) + index));
}

}  // namespace cakgcn
