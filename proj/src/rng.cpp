#include "nearid/rng.hpp"

#include <cmath>

namespace nearid {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64-bit offset basis
  for (unsigned char c : text) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

// splitmix64 finalizer; decorrelates nearby seeds.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return mix64(seed ^ mix64(fnv1a64(tag)));
}

double Rng::uniform01() {
  // Top 53 bits of the engine output, scaled to [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] x [0,1): flip u1 so log() never sees zero.
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

Vec Rng::gaussian(int d) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = normal();
  return v;
}

Vec Rng::on_sphere(int d) {
  for (;;) {
    Vec v = gaussian(d);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Vec Rng::in_ball(int d, double R) {
  const Vec dir = on_sphere(d);
  const double radial = R * std::pow(uniform01(), 1.0 / static_cast<double>(d));
  return radial * dir;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % n;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return x % n;
  }
}

}  // namespace nearid
