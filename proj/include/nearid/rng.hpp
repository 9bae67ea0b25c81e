// Deterministic random sampling.
//
// std::mt19937_64 is specified exactly by the standard, but the
// *distributions* (std::normal_distribution etc.) are implementation-defined
// and differ across standard libraries.  Reproducibility across toolchains is
// a hard requirement here, so this header implements its own transforms on
// top of the raw engine: 53-bit uniforms, Box-Muller normals, and the usual
// sphere/ball samplers built from them.
#pragma once

#include "nearid/linalg.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace nearid {

// FNV-1a 64-bit hash; used for seed derivation and config fingerprints.
std::uint64_t fnv1a64(std::string_view text);

// Stable per-purpose seed: mixes `seed` with a textual tag so independent
// sampling tasks never share a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (the cached second draw is kept, so a
  // sequence of calls consumes engine output at a fixed rate of one pair of
  // 64-bit words per two normals).
  double normal();

  // Vector of iid standard normals.
  Vec gaussian(int d);

  // Uniform on the unit sphere S^{d-1}.
  Vec on_sphere(int d);

  // Uniform in the closed ball of radius R (Gaussian direction times
  // radial factor R * U^{1/d}).
  Vec in_ball(int d, double R);

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nearid
