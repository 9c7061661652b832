#pragma once
// Deterministic random streams.  Every stochastic object in the library draws
// from a RandomStream keyed by (seed, domain, indices...), so results are
// bit-reproducible for a fixed seed and independent of worker count or of
// which other streams were consumed in between.
//
// Distributions are implemented here instead of through <random>'s
// distribution classes: the standard leaves their algorithms unspecified, and
// we need the draw sequence to be stable across standard libraries.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>

namespace levycone {

// splitmix64 step: advances `state` and returns a well-mixed output word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds a key (seed, tags, indices...) into a single seeding word.  Each
// absorbed word is followed by a full avalanche of the running state (the
// mixed output *becomes* the state); anything weaker lets keys differing in
// two small components collide, e.g. (seed+1, index k) against
// (seed, index k^1) when no carry propagates.
inline std::uint64_t mix_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t state = 0x243f6a8885a308d3ULL;  // pi fraction, arbitrary
  for (std::uint64_t w : words) {
    state ^= w;
    state = splitmix64(state);
  }
  return splitmix64(state);
}

// Stream domains keep independent uses of the same user seed decoupled.
namespace stream {
inline constexpr std::uint64_t kBand = 0x01;        // sampler mass band
inline constexpr std::uint64_t kDynamicsAtom = 0x02;// per-atom SDE driver
inline constexpr std::uint64_t kBesselPath = 0x03;  // squared-Bessel paths
inline constexpr std::uint64_t kReplica = 0x04;     // generic per-replica use
inline constexpr std::uint64_t kSemigroup = 0x05;   // one-particle semigroup
inline constexpr std::uint64_t kScratch = 0x06;     // tests, ad-hoc draws
}  // namespace stream

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed_word) : eng_(seed_word) {}
  RandomStream(std::uint64_t seed, std::uint64_t domain, std::uint64_t a = 0,
               std::uint64_t b = 0, std::uint64_t c = 0)
      : eng_(mix_words({seed, domain, a, b, c})) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Marsaglia's polar method with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Poisson count by Knuth's product method; means above 30 are split into
  // chunks (Poisson additivity), so there is no accuracy cliff at large mean.
  long long poisson(double mean) {
    if (!(mean >= 0.0)) throw std::domain_error("poisson: mean must be >= 0");
    long long total = 0;
    while (mean > 0.0) {
      const double chunk = mean > 30.0 ? 30.0 : mean;
      mean -= chunk;
      const double limit = std::exp(-chunk);
      double prod = uniform();
      long long k = 0;
      while (prod > limit) {
        prod *= uniform();
        ++k;
      }
      total += k;
    }
    return total;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace levycone
