#ifndef PBVAE_RNG_HPP
#define PBVAE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace pbvae {

// Named substreams. Every noise consumer owns its own stream so that turning
// one source on or off (e.g. dropout) never shifts the draws of another.
enum class StreamId : std::uint64_t {
  data_shuffle = 1,
  latent_noise = 2,
  weight_noise = 3,
  dropout = 4,
  init = 5,
  certificate_noise = 6,
  scratch = 7,
};

// Counter-based generator: draw i of stream k is mix64(key_k + i*gamma), so a
// stream is a pure function of (seed, derivation path, counter). Identical
// seeds give bit-identical streams on every platform. Copying an RngStream
// freezes its position, which is how callers replay noise (common random
// numbers for finite-difference checks).
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed) : key_(mix64(seed ^ kSeedSalt)), counter_(0) {}

  // Derives an independent child stream. The child depends only on this
  // stream's key and the (id, index) path, never on how many draws were made.
  RngStream substream(StreamId id, std::uint64_t index = 0) const {
    RngStream child;
    std::uint64_t k = key_ ^ (kStreamSalt * (static_cast<std::uint64_t>(id) + 1));
    child.key_ = mix64(mix64(k) + kGamma * index);
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() {
    std::uint64_t v = mix64(key_ + kGamma * (++counter_));
    return v;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    // Guard u1 = 0 (log of zero).
    double r = std::sqrt(-2.0 * std::log(u1 + 0x1.0p-64));
    double t = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x243F6A8885A308D3ULL;
  static constexpr std::uint64_t kStreamSalt = 0xD1342543DE82EF95ULL;

  std::uint64_t key_;
  std::uint64_t counter_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pbvae

#endif  // PBVAE_RNG_HPP
