#ifndef LOOKAHES_RNG_HPP
#define LOOKAHES_RNG_HPP

// Counter-based random number generation (Philox4x32-10) with cheap stream
// forking.  Every consumer owns a SeedStream forked from its parent with a
// distinct label, so draw order in one component never perturbs another and
// restarts can be processed in any order (or in parallel) with identical
// results.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace lookahes {

namespace detail {

// splitmix64 finalizer; used to key Philox from (root, stream id).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Reserved fork labels for the named substreams used across the library.
// Components fork further with locally meaningful labels (e.g. restart index).
namespace streams {
constexpr std::uint64_t surrogate_fit = 0x5F1D;
constexpr std::uint64_t rff = 0x4FF0;
constexpr std::uint64_t prior_w = 0x5057;
constexpr std::uint64_t matheron_noise = 0x3A7E;
constexpr std::uint64_t policy_init = 0x9017;
constexpr std::uint64_t vmf = 0x0F39;
constexpr std::uint64_t env_noise = 0xE025;
constexpr std::uint64_t cost_noise = 0xC057;
constexpr std::uint64_t init_design = 0x1D5E;
constexpr std::uint64_t restart_base = 0x2E57;  // + restart index
constexpr std::uint64_t acq_base = 0xAC4B;      // MC base samples (EI/PI/KG)
constexpr std::uint64_t msl_init = 0x3571;
constexpr std::uint64_t bo_step_base = 0xB057;  // + BO step index
}  // namespace streams

// Philox4x32-10 keyed by (root seed, stream id).  Value semantics: copies
// evolve independently; identical (root, id, position) => identical output.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t root_seed, std::uint64_t stream_id = 0)
      : root_(root_seed), id_(stream_id) {
    const std::uint64_t k = detail::mix64(root_);
    key0_ = static_cast<std::uint32_t>(k);
    key1_ = static_cast<std::uint32_t>(k >> 32);
    const std::uint64_t s = detail::mix64(id_ ^ 0xA5A5A5A5A5A5A5A5ULL);
    sid0_ = static_cast<std::uint32_t>(s);
    sid1_ = static_cast<std::uint32_t>(s >> 32);
  }

  // Child stream: same root, new id derived from (id, label).  Deterministic,
  // and distinct labels give statistically independent streams.
  SeedStream fork(std::uint64_t label) const {
    return SeedStream(root_, detail::mix64(id_ + 0x9E3779B97F4A7C15ULL * (label + 1)));
  }

  std::uint64_t root_seed() const { return root_; }
  std::uint64_t stream_id() const { return id_; }

  std::uint32_t next_u32() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(theta);
    have_spare_ = true;
    return radius * std::cos(theta);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; boosts shape < 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      const double u = 1.0 - uniform();  // (0, 1]
      return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  // Chi-square with k degrees of freedom (k >= 1, integer).
  double chi_square(int k) {
    if (k < 1) throw std::invalid_argument("chi_square: k must be >= 1");
    return 2.0 * gamma(0.5 * static_cast<double>(k));
  }

  // Beta(a, b) from two gammas.
  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

 private:
  void refill() {
    // Philox4x32-10.  Counter words: (block lo, block hi, stream id lo, hi).
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t c2 = sid0_;
    std::uint32_t c3 = sid1_;
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9U;
      k1 += 0xBB67AE85U;
    }
    buf_ = {c0, c1, c2, c3};
    buf_pos_ = 0;
    ++block_;
  }

  std::uint64_t root_ = 0, id_ = 0;
  std::uint32_t key0_ = 0, key1_ = 0, sid0_ = 0, sid1_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Free-function spelling used throughout: child stream for a named component.
inline SeedStream fork_stream(const SeedStream& parent, std::uint64_t label) {
  return parent.fork(label);
}

}  // namespace lookahes

#endif  // LOOKAHES_RNG_HPP
