#ifndef OGPSSM_RNG_HPP
#define OGPSSM_RNG_HPP

#include <cmath>
#include <cstdint>

#include "ogpssm/types.hpp"

namespace ogpssm {

// Counter-based generator (SplitMix64 finalizer over key+counter). Streams are
// value types; `split` derives an independent substream from a key, which is
// how per-sample / per-iteration noise is pre-assigned before any parallel
// dispatch. No global state anywhere.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6A09E667F3BCC909ull)) {}

  std::uint64_t next_u64() { return mix(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Marsaglia polar method (spare cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double r = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * r;
    has_spare_ = true;
    return u * r;
  }

  Vec normal_vector(Eigen::Index n) {
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Mat out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal();
    return out;
  }

  /// Independent substream; deterministic in (this stream's seed, key).
  RngStream split(std::uint64_t key) const {
    RngStream child(0);
    child.key_ = mix(key_ ^ mix(key + 0xD1B54A32D192ED03ull));
    return child;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ogpssm

#endif  // OGPSSM_RNG_HPP
