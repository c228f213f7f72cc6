#ifndef OGPSSM_TYPES_HPP
#define OGPSSM_TYPES_HPP

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ogpssm {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Mat = MatX<double>;
using Vec = VecX<double>;

/// Covariance factorization failed even after the jitter ladder was exhausted.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

/// A training loss or gradient evaluated to NaN/inf and the retry did not help.
class NonFinite : public std::runtime_error {
 public:
  explicit NonFinite(const std::string& what) : std::runtime_error(what) {}
};

/// Backward-pass regularization grew past its cap without producing a usable step.
class RegularizationExhausted : public std::runtime_error {
 public:
  explicit RegularizationExhausted(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionMismatch(what);
}

}  // namespace ogpssm

#endif  // OGPSSM_TYPES_HPP
