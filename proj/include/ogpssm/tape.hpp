#ifndef OGPSSM_TAPE_HPP
#define OGPSSM_TAPE_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

// Reverse-mode scalar tape. Every arithmetic operation on a Rev whose operands
// are tape variables appends one node; a backward sweep over the node array
// yields the gradient of one scalar output with respect to all leaves.
//
// The active tape is thread-local: each worker thread owns its tape, so
// per-sample losses can be differentiated in parallel and their gradients
// summed in a fixed order afterwards.

namespace ogpssm::ad {

class Tape {
 public:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double wa;
    double wb;
  };

  std::int32_t leaf(double) {
    nodes_.push_back(Node{-1, -1, 0.0, 0.0});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::int32_t unary(std::int32_t a, double wa) {
    nodes_.push_back(Node{a, -1, wa, 0.0});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::int32_t binary(std::int32_t a, double wa, std::int32_t b, double wb) {
    nodes_.push_back(Node{a, b, wa, wb});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// Adjoints of every node given d(output)/d(output) = 1 at `root`.
  /// The returned reference is invalidated by the next call.
  const std::vector<double>& backward(std::int32_t root) {
    adjoint_.assign(nodes_.size(), 0.0);
    if (root >= 0) adjoint_[static_cast<std::size_t>(root)] = 1.0;
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      const double ad = adjoint_[k];
      if (ad == 0.0) continue;
      const Node& n = nodes_[k];
      if (n.a >= 0) adjoint_[static_cast<std::size_t>(n.a)] += n.wa * ad;
      if (n.b >= 0) adjoint_[static_cast<std::size_t>(n.b)] += n.wb * ad;
    }
    return adjoint_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> adjoint_;
};

Tape* active_tape();
void set_active_tape(Tape* tape);

/// RAII activation of a tape on the current thread.
class ScopedTape {
 public:
  explicit ScopedTape(Tape& tape) : previous_(active_tape()) { set_active_tape(&tape); }
  ~ScopedTape() { set_active_tape(previous_); }
  ScopedTape(const ScopedTape&) = delete;
  ScopedTape& operator=(const ScopedTape&) = delete;

 private:
  Tape* previous_;
};

/// Tape variable. Default-constructed and double-constructed values are
/// constants (no node); `leaf` creates a differentiable input.
struct Rev {
  double v;
  std::int32_t i;

  Rev() : v(0.0), i(-1) {}
  Rev(double x) : v(x), i(-1) {}  // NOLINT: implicit constant lift is intended

  static Rev leaf(double x) {
    Tape* t = active_tape();
    assert(t != nullptr && "Rev::leaf requires an active tape");
    return Rev{x, t->leaf(x)};
  }

  bool is_const() const { return i < 0; }

 private:
  Rev(double value, std::int32_t index) : v(value), i(index) {}

  friend Rev make_tracked(double value, std::int32_t index);
};

inline Rev make_tracked(double value, std::int32_t index) { return Rev{value, index}; }

inline Rev unary_op(const Rev& x, double value, double dx) {
  if (x.is_const()) return Rev(value);
  return make_tracked(value, active_tape()->unary(x.i, dx));
}

inline Rev binary_op(const Rev& x, const Rev& y, double value, double dx, double dy) {
  if (x.is_const() && y.is_const()) return Rev(value);
  Tape* t = active_tape();
  if (y.is_const()) return make_tracked(value, t->unary(x.i, dx));
  if (x.is_const()) return make_tracked(value, t->unary(y.i, dy));
  return make_tracked(value, t->binary(x.i, dx, y.i, dy));
}

inline Rev operator+(const Rev& a, const Rev& b) { return binary_op(a, b, a.v + b.v, 1.0, 1.0); }
inline Rev operator-(const Rev& a, const Rev& b) { return binary_op(a, b, a.v - b.v, 1.0, -1.0); }
inline Rev operator*(const Rev& a, const Rev& b) { return binary_op(a, b, a.v * b.v, b.v, a.v); }
inline Rev operator/(const Rev& a, const Rev& b) {
  const double inv = 1.0 / b.v;
  return binary_op(a, b, a.v * inv, inv, -a.v * inv * inv);
}
inline Rev operator-(const Rev& a) { return unary_op(a, -a.v, -1.0); }
inline Rev operator+(const Rev& a) { return a; }

inline Rev& operator+=(Rev& a, const Rev& b) { return a = a + b; }
inline Rev& operator-=(Rev& a, const Rev& b) { return a = a - b; }
inline Rev& operator*=(Rev& a, const Rev& b) { return a = a * b; }
inline Rev& operator/=(Rev& a, const Rev& b) { return a = a / b; }

inline bool operator<(const Rev& a, const Rev& b) { return a.v < b.v; }
inline bool operator>(const Rev& a, const Rev& b) { return a.v > b.v; }
inline bool operator<=(const Rev& a, const Rev& b) { return a.v <= b.v; }
inline bool operator>=(const Rev& a, const Rev& b) { return a.v >= b.v; }
inline bool operator==(const Rev& a, const Rev& b) { return a.v == b.v; }
inline bool operator!=(const Rev& a, const Rev& b) { return a.v != b.v; }

inline Rev exp(const Rev& x) {
  const double e = std::exp(x.v);
  return unary_op(x, e, e);
}
inline Rev log(const Rev& x) { return unary_op(x, std::log(x.v), 1.0 / x.v); }
inline Rev sqrt(const Rev& x) {
  const double s = std::sqrt(x.v);
  return unary_op(x, s, 0.5 / s);
}
inline Rev sin(const Rev& x) { return unary_op(x, std::sin(x.v), std::cos(x.v)); }
inline Rev cos(const Rev& x) { return unary_op(x, std::cos(x.v), -std::sin(x.v)); }
inline Rev tan(const Rev& x) {
  const double t = std::tan(x.v);
  return unary_op(x, t, 1.0 + t * t);
}
inline Rev abs(const Rev& x) { return x.v < 0.0 ? -x : x; }
inline Rev fabs(const Rev& x) { return abs(x); }
inline Rev atan(const Rev& x) { return unary_op(x, std::atan(x.v), 1.0 / (1.0 + x.v * x.v)); }
inline Rev pow(const Rev& x, double p) {
  return unary_op(x, std::pow(x.v, p), p * std::pow(x.v, p - 1.0));
}

/// Lower clamp with zero derivative on the clamped branch.
inline Rev clamp_min(const Rev& x, double lo) { return x.v < lo ? Rev(lo) : x; }

inline double value(double x) { return x; }
inline double value(const Rev& x) { return x.v; }

inline bool isfinite(const Rev& x) { return std::isfinite(x.v); }

}  // namespace ogpssm::ad

namespace Eigen {

template <>
struct NumTraits<ogpssm::ad::Rev> : NumTraits<double> {
  using Real = ogpssm::ad::Rev;
  using NonInteger = ogpssm::ad::Rev;
  using Nested = ogpssm::ad::Rev;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3,
  };
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<ogpssm::ad::Rev, double, BinaryOp> {
  using ReturnType = ogpssm::ad::Rev;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, ogpssm::ad::Rev, BinaryOp> {
  using ReturnType = ogpssm::ad::Rev;
};

}  // namespace Eigen

namespace ogpssm::ad {

inline Rev operator+(const Rev& a, double b) { return a + Rev(b); }
inline Rev operator+(double a, const Rev& b) { return Rev(a) + b; }
inline Rev operator-(const Rev& a, double b) { return a - Rev(b); }
inline Rev operator-(double a, const Rev& b) { return Rev(a) - b; }
inline Rev operator*(const Rev& a, double b) { return a * Rev(b); }
inline Rev operator*(double a, const Rev& b) { return Rev(a) * b; }
inline Rev operator/(const Rev& a, double b) { return a / Rev(b); }
inline Rev operator/(double a, const Rev& b) { return Rev(a) / b; }

}  // namespace ogpssm::ad

#endif  // OGPSSM_TAPE_HPP
