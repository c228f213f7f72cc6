#ifndef OGPSSM_LINALG_HPP
#define OGPSSM_LINALG_HPP

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ogpssm/tape.hpp"
#include "ogpssm/types.hpp"

namespace ogpssm {

using ad::value;

/// Escalation schedule for conditioning repair: try the matrix as-is, then add
/// jitter*I from `start`, multiplying by `factor` up to `max` before failing.
struct JitterPolicy {
  double start = 1e-10;
  double max = 1e-4;
  double factor = 10.0;

  JitterPolicy with_floor(double floor) const {
    JitterPolicy p = *this;
    if (floor > p.start) p.start = floor;
    if (p.max < p.start) p.max = p.start;
    return p;
  }
};

template <typename T>
struct CholeskyResult {
  MatX<T> L;      // lower triangular, L*L^T = input + jitter*I
  double jitter;  // jitter actually applied
};

namespace detail {

// Left-looking Cholesky. Fails on pivots at or below a relative threshold,
// not just negative ones: a numerically singular matrix would otherwise
// factor "successfully" with pivots near machine noise and poison every
// subsequent triangular solve.
template <typename T>
bool cholesky_in_place(MatX<T>& a) {
  const Eigen::Index n = a.rows();
  double diag_scale = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    diag_scale = std::max(diag_scale, std::abs(value(a(j, j))));
  const double pivot_floor = 1e-12 * diag_scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    T d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(value(d) > pivot_floor)) return false;
    const T root = sqrt(d);
    a(j, j) = root;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      T s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / root;
    }
    for (Eigen::Index k = j + 1; k < n; ++k) a(j, k) = T(0.0);
  }
  return true;
}

using std::sqrt;

}  // namespace detail

template <typename T>
CholeskyResult<T> cholesky(const MatX<T>& m, const JitterPolicy& policy = {}) {
  require(m.rows() == m.cols(), "cholesky: matrix must be square");
  double jitter = 0.0;
  while (true) {
    MatX<T> a = m;
    if (jitter > 0.0) {
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) = a(i, i) + T(jitter);
    }
    if (detail::cholesky_in_place(a)) return {std::move(a), jitter};
    if (jitter >= policy.max) {
      std::ostringstream oss;
      oss << "cholesky failed for " << m.rows() << "x" << m.cols()
          << " matrix at max jitter " << policy.max;
      throw NotPositiveDefinite(oss.str());
    }
    jitter = (jitter == 0.0) ? policy.start : jitter * policy.factor;
    if (jitter > policy.max) jitter = policy.max;
  }
}

template <typename T>
VecX<T> solve_lower(const MatX<T>& L, const VecX<T>& b) {
  const Eigen::Index n = L.rows();
  VecX<T> x = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    T s = x[i];
    for (Eigen::Index k = 0; k < i; ++k) s -= L(i, k) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

template <typename T>
VecX<T> solve_lower_transpose(const MatX<T>& L, const VecX<T>& b) {
  const Eigen::Index n = L.rows();
  VecX<T> x = b;
  for (Eigen::Index i = n; i-- > 0;) {
    T s = x[i];
    for (Eigen::Index k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

/// x = (L*L^T)^{-1} b
template <typename T>
VecX<T> solve_cholesky(const MatX<T>& L, const VecX<T>& b) {
  return solve_lower_transpose(L, solve_lower(L, b));
}

template <typename T>
MatX<T> solve_cholesky(const MatX<T>& L, const MatX<T>& b) {
  MatX<T> x(b.rows(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    x.col(j) = solve_cholesky<T>(L, VecX<T>(b.col(j)));
  return x;
}

template <typename T>
T log_det_from_cholesky(const MatX<T>& L) {
  T s(0.0);
  for (Eigen::Index i = 0; i < L.rows(); ++i) s += log(L(i, i));
  return s + s;
}

template <typename T>
MatX<T> symmetrize(const MatX<T>& m) {
  return ((m + m.transpose()) * T(0.5)).eval();
}

inline bool is_symmetric(const Mat& m, double rel_tol = 1e-10) {
  const double scale = m.cwiseAbs().maxCoeff() + 1e-300;
  return ((m - m.transpose()).cwiseAbs().maxCoeff() / scale) <= rel_tol;
}

/// Symmetric PSD square root with negative eigenvalues clamped to zero.
inline Mat sqrt_psd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize<double>(m));
  Vec lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

// --- half-vectorization (lower triangle, column-stacked) ---

inline Eigen::Index vech_dim(Eigen::Index d) { return d * (d + 1) / 2; }

/// Position of entry (i, j), i >= j, inside vech.
inline Eigen::Index vech_index(Eigen::Index i, Eigen::Index j, Eigen::Index d) {
  return j * d - j * (j - 1) / 2 + (i - j);
}

inline Vec vech(const Mat& m) {
  const Eigen::Index d = m.rows();
  Vec out(vech_dim(d));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) out[k++] = m(i, j);
  return out;
}

inline Mat unvech(const Vec& v, Eigen::Index d) {
  Mat out(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) {
      out(i, j) = v[k];
      out(j, i) = v[k];
      ++k;
    }
  return out;
}

}  // namespace ogpssm

#endif  // OGPSSM_LINALG_HPP
