#ifndef OGPSSM_GAUSSIAN_HPP
#define OGPSSM_GAUSSIAN_HPP

#include <numbers>

#include "ogpssm/linalg.hpp"
#include "ogpssm/rng.hpp"
#include "ogpssm/types.hpp"

namespace ogpssm {

template <typename T>
struct GaussianT {
  VecX<T> mean;
  MatX<T> cov;

  Eigen::Index dim() const { return mean.size(); }
};
using Gaussian = GaussianT<double>;

/// Matrix-variate normal over M x D matrices; equivalent to a Gaussian over
/// the column-stacked vectorization with covariance col_cov (x) row_cov.
template <typename T>
struct MatrixNormalT {
  MatX<T> mean;     // M x D
  MatX<T> row_cov;  // M x M
  MatX<T> col_cov;  // D x D
};
using MatrixNormal = MatrixNormalT<double>;

inline Gaussian to_gaussian(const MatrixNormal& mn) {
  const Eigen::Index m = mn.mean.rows(), d = mn.mean.cols();
  Gaussian g;
  g.mean = Eigen::Map<const Vec>(mn.mean.data(), m * d);
  g.cov.resize(m * d, m * d);
  for (Eigen::Index cj = 0; cj < d; ++cj)
    for (Eigen::Index ci = 0; ci < d; ++ci)
      g.cov.block(ci * m, cj * m, m, m) = mn.col_cov(ci, cj) * mn.row_cov;
  return g;
}

template <typename T>
T kl_gaussian_from_cholesky(const VecX<T>& mean_q, const MatX<T>& chol_q,
                            const VecX<T>& mean_p, const MatX<T>& chol_p) {
  const Eigen::Index d = mean_q.size();
  T trace_term(0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    VecX<T> col = solve_lower<T>(chol_p, VecX<T>(chol_q.col(j)));
    trace_term += col.squaredNorm();
  }
  VecX<T> w = solve_lower<T>(chol_p, VecX<T>(mean_q - mean_p));
  const T maha = w.squaredNorm();
  const T logdet_q = log_det_from_cholesky<T>(chol_q);
  const T logdet_p = log_det_from_cholesky<T>(chol_p);
  return T(0.5) * (trace_term + maha - T(static_cast<double>(d)) + logdet_p - logdet_q);
}

template <typename T>
T kl_gaussian(const GaussianT<T>& q, const GaussianT<T>& p,
              const JitterPolicy& jitter = {}) {
  require(q.dim() == p.dim(), "kl_gaussian: dimension mismatch");
  const MatX<T> lq = cholesky<T>(q.cov, jitter).L;
  const MatX<T> lp = cholesky<T>(p.cov, jitter).L;
  return kl_gaussian_from_cholesky<T>(q.mean, lq, p.mean, lp);
}

/// KL between matrix normals, column covariances allowed to differ. Uses the
/// Kronecker identities so no M*D-sized matrix is ever formed.
template <typename T>
T kl_matrix_normal_from_cholesky(const MatX<T>& mean_q, const MatX<T>& row_chol_q,
                                 const MatX<T>& col_chol_q, const MatX<T>& mean_p,
                                 const MatX<T>& row_chol_p, const MatX<T>& col_chol_p) {
  const Eigen::Index m = mean_q.rows(), d = mean_q.cols();
  T tr_row(0.0), tr_col(0.0);
  for (Eigen::Index j = 0; j < m; ++j)
    tr_row += solve_lower<T>(row_chol_p, VecX<T>(row_chol_q.col(j))).squaredNorm();
  for (Eigen::Index j = 0; j < d; ++j)
    tr_col += solve_lower<T>(col_chol_p, VecX<T>(col_chol_q.col(j))).squaredNorm();

  MatX<T> delta = mean_q - mean_p;
  MatX<T> a(m, d);
  for (Eigen::Index j = 0; j < d; ++j)
    a.col(j) = solve_lower<T>(row_chol_p, VecX<T>(delta.col(j)));
  T maha(0.0);
  for (Eigen::Index i = 0; i < m; ++i)
    maha += solve_lower<T>(col_chol_p, VecX<T>(a.row(i).transpose())).squaredNorm();

  const T ld_row_q = log_det_from_cholesky<T>(row_chol_q);
  const T ld_row_p = log_det_from_cholesky<T>(row_chol_p);
  const T ld_col_q = log_det_from_cholesky<T>(col_chol_q);
  const T ld_col_p = log_det_from_cholesky<T>(col_chol_p);
  const double md = static_cast<double>(m) * static_cast<double>(d);
  return T(0.5) * (tr_col * tr_row + maha - T(md) +
                   T(static_cast<double>(m)) * (ld_col_p - ld_col_q) +
                   T(static_cast<double>(d)) * (ld_row_p - ld_row_q));
}

template <typename T>
T kl_matrix_normal(const MatrixNormalT<T>& q, const MatrixNormalT<T>& p,
                   const JitterPolicy& jitter = {}) {
  require(q.mean.rows() == p.mean.rows() && q.mean.cols() == p.mean.cols(),
          "kl_matrix_normal: shape mismatch");
  return kl_matrix_normal_from_cholesky<T>(
      q.mean, cholesky<T>(q.row_cov, jitter).L, cholesky<T>(q.col_cov, jitter).L,
      p.mean, cholesky<T>(p.row_cov, jitter).L, cholesky<T>(p.col_cov, jitter).L);
}

/// mean + L*eps with eps ~ N(0, I); the reparameterized draw.
inline Vec sample_gaussian(const Vec& mean, const Mat& chol, RngStream& rng) {
  require(chol.rows() == mean.size() && chol.cols() == mean.size(),
          "sample_gaussian: shape mismatch");
  return mean + chol * rng.normal_vector(mean.size());
}

inline Mat sample_matrix_normal(const MatrixNormal& mn, RngStream& rng,
                                const JitterPolicy& jitter = {}) {
  const Mat ls = cholesky<double>(mn.row_cov, jitter).L;
  const Mat lv = cholesky<double>(mn.col_cov, jitter).L;
  return mn.mean + ls * rng.normal_matrix(mn.mean.rows(), mn.mean.cols()) * lv.transpose();
}

template <typename T>
T log_density_from_cholesky(const VecX<T>& x, const VecX<T>& mean, const MatX<T>& chol) {
  const Eigen::Index d = x.size();
  VecX<T> w = solve_lower<T>(chol, VecX<T>(x - mean));
  return T(-0.5) * (T(static_cast<double>(d) * std::log(2.0 * std::numbers::pi)) +
                    log_det_from_cholesky<T>(chol) + w.squaredNorm());
}

inline double log_density(const Gaussian& g, const Vec& x, const JitterPolicy& jitter = {}) {
  return value(log_density_from_cholesky<double>(x, g.mean, cholesky<double>(g.cov, jitter).L));
}

inline double log_density(const MatrixNormal& mn, const Mat& x, const JitterPolicy& jitter = {}) {
  const Eigen::Index m = x.rows(), d = x.cols();
  const Mat ls = cholesky<double>(mn.row_cov, jitter).L;
  const Mat lv = cholesky<double>(mn.col_cov, jitter).L;
  Mat delta = x - mn.mean;
  Mat a(m, d);
  for (Eigen::Index j = 0; j < d; ++j) a.col(j) = solve_lower<double>(ls, Vec(delta.col(j)));
  double maha = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    maha += solve_lower<double>(lv, Vec(a.row(i).transpose())).squaredNorm();
  const double md = static_cast<double>(m) * static_cast<double>(d);
  return -0.5 * (md * std::log(2.0 * std::numbers::pi) +
                 static_cast<double>(d) * log_det_from_cholesky<double>(ls) +
                 static_cast<double>(m) * log_det_from_cholesky<double>(lv) + maha);
}

/// Log-density of y under N(mean, diag(var)); the measurement likelihood.
template <typename T>
T log_density_diagonal(const Vec& y, const VecX<T>& mean, const VecX<T>& var) {
  T out(-0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const T d = T(y[i]) - mean[i];
    out -= T(0.5) * (log(var[i]) + d * d / var[i]);
  }
  return out;
}

}  // namespace ogpssm

#endif  // OGPSSM_GAUSSIAN_HPP
