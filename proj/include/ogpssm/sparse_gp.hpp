#ifndef OGPSSM_SPARSE_GP_HPP
#define OGPSSM_SPARSE_GP_HPP

#include <memory>
#include <utility>

#include "ogpssm/gaussian.hpp"
#include "ogpssm/kernel.hpp"

namespace ogpssm {

/// Sparse GP posterior state: inducing inputs eta and the matrix-normal
/// q(z) = MN(mu_z, sigma_z, v) over the inducing outputs.
template <typename T>
struct VariationalGpT {
  MatX<T> inducing;  // M x (D+P)
  MatX<T> mu_z;      // M x D
  MatX<T> sigma_z;   // M x M
  MatX<T> v;         // D x D free-form output covariance
  SeArdKernelT<T> kernel;
  std::shared_ptr<const MeanFunction> mean;

  Eigen::Index num_inducing() const { return inducing.rows(); }
  Eigen::Index input_dim() const { return kernel.input_dim(); }
  Eigen::Index output_dim() const { return v.rows(); }
};
using VariationalGp = VariationalGpT<double>;

namespace detail {

template <typename T>
void check_inducing_distinct(const MatX<T>& eta) {
  for (Eigen::Index i = 0; i < eta.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      double dist = 0.0;
      for (Eigen::Index d = 0; d < eta.cols(); ++d)
        dist = std::max(dist, std::abs(value(eta(i, d)) - value(eta(j, d))));
      if (dist <= 1e-9)
        throw NotPositiveDefinite("degenerate inducing placement: rows " + std::to_string(i) +
                                  " and " + std::to_string(j) + " coincide");
    }
}

}  // namespace detail

/// p(z) = MN(m_eta, K_eta_eta, V). The returned row covariance carries the
/// jitter that made it factorizable.
template <typename T>
MatrixNormalT<T> gp_prior(const VariationalGpT<T>& gp, const JitterPolicy& jitter = {}) {
  require(gp.num_inducing() >= 1, "gp_prior: empty inducing set");
  detail::check_inducing_distinct(gp.inducing);
  MatX<T> k = kernel_gram<T>(gp.kernel, gp.inducing);
  const auto chol = cholesky<T>(k, jitter);
  if (chol.jitter > 0.0)
    for (Eigen::Index i = 0; i < k.rows(); ++i) k(i, i) = k(i, i) + T(chol.jitter);
  MatX<T> m_eta(gp.num_inducing(), gp.output_dim());
  for (Eigen::Index i = 0; i < gp.num_inducing(); ++i)
    m_eta.row(i) = mean_eval<T>(*gp.mean, VecX<T>(gp.inducing.row(i).transpose())).transpose();
  return {std::move(m_eta), std::move(k), gp.v};
}

/// Precomputed quantities shared by every predictive query against one
/// posterior snapshot: the Gram Cholesky and K^{-1}(mu_z - m_eta).
template <typename T>
struct SparseGpPosterior {
  MatX<T> inducing;
  MatX<T> sigma_z;
  MatX<T> v;
  SeArdKernelT<T> kernel;
  std::shared_ptr<const MeanFunction> mean;
  MatX<T> chol_k;  // chol(K_eta_eta + jitter)
  MatX<T> m_eta;   // M x D
  MatX<T> b;       // K^{-1}(mu_z - m_eta)

  Eigen::Index num_inducing() const { return inducing.rows(); }
  Eigen::Index output_dim() const { return v.rows(); }

  /// Scalar predictive variance factor s(x) >= 0 with cov = s(x) * V.
  T scalar_variance(const VecX<T>& kvec) const {
    if (num_inducing() == 0) return kernel.signal_variance;
    VecX<T> alpha = solve_cholesky<T>(chol_k, kvec);
    T s = kernel.signal_variance - alpha.dot(kvec) + alpha.dot(VecX<T>(sigma_z * alpha));
    return clamp_min_scalar(s);
  }

  VecX<T> predict_mean(const VecX<T>& x) const {
    VecX<T> mu = mean_eval<T>(*mean, x);
    if (num_inducing() == 0) return mu;
    VecX<T> kvec = kernel_vector<T>(kernel, x, inducing);
    mu += b.transpose() * kvec;
    return mu;
  }

  GaussianT<T> predict(const VecX<T>& x) const {
    require(x.size() == kernel.input_dim(), "predict: query dimension mismatch");
    VecX<T> mu = mean_eval<T>(*mean, x);
    T s;
    if (num_inducing() == 0) {
      s = kernel.signal_variance;
    } else {
      VecX<T> kvec = kernel_vector<T>(kernel, x, inducing);
      mu += b.transpose() * kvec;
      s = scalar_variance(kvec);
    }
    return {std::move(mu), MatX<T>(v * s)};
  }

 private:
  static T clamp_min_scalar(const T& s) {
    if constexpr (std::is_same_v<T, double>) {
      return s < 0.0 ? 0.0 : s;
    } else {
      return ad::clamp_min(s, 0.0);
    }
  }
};

template <typename T>
SparseGpPosterior<T> make_posterior(const VariationalGpT<T>& gp,
                                    const JitterPolicy& jitter = {}) {
  SparseGpPosterior<T> post;
  post.inducing = gp.inducing;
  post.sigma_z = gp.sigma_z;
  post.v = gp.v;
  post.kernel = gp.kernel;
  post.mean = gp.mean;
  const Eigen::Index m = gp.num_inducing();
  if (m == 0) return post;
  detail::check_inducing_distinct(gp.inducing);
  post.chol_k = cholesky<T>(kernel_gram<T>(gp.kernel, gp.inducing), jitter).L;
  post.m_eta.resize(m, gp.output_dim());
  for (Eigen::Index i = 0; i < m; ++i)
    post.m_eta.row(i) =
        mean_eval<T>(*gp.mean, VecX<T>(gp.inducing.row(i).transpose())).transpose();
  post.b = solve_cholesky<T>(post.chol_k, MatX<T>(gp.mu_z - post.m_eta));
  return post;
}

/// Predictive distribution of f at one input. With an empty inducing set this
/// degenerates to the prior (m(x), k(x,x) * V).
template <typename T>
GaussianT<T> predict(const VariationalGpT<T>& gp, const VecX<T>& x,
                     const JitterPolicy& jitter = {}) {
  return make_posterior<T>(gp, jitter).predict(x);
}

/// KL(q(z) || p(z | theta)); zero when q sits exactly at the prior.
template <typename T>
T prior_kl(const VariationalGpT<T>& gp, const JitterPolicy& jitter = {}) {
  if (gp.num_inducing() == 0) return T(0.0);
  MatrixNormalT<T> prior = gp_prior<T>(gp, jitter);
  return kl_matrix_normal_from_cholesky<T>(
      gp.mu_z, cholesky<T>(gp.sigma_z, jitter).L, cholesky<T>(gp.v, jitter).L, prior.mean,
      cholesky<T>(prior.row_cov, jitter).L, cholesky<T>(prior.col_cov, jitter).L);
}

/// q'(z) = integral p(z | z', theta') q(z') dz' over the old inducing inputs:
/// mean m_eta + A (mu_z' - m_eta'), row covariance
/// K_eta_eta - A K_eta'_eta + A Sigma_z' A^T with A = K_eta_eta' K_eta'_eta'^{-1},
/// every kernel evaluated under the new hyperparameters.
template <typename T>
MatrixNormalT<T> marginalize_old_inducing(const VariationalGpT<T>& q_new,
                                          const MatX<T>& eta_old,
                                          const JitterPolicy& jitter = {}) {
  require(q_new.num_inducing() >= 1 && eta_old.rows() >= 1,
          "marginalize_old_inducing: both inducing sets must be nonempty");
  require(eta_old.cols() == q_new.input_dim(),
          "marginalize_old_inducing: input dimension mismatch");
  const Eigen::Index m_old = eta_old.rows();

  MatX<T> k_oo = kernel_gram<T>(q_new.kernel, MatX<T>(eta_old));
  MatX<T> k_on = kernel_matrix<T>(q_new.kernel, MatX<T>(eta_old), q_new.inducing);
  MatX<T> chol_nn = cholesky<T>(kernel_gram<T>(q_new.kernel, q_new.inducing), jitter).L;

  // A^T = K_nn^{-1} K_no
  MatX<T> a_t = solve_cholesky<T>(chol_nn, MatX<T>(k_on.transpose()));

  MatX<T> m_eta_old(m_old, q_new.output_dim());
  for (Eigen::Index i = 0; i < m_old; ++i)
    m_eta_old.row(i) =
        mean_eval<T>(*q_new.mean, VecX<T>(eta_old.row(i).transpose())).transpose();
  MatX<T> m_eta_new(q_new.num_inducing(), q_new.output_dim());
  for (Eigen::Index i = 0; i < q_new.num_inducing(); ++i)
    m_eta_new.row(i) =
        mean_eval<T>(*q_new.mean, VecX<T>(q_new.inducing.row(i).transpose())).transpose();

  MatrixNormalT<T> out;
  out.mean = m_eta_old + a_t.transpose() * (q_new.mu_z - m_eta_new);
  out.row_cov = symmetrize<T>(
      MatX<T>(k_oo - a_t.transpose() * k_on.transpose() +
              a_t.transpose() * q_new.sigma_z * a_t));
  out.col_cov = q_new.v;
  return out;
}

}  // namespace ogpssm

#endif  // OGPSSM_SPARSE_GP_HPP
