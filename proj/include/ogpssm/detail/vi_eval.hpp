#ifndef OGPSSM_DETAIL_VI_EVAL_HPP
#define OGPSSM_DETAIL_VI_EVAL_HPP

#include <vector>

#include "ogpssm/params.hpp"
#include "ogpssm/rng.hpp"

// Shared evaluation core for the variational losses. Everything here is
// templated on the scalar so the double path (values, finite-difference
// oracles) and the tape path (gradients) run the exact same arithmetic.

namespace ogpssm::detail {

inline JitterPolicy loss_jitter(double extra) {
  JitterPolicy p;
  return extra > 0.0 ? p.with_floor(extra) : p;
}

template <typename T>
struct ThetaView {
  HyperparametersT<T> h;
  SparseGpPosterior<T> post;
};

template <typename T>
ThetaView<T> build_theta(const ParamLayout& lay, const VecX<T>& raw, double extra_jitter) {
  ThetaView<T> tv;
  tv.h = lay.template unpack<T>(raw);
  tv.post = make_posterior<T>(tv.h.gp, loss_jitter(extra_jitter));
  return tv;
}

/// One reparameterized transition: x_{t+1} = mu_p + L eps with
/// L L^T = Sigma_p + Sigma_f.
template <typename T>
VecX<T> gp_transition(const SparseGpPosterior<T>& post, const VecX<T>& proc_noise,
                      const VecX<T>& x, const Vec& u_row, const Vec& eps_row,
                      double extra_jitter) {
  const Eigen::Index d = x.size(), p = u_row.size();
  VecX<T> input(d + p);
  input.head(d) = x;
  for (Eigen::Index j = 0; j < p; ++j) input[d + j] = T(u_row[j]);

  GaussianT<T> pred = post.predict(input);
  MatX<T> cov = pred.cov;
  for (Eigen::Index j = 0; j < d; ++j) cov(j, j) = cov(j, j) + proc_noise[j];
  const MatX<T> l = cholesky<T>(cov, loss_jitter(extra_jitter)).L;
  VecX<T> next = pred.mean;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) next[i] += l(i, j) * T(eps_row[j]);
  return next;
}

/// Log-likelihood of one sampled trajectory: the measurement y_t observes the
/// state reached after applying u_t.
template <typename T>
T rollout_loglik(const ThetaView<T>& th, const VecX<T>& init_mean, const MatX<T>& init_chol,
                 const Mat& y, const Mat& u, const Vec& eps0, const Mat& eps,
                 double extra_jitter) {
  const Eigen::Index d = init_mean.size();
  VecX<T> x = init_mean;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) x[i] += init_chol(i, j) * T(eps0[j]);

  T ll(0.0);
  const MeasurementModel& g = *th.h.measurement;
  for (Eigen::Index t = 0; t < u.rows(); ++t) {
    x = gp_transition<T>(th.post, th.h.proc_noise, x, Vec(u.row(t).transpose()),
                         Vec(eps.row(t).transpose()), extra_jitter);
    ll += log_density_diagonal<T>(Vec(y.row(t).transpose()), VecX<T>(g.eval(x)),
                                  th.h.meas_noise);
  }
  return ll;
}

/// Reads a trainable Gaussian (mean + Cholesky factor) straight from raw
/// parameter storage; used for q(x_0) and the per-window q(x_T) blocks.
template <typename T>
void gaussian_from_raw(const VecX<T>& raw, Eigen::Index mean_off, Eigen::Index chol_off,
                       Eigen::Index d, VecX<T>& mean, MatX<T>& chol) {
  mean = raw.segment(mean_off, d);
  chol = chol_from_unconstrained<T>(raw, chol_off, d);
}

inline VecX<ad::Rev> make_leaves(const Vec& x) {
  VecX<ad::Rev> out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = ad::Rev::leaf(x[i]);
  return out;
}

}  // namespace ogpssm::detail

#endif  // OGPSSM_DETAIL_VI_EVAL_HPP
