#ifndef OGPSSM_PARAMS_HPP
#define OGPSSM_PARAMS_HPP

#include <memory>
#include <vector>

#include "ogpssm/sparse_gp.hpp"

namespace ogpssm {

/// Full trainable parameter set: initial-state belief, diagonal process and
/// measurement noise variances, and the sparse GP (q(z), output covariance,
/// kernel hyperparameters, inducing inputs). The measurement map g is known
/// and rides along untouched.
template <typename T>
struct HyperparametersT {
  VecX<T> x0_mean;
  MatX<T> x0_cov;
  VecX<T> proc_noise;  // diagonal of Sigma_f, size D
  VecX<T> meas_noise;  // diagonal of Sigma_g, size O
  VariationalGpT<T> gp;
  std::shared_ptr<const MeasurementModel> measurement;

  Eigen::Index state_dim() const { return x0_mean.size(); }
  Eigen::Index obs_dim() const { return meas_noise.size(); }
  Eigen::Index control_dim() const { return gp.input_dim() - state_dim(); }
};
using Hyperparameters = HyperparametersT<double>;

namespace detail {

/// Unconstrained -> lower-Cholesky factor with positive (exp) diagonal.
template <typename T>
MatX<T> chol_from_unconstrained(const VecX<T>& raw, Eigen::Index offset, Eigen::Index d) {
  MatX<T> l = MatX<T>::Zero(d, d);
  Eigen::Index k = offset;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) {
      l(i, j) = (i == j) ? exp(raw[k]) : raw[k];
      ++k;
    }
  return l;
}

inline void chol_to_unconstrained(const Mat& cov, Vec& raw, Eigen::Index offset,
                                  const JitterPolicy& jitter = {}) {
  const Mat l = cholesky<double>(cov, jitter).L;
  const Eigen::Index d = cov.rows();
  Eigen::Index k = offset;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) {
      raw[k] = (i == j) ? std::log(std::max(l(i, j), 1e-154)) : l(i, j);
      ++k;
    }
}

}  // namespace detail

/// Maps between Hyperparameters and one flat unconstrained vector.
/// Positive scalars are log-transformed; covariances are parameterized by
/// their lower-Cholesky factor with log-diagonal.
class ParamLayout {
 public:
  Eigen::Index state_dim = 0, control_dim = 0, obs_dim = 0, num_inducing = 0;
  Eigen::Index off_x0_mean = 0, off_x0_chol = 0, off_proc = 0, off_meas = 0;
  Eigen::Index off_mu_z = 0, off_sigma_z_chol = 0, off_v_chol = 0;
  Eigen::Index off_log_ell = 0, off_log_sf2 = 0, off_eta = 0;
  Eigen::Index size = 0;
  std::shared_ptr<const MeanFunction> mean;
  std::shared_ptr<const MeasurementModel> measurement;

  static ParamLayout infer(const Hyperparameters& h) {
    ParamLayout lay;
    lay.state_dim = h.state_dim();
    lay.control_dim = h.control_dim();
    lay.obs_dim = h.obs_dim();
    lay.num_inducing = h.gp.num_inducing();
    lay.mean = h.gp.mean;
    lay.measurement = h.measurement;
    const Eigen::Index d = lay.state_dim, in = d + lay.control_dim, m = lay.num_inducing;
    Eigen::Index off = 0;
    lay.off_x0_mean = off;
    off += d;
    lay.off_x0_chol = off;
    off += vech_dim(d);
    lay.off_proc = off;
    off += d;
    lay.off_meas = off;
    off += lay.obs_dim;
    lay.off_mu_z = off;
    off += m * d;
    lay.off_sigma_z_chol = off;
    off += vech_dim(m);
    lay.off_v_chol = off;
    off += vech_dim(d);
    lay.off_log_ell = off;
    off += in;
    lay.off_log_sf2 = off;
    off += 1;
    lay.off_eta = off;
    off += m * in;
    lay.size = off;
    return lay;
  }

  Vec pack(const Hyperparameters& h) const {
    Vec raw(size);
    raw.segment(off_x0_mean, state_dim) = h.x0_mean;
    detail::chol_to_unconstrained(h.x0_cov, raw, off_x0_chol);
    raw.segment(off_proc, state_dim) = h.proc_noise.array().max(1e-300).log();
    raw.segment(off_meas, obs_dim) = h.meas_noise.array().max(1e-300).log();
    for (Eigen::Index i = 0; i < num_inducing; ++i)
      raw.segment(off_mu_z + i * state_dim, state_dim) = h.gp.mu_z.row(i).transpose();
    if (num_inducing > 0) detail::chol_to_unconstrained(h.gp.sigma_z, raw, off_sigma_z_chol);
    detail::chol_to_unconstrained(h.gp.v, raw, off_v_chol);
    raw.segment(off_log_ell, state_dim + control_dim) =
        h.gp.kernel.lengthscales.array().max(1e-300).log();
    raw[off_log_sf2] = std::log(std::max(h.gp.kernel.signal_variance, 1e-300));
    const Eigen::Index in = state_dim + control_dim;
    for (Eigen::Index i = 0; i < num_inducing; ++i)
      raw.segment(off_eta + i * in, in) = h.gp.inducing.row(i).transpose();
    return raw;
  }

  template <typename T>
  HyperparametersT<T> unpack(const VecX<T>& raw) const {
    require(raw.size() == size, "ParamLayout::unpack: size mismatch");
    const Eigen::Index d = state_dim, in = d + control_dim, m = num_inducing;
    HyperparametersT<T> h;
    h.x0_mean = raw.segment(off_x0_mean, d);
    {
      MatX<T> l = detail::chol_from_unconstrained<T>(raw, off_x0_chol, d);
      h.x0_cov = l * l.transpose();
    }
    h.proc_noise.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) h.proc_noise[i] = exp(raw[off_proc + i]);
    h.meas_noise.resize(obs_dim);
    for (Eigen::Index i = 0; i < obs_dim; ++i) h.meas_noise[i] = exp(raw[off_meas + i]);

    h.gp.mu_z.resize(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
      h.gp.mu_z.row(i) = raw.segment(off_mu_z + i * d, d).transpose();
    if (m > 0) {
      MatX<T> lz = detail::chol_from_unconstrained<T>(raw, off_sigma_z_chol, m);
      h.gp.sigma_z = lz * lz.transpose();
    } else {
      h.gp.sigma_z.resize(0, 0);
    }
    {
      MatX<T> lv = detail::chol_from_unconstrained<T>(raw, off_v_chol, d);
      h.gp.v = lv * lv.transpose();
    }
    h.gp.kernel.lengthscales.resize(in);
    for (Eigen::Index i = 0; i < in; ++i) h.gp.kernel.lengthscales[i] = exp(raw[off_log_ell + i]);
    h.gp.kernel.signal_variance = exp(raw[off_log_sf2]);
    h.gp.inducing.resize(m, in);
    for (Eigen::Index i = 0; i < m; ++i)
      h.gp.inducing.row(i) = raw.segment(off_eta + i * in, in).transpose();
    h.gp.mean = mean;
    h.measurement = measurement;
    return h;
  }

  std::vector<bool> mask_all() const { return std::vector<bool>(size, true); }

  /// Streaming-VB freeze: inducing inputs, kernel hyperparameters and the
  /// output covariance stay at their previous values.
  std::vector<bool> mask_streaming_vb() const {
    std::vector<bool> mask(size, true);
    for (Eigen::Index i = off_v_chol; i < off_v_chol + vech_dim(state_dim); ++i) mask[i] = false;
    for (Eigen::Index i = off_log_ell; i < off_log_ell + state_dim + control_dim; ++i)
      mask[i] = false;
    mask[off_log_sf2] = false;
    for (Eigen::Index i = off_eta; i < off_eta + num_inducing * (state_dim + control_dim); ++i)
      mask[i] = false;
    return mask;
  }

  /// Only the initial-state belief trains; used by oracle tests.
  std::vector<bool> mask_x0_only() const {
    std::vector<bool> mask(size, false);
    for (Eigen::Index i = off_x0_mean; i < off_x0_mean + state_dim + vech_dim(state_dim); ++i)
      mask[i] = true;
    return mask;
  }
};

}  // namespace ogpssm

#endif  // OGPSSM_PARAMS_HPP
