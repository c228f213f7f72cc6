#include "ogpssm/vi_online.hpp"

#include "ogpssm/vi_objectives.hpp"

namespace ogpssm {

OnlineNelboObjective::OnlineNelboObjective(const ParamLayout& layout, Hyperparameters prev,
                                           std::vector<Minibatch> batches, int num_samples,
                                           std::uint64_t seed)
    : detail::SlottedViObjective(
          layout,
          layout.size +
              static_cast<Eigen::Index>(batches.size()) *
                  (layout.state_dim + vech_dim(layout.state_dim)),
          num_samples, seed),
      prev_(std::move(prev)), batches_(std::move(batches)) {
  require(!batches_.empty(), "OnlineNelboObjective: at least one minibatch required");
  anchor_block_ = layout_.state_dim + vech_dim(layout_.state_dim);

  for (std::size_t k = 0; k < batches_.size(); ++k) {
    require(batches_[k].y.rows() == batches_[k].u.rows(),
            "OnlineNelboObjective: y and u must pair up");
    anchor_chols_.push_back(cholesky<double>(batches_[k].anchor.cov).L);
    detail::RolloutWindow w;
    w.y = batches_[k].y;
    w.u = batches_[k].u;
    w.mean_off = layout_.size + static_cast<Eigen::Index>(k) * anchor_block_;
    w.chol_off = w.mean_off + layout_.state_dim;
    windows_.push_back(std::move(w));
  }

  if (prev_.gp.num_inducing() > 0) {
    has_transfer_ = true;
    prev_qz_row_chol_ = cholesky<double>(prev_.gp.sigma_z).L;
    prev_qz_col_chol_ = cholesky<double>(prev_.gp.v).L;
    const MatrixNormal prior = gp_prior<double>(prev_.gp);
    prev_prior_mean_ = prior.mean;
    prev_prior_row_chol_ = cholesky<double>(prior.row_cov).L;
  }
  resample(0);
}

Vec OnlineNelboObjective::initial_point() const {
  Vec x(total_size_);
  x.head(layout_.size) = layout_.pack(prev_);
  for (std::size_t k = 0; k < batches_.size(); ++k) {
    const Eigen::Index off = layout_.size + static_cast<Eigen::Index>(k) * anchor_block_;
    x.segment(off, layout_.state_dim) = batches_[k].anchor.mean;
    detail::chol_to_unconstrained(batches_[k].anchor.cov, x, off + layout_.state_dim);
  }
  return x;
}

Vec OnlineNelboObjective::point_for(const Hyperparameters& theta) const {
  Vec x(total_size_);
  x.head(layout_.size) = layout_.pack(theta);
  for (std::size_t k = 0; k < batches_.size(); ++k) {
    const Eigen::Index off = layout_.size + static_cast<Eigen::Index>(k) * anchor_block_;
    x.segment(off, layout_.state_dim) = theta.x0_mean;
    detail::chol_to_unconstrained(theta.x0_cov, x, off + layout_.state_dim);
  }
  return x;
}

Hyperparameters OnlineNelboObjective::extract_theta(const Vec& x) const {
  Hyperparameters theta = layout_.unpack<double>(VecX<double>(x.head(layout_.size)));
  const Eigen::Index off =
      layout_.size + static_cast<Eigen::Index>(batches_.size() - 1) * anchor_block_;
  Vec qm;
  Mat qc;
  detail::gaussian_from_raw<double>(VecX<double>(x), off, off + layout_.state_dim,
                                    layout_.state_dim, qm, qc);
  theta.x0_mean = qm;
  theta.x0_cov = symmetrize<double>(Mat(qc * qc.transpose()));
  return theta;
}

template <typename T>
T OnlineNelboObjective::kl_terms_impl(const VecX<T>& x) const {
  const JitterPolicy jit = detail::loss_jitter(extra_jitter_);
  T kl(0.0);

  // anchor terms: KL(q(x_T) || p_hat(x_T)) per stored window
  for (std::size_t k = 0; k < batches_.size(); ++k) {
    const Eigen::Index off = layout_.size + static_cast<Eigen::Index>(k) * anchor_block_;
    VecX<T> qm;
    MatX<T> qc;
    detail::gaussian_from_raw<T>(x, off, off + layout_.state_dim, layout_.state_dim, qm, qc);
    kl += kl_gaussian_from_cholesky<T>(
        qm, qc, VecX<T>(batches_[k].anchor.mean.template cast<T>()),
        MatX<T>(anchor_chols_[k].template cast<T>()));
  }

  const HyperparametersT<T> h = layout_.template unpack<T>(VecX<T>(x.head(layout_.size)));

  // KL(q(z') || p(z' | theta'))
  kl += prior_kl<T>(h.gp, jit);

  if (has_transfer_) {
    // q'(z): the new posterior transported onto the previous inducing inputs
    const MatrixNormalT<T> q_marg = marginalize_old_inducing<T>(
        h.gp, MatX<T>(prev_.gp.inducing.template cast<T>()), jit);
    const MatX<T> s_chol = cholesky<T>(q_marg.row_cov, jit).L;
    const MatX<T> v_chol = cholesky<T>(q_marg.col_cov, jit).L;
    // + KL(q'(z) || q(z))  - KL(q'(z) || p(z | theta_prev))
    kl += kl_matrix_normal_from_cholesky<T>(
        q_marg.mean, s_chol, v_chol, MatX<T>(prev_.gp.mu_z.template cast<T>()),
        MatX<T>(prev_qz_row_chol_.template cast<T>()),
        MatX<T>(prev_qz_col_chol_.template cast<T>()));
    kl -= kl_matrix_normal_from_cholesky<T>(
        q_marg.mean, s_chol, v_chol, MatX<T>(prev_prior_mean_.template cast<T>()),
        MatX<T>(prev_prior_row_chol_.template cast<T>()),
        MatX<T>(prev_qz_col_chol_.template cast<T>()));
  }
  return kl;
}

double OnlineNelboObjective::kl_terms(const VecX<double>& x) const {
  return kl_terms_impl<double>(x);
}
ad::Rev OnlineNelboObjective::kl_terms(const RVec& x) const {
  return kl_terms_impl<ad::Rev>(x);
}

double negative_elbo(const Hyperparameters& theta_new, const OnlineSnapshot& snap,
                     const Mat& y, const Mat& u, int num_samples, RngStream& rng) {
  require(y.rows() == u.rows(), "negative_elbo: y and u must pair up");
  const ParamLayout lay = ParamLayout::infer(theta_new);
  Minibatch mb{snap.anchor, y, u, 0};
  OnlineNelboObjective obj(lay, snap.prev, {std::move(mb)}, num_samples, 0);
  std::vector<NoiseBatch> noise;
  noise.push_back(NoiseBatch::draw(rng.split(rng.next_u64()), num_samples, u.rows(),
                                   theta_new.state_dim()));
  obj.use_noise(std::move(noise));
  return obj.value(obj.point_for(theta_new));
}

namespace {

LearnResult run_online(const Hyperparameters& prev, const std::vector<Minibatch>& batches,
                       const OptimizerConfig& cfg, bool freeze_streaming) {
  require(!batches.empty(), "learn_online: at least one minibatch required");
  const ParamLayout lay = ParamLayout::infer(prev);
  OnlineNelboObjective obj(lay, prev, batches, cfg.num_samples, cfg.seed);

  std::vector<bool> mask;
  if (freeze_streaming) {
    mask = lay.mask_streaming_vb();
    mask.resize(static_cast<std::size_t>(obj.dim()), true);  // anchor-q blocks train
  }
  AdamResult res =
      adam_minimize(obj, obj.initial_point(), cfg, freeze_streaming ? &mask : nullptr);

  LearnResult out;
  out.params = obj.extract_theta(res.best_x);
  out.trace = std::move(res.trace);
  out.converged = res.converged;
  out.best_loss = res.best_loss;
  out.iters = res.iters;
  return out;
}

}  // namespace

LearnResult learn_online(const Hyperparameters& prev, const std::vector<Minibatch>& batches,
                         const OptimizerConfig& cfg) {
  return run_online(prev, batches, cfg, false);
}

LearnResult streaming_vb_update(const Hyperparameters& prev,
                                const std::vector<Minibatch>& batches,
                                const OptimizerConfig& cfg) {
  return run_online(prev, batches, cfg, true);
}

}  // namespace ogpssm
