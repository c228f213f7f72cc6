#ifndef OGPSSM_VI_OBJECTIVES_HPP
#define OGPSSM_VI_OBJECTIVES_HPP

#include "ogpssm/detail/vi_objective.hpp"
#include "ogpssm/vi_online.hpp"

// Concrete training losses. Exposed (rather than buried in the learners) so
// gradient oracles can probe the exact objectives at fixed noise.

namespace ogpssm {

/// Negative Monte-Carlo ELBO over one window with q(x_0) anchored to a fixed
/// prior by a KL term.
class BatchElboObjective final : public detail::SlottedViObjective {
 public:
  BatchElboObjective(const ParamLayout& layout, Gaussian prior_x0, Mat y, Mat u,
                     int num_samples, std::uint64_t seed);

  /// Pins the Monte-Carlo noise (single window) for oracle comparisons.
  void use_noise(NoiseBatch noise) {
    noise_.clear();
    noise_.push_back(std::move(noise));
  }

 protected:
  double kl_terms(const VecX<double>& x) const override;
  ad::Rev kl_terms(const RVec& x) const override;

 private:
  template <typename T>
  T kl_terms_impl(const VecX<T>& x) const;

  Gaussian prior_x0_;
  Mat prior_chol_;
};

/// The online objective: per-window rollout likelihoods with per-window
/// trainable q(x_T) blocks appended after the hyperparameter block, anchor
/// KLs, and the inducing-transfer terms (counted once however many windows
/// are stored).
class OnlineNelboObjective final : public detail::SlottedViObjective {
 public:
  OnlineNelboObjective(const ParamLayout& layout, Hyperparameters prev,
                       std::vector<Minibatch> batches, int num_samples, std::uint64_t seed);

  /// theta' = prev and every window's q(x_T) at its anchor.
  Vec initial_point() const;
  /// Same hyperparameter block as `initial_point` but explicit theta'; the
  /// window q blocks are taken from theta.x0 (single-window probing).
  Vec point_for(const Hyperparameters& theta) const;
  /// Extracts theta' from a full parameter vector; x0 is set to the newest
  /// window's trained q(x_T).
  Hyperparameters extract_theta(const Vec& x) const;

  void use_noise(std::vector<NoiseBatch> noise) { noise_ = std::move(noise); }

 protected:
  double kl_terms(const VecX<double>& x) const override;
  ad::Rev kl_terms(const RVec& x) const override;

 private:
  template <typename T>
  T kl_terms_impl(const VecX<T>& x) const;

  Hyperparameters prev_;
  std::vector<Minibatch> batches_;
  std::vector<Mat> anchor_chols_;
  // frozen previous-round quantities entering the transfer KLs
  bool has_transfer_ = false;
  Mat prev_qz_row_chol_, prev_qz_col_chol_;      // chol(Sigma_z), chol(V)
  Mat prev_prior_mean_, prev_prior_row_chol_;    // p(z | theta_prev) at eta_prev
  Eigen::Index anchor_block_;                    // D + vech(D)
};

}  // namespace ogpssm

#endif  // OGPSSM_VI_OBJECTIVES_HPP
