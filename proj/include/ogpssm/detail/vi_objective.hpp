#ifndef OGPSSM_DETAIL_VI_OBJECTIVE_HPP
#define OGPSSM_DETAIL_VI_OBJECTIVE_HPP

#include <utility>
#include <vector>

#include "ogpssm/detail/vi_eval.hpp"
#include "ogpssm/parallel.hpp"
#include "ogpssm/vi_batch.hpp"

namespace ogpssm::detail {

/// One data window whose trajectory rollouts start from a trainable Gaussian
/// stored at (mean_off, chol_off) inside the full parameter vector.
struct RolloutWindow {
  Mat y, u;
  Eigen::Index mean_off = 0, chol_off = 0;
};

/// Base for the variational losses: a sum of per-sample rollout terms over
/// one or more windows plus analytic KL terms supplied by the subclass.
/// Gradients are evaluated per sample on per-thread tapes and combined in a
/// fixed order, so results do not depend on the worker count.
class SlottedViObjective : public Objective {
 public:
  SlottedViObjective(ParamLayout layout, Eigen::Index total_size, int num_samples,
                     std::uint64_t seed)
      : layout_(std::move(layout)), total_size_(total_size), num_samples_(num_samples),
        seed_(seed) {}

  Eigen::Index dim() const override { return total_size_; }

  void resample(std::uint64_t iteration) override {
    noise_.clear();
    for (std::size_t w = 0; w < windows_.size(); ++w)
      noise_.push_back(NoiseBatch::draw(
          RngStream(seed_).split(iteration).split(static_cast<std::uint64_t>(w)),
          num_samples_, windows_[w].u.rows(), layout_.state_dim));
  }

  void set_extra_jitter(double extra) override { extra_jitter_ = extra; }

  double value(const Vec& x) const override {
    require(x.size() == total_size_, "objective: parameter size mismatch");
    const double kl = kl_terms(VecX<double>(x));
    const ThetaView<double> tv =
        build_theta<double>(layout_, VecX<double>(x.head(layout_.size)), extra_jitter_);
    double loss = kl;
    const double weight = 1.0 / num_samples_;
    for (std::size_t w = 0; w < windows_.size(); ++w) {
      if (windows_[w].u.rows() == 0) continue;
      Vec qm;
      Mat qc;
      gaussian_from_raw<double>(x, windows_[w].mean_off, windows_[w].chol_off,
                                layout_.state_dim, qm, qc);
      for (int i = 0; i < num_samples_; ++i)
        loss -= weight * rollout_loglik<double>(tv, qm, qc, windows_[w].y, windows_[w].u,
                                                Vec(noise_[w].eps0.row(i).transpose()),
                                                noise_[w].eps[i], extra_jitter_);
    }
    return loss;
  }

  double value_and_grad(const Vec& x, Vec& grad) const override {
    require(x.size() == total_size_, "objective: parameter size mismatch");
    struct Slot {
      int window = -1;  // -1: analytic KL terms
      int sample = 0;
    };
    std::vector<Slot> slots;
    for (std::size_t w = 0; w < windows_.size(); ++w) {
      if (windows_[w].u.rows() == 0) continue;
      for (int i = 0; i < num_samples_; ++i)
        slots.push_back({static_cast<int>(w), i});
    }
    slots.push_back({-1, 0});

    const int n = static_cast<int>(slots.size());
    std::vector<double> losses(static_cast<std::size_t>(n));
    std::vector<Vec> grads(static_cast<std::size_t>(n));
    const double weight = 1.0 / num_samples_;

    parallel_for(n, [&](int s) {
      ad::Tape tape;
      ad::ScopedTape scope(tape);
      RVec leaves = make_leaves(x);
      ad::Rev term;
      if (slots[s].window < 0) {
        term = kl_terms(leaves);
      } else {
        const RolloutWindow& w = windows_[static_cast<std::size_t>(slots[s].window)];
        const NoiseBatch& nb = noise_[static_cast<std::size_t>(slots[s].window)];
        const ThetaView<ad::Rev> tv =
            build_theta<ad::Rev>(layout_, RVec(leaves.head(layout_.size)), extra_jitter_);
        RVec qm;
        RMat qc;
        gaussian_from_raw<ad::Rev>(leaves, w.mean_off, w.chol_off, layout_.state_dim, qm, qc);
        const int i = slots[s].sample;
        term = ad::Rev(-weight) *
               rollout_loglik<ad::Rev>(tv, qm, qc, w.y, w.u,
                                       Vec(nb.eps0.row(i).transpose()), nb.eps[i],
                                       extra_jitter_);
      }
      losses[static_cast<std::size_t>(s)] = term.v;
      const auto& adj = tape.backward(term.i);
      Vec g(total_size_);
      for (Eigen::Index j = 0; j < total_size_; ++j)
        g[j] = term.i < 0 ? 0.0 : adj[static_cast<std::size_t>(leaves[j].i)];
      grads[static_cast<std::size_t>(s)] = std::move(g);
    });

    grad = Vec::Zero(total_size_);
    double loss = 0.0;
    for (int s = 0; s < n; ++s) {
      loss += losses[static_cast<std::size_t>(s)];
      grad += grads[static_cast<std::size_t>(s)];
    }
    return loss;
  }

  const ParamLayout& layout() const { return layout_; }
  const std::vector<RolloutWindow>& windows() const { return windows_; }

 protected:
  /// Analytic (non-Monte-Carlo) part of the loss; positive contributions.
  virtual double kl_terms(const VecX<double>& x) const = 0;
  virtual ad::Rev kl_terms(const RVec& x) const = 0;

  ParamLayout layout_;
  Eigen::Index total_size_;
  int num_samples_;
  std::uint64_t seed_;
  std::vector<RolloutWindow> windows_;
  std::vector<NoiseBatch> noise_;
  double extra_jitter_ = 0.0;
};

}  // namespace ogpssm::detail

#endif  // OGPSSM_DETAIL_VI_OBJECTIVE_HPP
