#ifndef OGPSSM_VI_ONLINE_HPP
#define OGPSSM_VI_ONLINE_HPP

#include <deque>

#include "ogpssm/vi_batch.hpp"

namespace ogpssm {

/// One stored training window: the filtered state estimate at its start plus
/// the measurements and controls collected across it.
struct Minibatch {
  Gaussian anchor;
  Mat y;
  Mat u;
  std::int64_t start_index = 0;  // env step of the window start

  Eigen::Index points() const { return y.rows(); }
};

/// Bounded FIFO of minibatches; oldest windows are evicted whole once the
/// total stored points exceed the capacity.
class MemoryBuffer {
 public:
  explicit MemoryBuffer(Eigen::Index capacity_points) : capacity_(capacity_points) {}

  void push(Minibatch batch) {
    require(batch.points() <= capacity_, "MemoryBuffer: batch larger than capacity");
    batches_.push_back(std::move(batch));
    while (size_points() > capacity_) batches_.pop_front();
  }

  Eigen::Index size_points() const {
    Eigen::Index n = 0;
    for (const auto& b : batches_) n += b.points();
    return n;
  }

  Eigen::Index capacity() const { return capacity_; }
  const std::deque<Minibatch>& batches() const { return batches_; }
  std::vector<Minibatch> snapshot() const { return {batches_.begin(), batches_.end()}; }

 private:
  Eigen::Index capacity_;
  std::deque<Minibatch> batches_;
};

inline MemoryBuffer buffer_push(MemoryBuffer buf, Minibatch batch) {
  buf.push(std::move(batch));
  return buf;
}

/// Frozen state of the previous learning round.
struct OnlineSnapshot {
  Hyperparameters prev;
  Gaussian anchor;  // filtered state estimate at the new window's start
};

/// The online negative ELBO for one window: negative expected log-likelihood
/// plus KL(q(x_T) || anchor) + KL(q(z')||p(z'|theta')) + KL(q'(z)||q(z))
/// - KL(q'(z)||p(z|theta)), with q'(z) the new posterior marginalized onto the
/// previous inducing inputs. q(x_T) is read from theta_new.x0.
double negative_elbo(const Hyperparameters& theta_new, const OnlineSnapshot& snap,
                     const Mat& y, const Mat& u, int num_samples, RngStream& rng);

/// LEARN2: descend the summed online objective over the stored minibatches.
/// Each window keeps its own trainable q(x_T) initialized at its anchor; the
/// inducing-transfer terms appear once.
LearnResult learn_online(const Hyperparameters& prev, const std::vector<Minibatch>& batches,
                         const OptimizerConfig& cfg);

/// Same objective with inducing inputs, kernel hyperparameters, and the
/// output covariance frozen at their previous values (the streaming-VB
/// baseline).
LearnResult streaming_vb_update(const Hyperparameters& prev,
                                const std::vector<Minibatch>& batches,
                                const OptimizerConfig& cfg);

}  // namespace ogpssm

#endif  // OGPSSM_VI_ONLINE_HPP
