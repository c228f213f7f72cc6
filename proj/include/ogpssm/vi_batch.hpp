#ifndef OGPSSM_VI_BATCH_HPP
#define OGPSSM_VI_BATCH_HPP

#include <cstdint>
#include <vector>

#include "ogpssm/params.hpp"
#include "ogpssm/rng.hpp"

namespace ogpssm {

struct OptimizerConfig {
  double step_size = 0.02;  // base rate of the adaptive update
  int max_iters = 2000;
  int window = 25;        // convergence window (iterations)
  double rel_tol = 1e-4;  // relative smoothed-loss change over the window
  // The smoothed change is also compared against its own Monte-Carlo standard
  // error; a trend indistinguishable from noise at this many sigmas stops the
  // run. Set to 0 to disable.
  double noise_tol_sigma = 2.0;
  int num_samples = 20;   // reparameterized trajectories per loss evaluation
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1e3;  // global-norm clip; <=0 disables
};

struct IterationTrace {
  int iter;
  double loss;
  double wall_ms;
};

struct LearnResult {
  Hyperparameters params;
  std::vector<IterationTrace> trace;
  bool converged = false;
  double best_loss = 0.0;
  int iters = 0;
};

/// Pre-drawn standard-normal draws for one window: one initial-state draw and
/// one per transition, per sample. Replaying the same batch reproduces the
/// same trajectories bit for bit.
struct NoiseBatch {
  Mat eps0;              // N x D
  std::vector<Mat> eps;  // N matrices of L x D

  static NoiseBatch draw(const RngStream& base, int num_samples, Eigen::Index len,
                         Eigen::Index d) {
    NoiseBatch nb;
    nb.eps0.resize(num_samples, d);
    nb.eps.reserve(num_samples);
    for (int i = 0; i < num_samples; ++i) {
      RngStream sub = base.split(static_cast<std::uint64_t>(i));
      nb.eps0.row(i) = sub.normal_vector(d).transpose();
      nb.eps.push_back(sub.normal_matrix(len, d));
    }
    return nb;
  }
};

struct TrajectoryBatch {
  std::vector<Mat> samples;  // N of (L+1) x D, row 0 is the initial draw
  Mat controls;              // L x P
  NoiseBatch noise;
};

/// Recursive reparameterized sampling through the sparse GP posterior.
TrajectoryBatch rollout_samples(const Hyperparameters& theta, const Mat& controls,
                                const Gaussian& init, int num_samples, RngStream& rng);

/// Deterministic replay of recorded noise.
TrajectoryBatch rollout_with_noise(const Hyperparameters& theta, const Mat& controls,
                                   const Gaussian& init, const NoiseBatch& noise);

/// Monte-Carlo evidence lower bound for one window of data. The measurement
/// y_t observes the state reached after control u_t.
double elbo(const Hyperparameters& theta, const Mat& y, const Mat& u,
            const Gaussian& prior_x0, int num_samples, RngStream& rng);

// --- optimizer plumbing ---

/// A stochastic training loss over one flat unconstrained parameter vector.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Eigen::Index dim() const = 0;
  /// Redraws the Monte-Carlo noise for one optimizer iteration.
  virtual void resample(std::uint64_t iteration) = 0;
  virtual void set_extra_jitter(double extra) = 0;
  virtual double value(const Vec& x) const = 0;
  virtual double value_and_grad(const Vec& x, Vec& grad) const = 0;
};

struct AdamResult {
  Vec best_x;
  std::vector<IterationTrace> trace;
  bool converged = false;
  double best_loss = 0.0;
  int iters = 0;
};

/// Adam on a stochastic objective with best-iterate return and a smoothed
/// relative-change stopping rule. `train_mask` freezes coordinates when given.
AdamResult adam_minimize(Objective& objective, Vec x0, const OptimizerConfig& cfg,
                         const std::vector<bool>* train_mask = nullptr);

/// Gradient ascent on the Monte-Carlo ELBO (LEARN1).
LearnResult learn_batch(const Hyperparameters& init, const Gaussian& prior_x0, const Mat& y,
                        const Mat& u, const OptimizerConfig& cfg,
                        const std::vector<bool>* train_mask = nullptr);

/// Data-driven starting point for the first learning round: kernel scales from
/// the input spread, noise from the measurement spread, q(z) seeded by GP
/// regression on proxy transitions, inducing inputs scattered over the
/// observed input range. `control_scale` optionally floors the control-dim
/// lengthscales (e.g. from known control bounds) so inputs not yet exercised
/// in the first window stay within kernel reach later.
Hyperparameters make_initial_hyperparameters(const Gaussian& prior_x0, const Mat& y,
                                             const Mat& u,
                                             std::shared_ptr<const MeanFunction> mean,
                                             std::shared_ptr<const MeasurementModel> meas,
                                             int num_inducing, std::uint64_t seed,
                                             const Vec* control_scale = nullptr);

}  // namespace ogpssm

#endif  // OGPSSM_VI_BATCH_HPP
