#include "ogpssm/vi_batch.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ogpssm/vi_objectives.hpp"

namespace ogpssm {

using detail::build_theta;
using detail::gp_transition;
using detail::ThetaView;

TrajectoryBatch rollout_with_noise(const Hyperparameters& theta, const Mat& controls,
                                   const Gaussian& init, const NoiseBatch& noise) {
  const Eigen::Index d = theta.state_dim();
  const Eigen::Index len = controls.rows();
  const int n = static_cast<int>(noise.eps0.rows());
  const ParamLayout lay = ParamLayout::infer(theta);
  const ThetaView<double> tv = build_theta<double>(lay, VecX<double>(lay.pack(theta)), 0.0);
  const Mat init_chol = cholesky<double>(init.cov).L;

  TrajectoryBatch batch;
  batch.controls = controls;
  batch.noise = noise;
  batch.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Mat traj(len + 1, d);
    Vec x = init.mean + init_chol * Vec(noise.eps0.row(i).transpose());
    traj.row(0) = x.transpose();
    for (Eigen::Index t = 0; t < len; ++t) {
      x = gp_transition<double>(tv.post, tv.h.proc_noise, x, Vec(controls.row(t).transpose()),
                                Vec(noise.eps[i].row(t).transpose()), 0.0);
      traj.row(t + 1) = x.transpose();
    }
    batch.samples.push_back(std::move(traj));
  }
  return batch;
}

TrajectoryBatch rollout_samples(const Hyperparameters& theta, const Mat& controls,
                                const Gaussian& init, int num_samples, RngStream& rng) {
  const RngStream base = rng.split(rng.next_u64());
  const NoiseBatch noise =
      NoiseBatch::draw(base, num_samples, controls.rows(), theta.state_dim());
  return rollout_with_noise(theta, controls, init, noise);
}

BatchElboObjective::BatchElboObjective(const ParamLayout& layout, Gaussian prior_x0, Mat y,
                                       Mat u, int num_samples, std::uint64_t seed)
    : detail::SlottedViObjective(layout, layout.size, num_samples, seed),
      prior_x0_(std::move(prior_x0)) {
  require(y.rows() == u.rows(), "BatchElboObjective: y and u must pair up");
  prior_chol_ = cholesky<double>(prior_x0_.cov).L;
  detail::RolloutWindow w;
  w.y = std::move(y);
  w.u = std::move(u);
  w.mean_off = layout_.off_x0_mean;
  w.chol_off = layout_.off_x0_chol;
  windows_.push_back(std::move(w));
  resample(0);
}

template <typename T>
T BatchElboObjective::kl_terms_impl(const VecX<T>& x) const {
  VecX<T> qm;
  MatX<T> qc;
  detail::gaussian_from_raw<T>(x, layout_.off_x0_mean, layout_.off_x0_chol,
                               layout_.state_dim, qm, qc);
  const HyperparametersT<T> h = layout_.unpack<T>(VecX<T>(x.head(layout_.size)));
  T kl = kl_gaussian_from_cholesky<T>(qm, qc, VecX<T>(prior_x0_.mean.template cast<T>()),
                                      MatX<T>(prior_chol_.template cast<T>()));
  kl += prior_kl<T>(h.gp, detail::loss_jitter(extra_jitter_));
  return kl;
}

double BatchElboObjective::kl_terms(const VecX<double>& x) const {
  return kl_terms_impl<double>(x);
}
ad::Rev BatchElboObjective::kl_terms(const RVec& x) const { return kl_terms_impl<ad::Rev>(x); }

double elbo(const Hyperparameters& theta, const Mat& y, const Mat& u,
            const Gaussian& prior_x0, int num_samples, RngStream& rng) {
  require(y.rows() == u.rows(), "elbo: y and u must pair up");
  const ParamLayout lay = ParamLayout::infer(theta);
  BatchElboObjective obj(lay, prior_x0, y, u, num_samples, 0);
  obj.use_noise(
      NoiseBatch::draw(rng.split(rng.next_u64()), num_samples, u.rows(), theta.state_dim()));
  return -obj.value(lay.pack(theta));
}

AdamResult adam_minimize(Objective& objective, Vec x0, const OptimizerConfig& cfg,
                         const std::vector<bool>* train_mask) {
  const Eigen::Index n = objective.dim();
  require(x0.size() == n, "adam_minimize: bad initial point");
  Vec x = std::move(x0);
  Vec m = Vec::Zero(n), v = Vec::Zero(n), grad(n);

  AdamResult result;
  result.best_x = x;
  result.best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.max_iters));
  bool jitter_raised = false;
  double best_smoothed = std::numeric_limits<double>::infinity();
  int last_progress = 0;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const auto tic = std::chrono::steady_clock::now();
    objective.resample(static_cast<std::uint64_t>(iter));
    double loss = 0.0;
    bool ok = true;
    try {
      loss = objective.value_and_grad(x, grad);
      ok = std::isfinite(loss) && grad.allFinite();
    } catch (const NotPositiveDefinite&) {
      ok = false;
    }
    if (!ok) {
      if (!jitter_raised) {
        objective.set_extra_jitter(1e-6);
        jitter_raised = true;
      }
      objective.resample(static_cast<std::uint64_t>(iter) ^ 0x5DEECE66Dull);
      try {
        loss = objective.value_and_grad(x, grad);
      } catch (const NotPositiveDefinite& e) {
        throw NonFinite(std::string("training loss failed after jitter retry: ") + e.what());
      }
      if (!std::isfinite(loss) || !grad.allFinite())
        throw NonFinite("training loss or gradient is not finite after retry");
    }

    if (train_mask)
      for (Eigen::Index j = 0; j < n; ++j)
        if (!(*train_mask)[static_cast<std::size_t>(j)]) grad[j] = 0.0;

    if (cfg.grad_clip > 0.0) {
      const double gnorm = grad.norm();
      if (gnorm > cfg.grad_clip) grad *= cfg.grad_clip / gnorm;
    }

    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.best_x = x;
    }
    losses.push_back(loss);
    const double wall =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tic)
            .count();
    result.trace.push_back({iter, loss, wall});
    result.iters = iter + 1;

    // Stop once the smoothed loss has not materially improved for two
    // windows. "Materially" = the relative tolerance plus an allowance for
    // the Monte-Carlo noise of a window mean (estimated from mean-centered
    // first differences, which a smooth descent trend leaves untouched).
    const int w = cfg.window;
    if (static_cast<int>(losses.size()) >= w) {
      const auto end = losses.end();
      const double smoothed = std::accumulate(end - w, end, 0.0) / w;
      double dmean = 0.0;
      for (auto it = end - w + 1; it != end; ++it) dmean += *it - *(it - 1);
      dmean /= std::max(1, w - 1);
      double dvar = 0.0;
      for (auto it = end - w + 1; it != end; ++it) {
        const double c = (*it - *(it - 1)) - dmean;
        dvar += c * c;
      }
      dvar /= std::max(1, w - 2);
      const double se = std::sqrt(0.5 * dvar / w);
      const double margin =
          cfg.rel_tol * std::max(std::abs(best_smoothed), 1e-8) + cfg.noise_tol_sigma * se;
      if (smoothed < best_smoothed - margin) {
        best_smoothed = smoothed;
        last_progress = iter;
      } else if (smoothed < best_smoothed) {
        best_smoothed = smoothed;
      }
      if (iter - last_progress >= 2 * w) {
        result.converged = true;
        break;
      }
    }

    const double t = iter + 1.0;
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    x -= (cfg.step_size / bc1) *
         (m.array() / ((v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
  }
  return result;
}

LearnResult learn_batch(const Hyperparameters& init, const Gaussian& prior_x0, const Mat& y,
                        const Mat& u, const OptimizerConfig& cfg,
                        const std::vector<bool>* train_mask) {
  require(y.rows() > 0, "learn_batch: empty data");
  const ParamLayout lay = ParamLayout::infer(init);
  BatchElboObjective obj(lay, prior_x0, y, u, cfg.num_samples, cfg.seed);
  AdamResult res = adam_minimize(obj, lay.pack(init), cfg, train_mask);
  LearnResult out;
  out.params = lay.unpack<double>(VecX<double>(res.best_x));
  out.trace = std::move(res.trace);
  out.converged = res.converged;
  out.best_loss = res.best_loss;
  out.iters = res.iters;
  return out;
}

Hyperparameters make_initial_hyperparameters(const Gaussian& prior_x0, const Mat& y,
                                             const Mat& u,
                                             std::shared_ptr<const MeanFunction> mean,
                                             std::shared_ptr<const MeasurementModel> meas,
                                             int num_inducing, std::uint64_t seed,
                                             const Vec* control_scale) {
  const Eigen::Index d = prior_x0.dim();
  const Eigen::Index p = u.cols();
  const Eigen::Index o = meas->obs_dim();
  const Eigen::Index len = u.rows();
  require(mean->input_dim() == d + p && mean->output_dim() == d,
          "make_initial_hyperparameters: mean function shape mismatch");
  require(y.rows() == len, "make_initial_hyperparameters: y and u must pair up");

  // Proxy latent trajectory: mean-function rollout with directly observed
  // components replaced by their measurements.
  const Mat h = meas->jacobian(prior_x0.mean);
  auto selector_dim = [&](Eigen::Index row) -> Eigen::Index {
    Eigen::Index hits = 0, dim = -1;
    for (Eigen::Index s = 0; s < d; ++s)
      if (h(row, s) != 0.0) {
        ++hits;
        dim = s;
      }
    return (hits == 1 && std::abs(h(row, dim) - 1.0) < 1e-12) ? dim : -1;
  };

  Mat proxy(len + 1, d);
  proxy.row(0) = prior_x0.mean.transpose();
  for (Eigen::Index t = 0; t < len; ++t) {
    Vec input(d + p);
    input.head(d) = proxy.row(t).transpose();
    input.tail(p) = u.row(t).transpose();
    Vec next = mean_eval<double>(*mean, input);
    for (Eigen::Index j = 0; j < o; ++j) {
      const Eigen::Index dim = selector_dim(j);
      if (dim >= 0) next[dim] = y(t, j);
    }
    proxy.row(t + 1) = next.transpose();
  }

  Mat inputs(len, d + p);
  inputs.leftCols(d) = proxy.topRows(len);
  inputs.rightCols(p) = u;

  Hyperparameters out;
  out.x0_mean = prior_x0.mean;
  out.x0_cov = prior_x0.cov;
  out.measurement = meas;

  Vec var_y(o);
  for (Eigen::Index j = 0; j < o; ++j) {
    const double mu = y.col(j).mean();
    var_y[j] = (y.col(j).array() - mu).square().sum() / std::max<Eigen::Index>(1, len - 1);
  }
  out.meas_noise = (0.1 * var_y).cwiseMax(1e-3);
  out.proc_noise = Vec::Constant(d, 1e-2);
  for (Eigen::Index j = 0; j < o; ++j) {
    const Eigen::Index dim = selector_dim(j);
    if (dim >= 0) out.proc_noise[dim] = std::max(0.1 * var_y[j], 1e-3);
  }

  Vec ell(d + p);
  for (Eigen::Index j = 0; j < d + p; ++j) {
    const double mu = inputs.col(j).mean();
    const double sd = std::sqrt((inputs.col(j).array() - mu).square().sum() /
                                std::max<Eigen::Index>(1, len - 1));
    ell[j] = std::max(sd, 0.25);
  }
  if (control_scale)
    for (Eigen::Index j = 0; j < p; ++j)
      ell[d + j] = std::max(ell[d + j], (*control_scale)[j]);
  double inc_var = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const Vec diff = proxy.col(j).tail(len) - proxy.col(j).head(len);
    const double mu = diff.mean();
    inc_var += (diff.array() - mu).square().sum() / std::max<Eigen::Index>(1, len - 1);
  }
  inc_var = std::max(inc_var / static_cast<double>(d), 1e-2);

  out.gp.kernel = SeArdKernel{ell, inc_var};
  out.gp.mean = std::move(mean);
  out.gp.v = Mat::Identity(d, d);

  RngStream rng(seed);
  const Vec lo = inputs.colwise().minCoeff().transpose();
  const Vec hi = inputs.colwise().maxCoeff().transpose();
  Mat eta(num_inducing, d + p);
  for (int i = 0; i < num_inducing; ++i)
    for (Eigen::Index j = 0; j < d + p; ++j) {
      const double range = hi[j] - lo[j];
      eta(i, j) = rng.uniform(lo[j], hi[j]) + 1e-3 * (1.0 + range) * rng.normal();
    }
  out.gp.inducing = eta;

  VariationalGp tmp = out.gp;
  tmp.mu_z = Mat::Zero(num_inducing, d);
  tmp.sigma_z = Mat::Identity(num_inducing, num_inducing);
  const MatrixNormal prior = gp_prior<double>(tmp);
  out.gp.sigma_z = prior.row_cov;

  // Seed q(z) by GP regression on the proxy transitions so the starting model
  // already tracks the window. Left at the prior the optimizer tends to
  // explain the data as measurement noise, and prior-scale Sigma_z injects so
  // much rollout variance that trajectories diverge.
  Mat resid(len, d);
  for (Eigen::Index t = 0; t < len; ++t) {
    Vec input(d + p);
    input.head(d) = proxy.row(t).transpose();
    input.tail(p) = u.row(t).transpose();
    resid.row(t) = proxy.row(t + 1) - mean_eval<double>(*out.gp.mean, input).transpose();
  }
  const double ridge = out.proc_noise.mean() + out.meas_noise.mean();
  Mat k_xx = kernel_gram<double>(out.gp.kernel, inputs);
  k_xx.diagonal().array() += ridge;
  const Mat k_ex = kernel_matrix<double>(out.gp.kernel, eta, inputs);
  out.gp.mu_z = prior.mean + k_ex * k_xx.llt().solve(resid);
  // Shrunk prior covariance: keeps q(z) aligned with the (possibly very
  // ill-conditioned) Gram so the prior KL stays moderate whatever the
  // conditioning, while rollout variance starts small.
  out.gp.sigma_z = 0.01 * prior.row_cov;
  return out;
}

}  // namespace ogpssm
