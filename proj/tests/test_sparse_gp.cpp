#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ogpssm/rng.hpp"
#include "ogpssm/sim_envs.hpp"
#include "ogpssm/sparse_gp.hpp"

using namespace ogpssm;

namespace {

VariationalGp make_gp(const Mat& eta, Eigen::Index out_dim, double ell = 1.0,
                      double sf2 = 1.0) {
  VariationalGp gp;
  gp.inducing = eta;
  gp.kernel = SeArdKernel{Vec::Constant(eta.cols(), ell), sf2};
  gp.mean = std::make_shared<ZeroMean>(eta.cols(), out_dim);
  gp.v = Mat::Identity(out_dim, out_dim);
  const auto prior = [&] {
    VariationalGp tmp = gp;
    tmp.mu_z = Mat::Zero(eta.rows(), out_dim);
    tmp.sigma_z = Mat::Identity(eta.rows(), eta.rows());
    return gp_prior<double>(tmp);
  }();
  gp.mu_z = prior.mean;
  gp.sigma_z = prior.row_cov;
  return gp;
}

VariationalGp random_gp(Eigen::Index m, Eigen::Index in_dim, Eigen::Index out_dim,
                        RngStream& rng) {
  VariationalGp gp;
  gp.inducing = rng.normal_matrix(m, in_dim) * 2.0;
  gp.kernel = SeArdKernel{
      Vec(Vec::Constant(in_dim, 1.0) + 0.3 * rng.normal_vector(in_dim).cwiseAbs()),
      0.5 + rng.uniform()};
  gp.mean = std::make_shared<ZeroMean>(in_dim, out_dim);
  Mat a = rng.normal_matrix(out_dim, out_dim);
  gp.v = a * a.transpose() + 0.3 * Mat::Identity(out_dim, out_dim);
  gp.mu_z = rng.normal_matrix(m, out_dim);
  Mat b = rng.normal_matrix(m, m);
  gp.sigma_z = 0.3 * (b * b.transpose()) + 0.2 * Mat::Identity(m, m);
  return gp;
}

}  // namespace

TEST_CASE("gp_prior: single inducing point with unit kernel") {
  Mat eta(1, 2);
  eta << 0.5, -0.3;
  const VariationalGp gp = make_gp(eta, 2);
  const MatrixNormal prior = gp_prior<double>(gp);
  CHECK(prior.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(prior.row_cov(0, 0) == doctest::Approx(1.0));
  CHECK((prior.col_cov - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("gp_prior: two points at unit distance") {
  Mat eta(2, 1);
  eta << 0.0, 1.0;
  const VariationalGp gp = make_gp(eta, 1);
  const MatrixNormal prior = gp_prior<double>(gp);
  CHECK(prior.row_cov(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(prior.row_cov(1, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(prior.row_cov(0, 0) == doctest::Approx(prior.row_cov(1, 1)));
}

TEST_CASE("gp_prior: duplicated inducing inputs fail loudly") {
  Mat eta(2, 1);
  eta << 0.7, 0.7;
  const VariationalGp gp = [&] {
    VariationalGp g;
    g.inducing = eta;
    g.kernel = SeArdKernel{Vec::Ones(1), 1.0};
    g.mean = std::make_shared<ZeroMean>(1, 1);
    g.v = Mat::Identity(1, 1);
    g.mu_z = Mat::Zero(2, 1);
    g.sigma_z = Mat::Identity(2, 2);
    return g;
  }();
  CHECK_THROWS_AS(gp_prior<double>(gp), NotPositiveDefinite);
  CHECK_THROWS_AS(make_posterior<double>(gp), NotPositiveDefinite);
}

TEST_CASE("predict: exact interpolation at an inducing input") {
  Mat eta(2, 1);
  eta << -0.5, 1.2;
  VariationalGp gp = make_gp(eta, 1);
  gp.sigma_z = Mat::Zero(2, 2);  // certain inducing outputs at the prior mean
  const Gaussian out = predict<double>(gp, Vec(eta.row(1).transpose()));
  CHECK(out.mean[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(out.cov(0, 0)) < 1e-8);
}

TEST_CASE("predict: empty inducing set returns the prior") {
  VariationalGp gp;
  gp.inducing = Mat(0, 2);
  gp.kernel = SeArdKernel{Vec::Ones(2), 1.4};
  gp.mean = std::make_shared<ZeroMean>(2, 1);
  gp.v = Mat::Constant(1, 1, 0.9);
  gp.mu_z = Mat(0, 1);
  gp.sigma_z = Mat(0, 0);
  const Gaussian out = predict<double>(gp, Vec::Constant(2, 3.0));
  CHECK(out.mean[0] == 0.0);
  CHECK(out.cov(0, 0) == doctest::Approx(1.4 * 0.9));
}

TEST_CASE("predict: hand-evaluated single inducing point") {
  Mat eta(1, 1);
  eta << 0.0;
  VariationalGp gp = make_gp(eta, 1);
  gp.mu_z = Mat::Constant(1, 1, 2.0);
  const Gaussian out = predict<double>(gp, Vec::Constant(1, 1.0));
  CHECK(out.mean[0] == doctest::Approx(std::exp(-0.5) * 2.0).epsilon(1e-9));
}

TEST_CASE("predict covariance stays PSD over random models and queries") {
  RngStream rng(42);
  for (int rep = 0; rep < 50; ++rep) {
    VariationalGp gp = random_gp(6, 2, 2, rng);
    const auto post = make_posterior<double>(gp);
    const Gaussian out = post.predict(Vec(rng.normal_vector(2) * 2.0));
    CHECK_NOTHROW(cholesky<double>(out.cov));
  }
}

TEST_CASE("predict reproduces full GP regression when inducing = training inputs") {
  RngStream rng(8);
  const int n = 7;
  Mat x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = -2.0 + 4.0 * i / (n - 1);
  SeArdKernel kernel{Vec::Constant(1, 0.8), 1.3};
  const double noise = 0.05;
  const Vec y = rng.normal_vector(n);

  const Mat k = kernel_gram<double>(kernel, x);
  const Mat k_noisy = k + noise * Mat::Identity(n, n);
  const Mat k_noisy_inv = k_noisy.llt().solve(Mat::Identity(n, n));

  VariationalGp gp;
  gp.inducing = x;
  gp.kernel = kernel;
  gp.mean = std::make_shared<ZeroMean>(1, 1);
  gp.v = Mat::Identity(1, 1);
  gp.mu_z = k * k_noisy_inv * y;         // exact GP posterior mean over f(X)
  gp.sigma_z = k - k * k_noisy_inv * k;  // exact GP posterior covariance
  const auto post = make_posterior<double>(gp);

  for (double q : {-1.7, -0.4, 0.9, 2.3}) {
    const Vec kq = kernel_vector<double>(kernel, Vec::Constant(1, q), x);
    const double mean_ref = kq.dot(k_noisy_inv * y);
    const double var_ref = kernel.signal_variance - kq.dot(k_noisy_inv * kq);
    const Gaussian out = post.predict(Vec::Constant(1, q));
    CHECK(out.mean[0] == doctest::Approx(mean_ref).epsilon(1e-6));
    CHECK(out.cov(0, 0) == doctest::Approx(var_ref).epsilon(1e-6));
  }
}

TEST_CASE("prior_kl: zero at the prior, positive when perturbed, matches vec KL") {
  RngStream rng(5);
  Mat eta = rng.normal_matrix(3, 2);
  VariationalGp gp = make_gp(eta, 2);
  CHECK(prior_kl<double>(gp) == doctest::Approx(0.0).epsilon(1e-9));

  gp.mu_z(1, 0) += 0.7;
  CHECK(prior_kl<double>(gp) > 1e-4);

  VariationalGp gp2 = random_gp(3, 2, 2, rng);
  const MatrixNormal q{gp2.mu_z, gp2.sigma_z, gp2.v};
  const MatrixNormal p = gp_prior<double>(gp2);
  const double kl_vec = kl_gaussian<double>(to_gaussian(q), to_gaussian(p));
  CHECK(prior_kl<double>(gp2) == doctest::Approx(kl_vec).epsilon(1e-8));
}

TEST_CASE("marginalize_old_inducing: identity when nothing changes") {
  RngStream rng(11);
  VariationalGp gp = random_gp(4, 2, 2, rng);
  const MatrixNormal out = marginalize_old_inducing<double>(gp, gp.inducing);
  CHECK((out.mean - gp.mu_z).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((out.row_cov - gp.sigma_z).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((out.col_cov - gp.v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("marginalize_old_inducing: far-away inducing reverts to the prior") {
  RngStream rng(12);
  VariationalGp gp = random_gp(4, 1, 1, rng);
  gp.mu_z.array() += 2.0;  // move q(z) well away from the prior
  Mat far(2, 1);
  far << 500.0, 503.0;
  const MatrixNormal out = marginalize_old_inducing<double>(gp, far);
  // A ~ 0: the mean reverts to m(eta_old) = 0 and the covariance to K_oo.
  CHECK(out.mean.cwiseAbs().maxCoeff() < 1e-10);
  const Mat k_oo = kernel_gram<double>(gp.kernel, far);
  CHECK((out.row_cov - k_oo).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("marginalize_old_inducing: moments match Monte-Carlo sampling") {
  RngStream rng(13);
  VariationalGp gp = random_gp(3, 1, 2, rng);  // q(z') at eta'
  Mat eta_old = rng.normal_matrix(2, 1);
  const MatrixNormal analytic = marginalize_old_inducing<double>(gp, eta_old);

  // conditional p(z | z', theta'): MN(A z', K_oo - A K_no, V) for a zero mean fn
  const Mat k_oo = kernel_gram<double>(gp.kernel, eta_old);
  const Mat k_on = kernel_matrix<double>(gp.kernel, eta_old, gp.inducing);
  const Mat chol_nn = cholesky<double>(kernel_gram<double>(gp.kernel, gp.inducing)).L;
  const Mat a_t = solve_cholesky<double>(chol_nn, Mat(k_on.transpose()));
  const Mat cond_cov = symmetrize<double>(Mat(k_oo - a_t.transpose() * k_on.transpose()));

  const int n = 200000;
  RngStream mc(99);
  const Eigen::Index mo = eta_old.rows(), d = 2;
  Mat mean_acc = Mat::Zero(mo, d);
  std::vector<Vec> flat;
  flat.reserve(n);
  const MatrixNormal qz{gp.mu_z, gp.sigma_z, gp.v};
  JitterPolicy jit;
  jit.start = 1e-9;
  for (int i = 0; i < n; ++i) {
    const Mat zp = sample_matrix_normal(qz, mc, jit);
    const MatrixNormal cond{Mat(a_t.transpose() * zp), cond_cov, gp.v};
    const Mat z = sample_matrix_normal(cond, mc, jit);
    mean_acc += z;
    flat.push_back(Eigen::Map<const Vec>(z.data(), mo * d));
  }
  mean_acc /= n;

  const Gaussian analytic_vec = to_gaussian(analytic);
  const Vec mean_flat = Eigen::Map<const Vec>(mean_acc.data(), mo * d);
  for (Eigen::Index j = 0; j < mo * d; ++j) {
    const double se = std::sqrt(analytic_vec.cov(j, j) / n);
    CHECK(std::abs(mean_flat[j] - analytic_vec.mean[j]) < 3.5 * se);
  }
  Mat cov_acc = Mat::Zero(mo * d, mo * d);
  for (const auto& z : flat) cov_acc += (z - mean_flat) * (z - mean_flat).transpose();
  cov_acc /= (n - 1);
  for (Eigen::Index i = 0; i < mo * d; ++i)
    for (Eigen::Index j = 0; j < mo * d; ++j) {
      const double c = analytic_vec.cov(i, j);
      const double se =
          std::sqrt((analytic_vec.cov(i, i) * analytic_vec.cov(j, j) + c * c) / n);
      CHECK(std::abs(cov_acc(i, j) - c) < 3.5 * se);
    }
}
