#ifndef OGPSSM_FINITE_DIFF_HPP
#define OGPSSM_FINITE_DIFF_HPP

#include <functional>

#include "ogpssm/types.hpp"

namespace ogpssm {

/// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                            double h = 1e-5) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = h * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + hi;
    const double fp = f(xp);
    xp[i] = x[i] - hi;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * hi);
  }
  return g;
}

/// Central-difference Jacobian of a vector-valued map.
inline Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                                double h = 1e-5) {
  Vec xp = x;
  Mat j;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = h * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + hi;
    const Vec fp = f(xp);
    xp[i] = x[i] - hi;
    const Vec fm = f(xp);
    xp[i] = x[i];
    if (j.size() == 0) j.resize(fp.size(), x.size());
    j.col(i) = (fp - fm) / (2.0 * hi);
  }
  return j;
}

/// Central-difference Hessian. A larger default step keeps the second
/// differences exact (up to roundoff) on quadratics.
inline Mat finite_diff_hessian(const std::function<double(const Vec&)>& f, const Vec& x,
                               double h = 1e-3) {
  const Eigen::Index n = x.size();
  Mat hess(n, n);
  Vec xp = x;
  const double f0 = f(x);
  Vec step(n);
  for (Eigen::Index i = 0; i < n; ++i) step[i] = h * (1.0 + std::abs(x[i]));
  for (Eigen::Index i = 0; i < n; ++i) {
    xp[i] = x[i] + step[i];
    const double fp = f(xp);
    xp[i] = x[i] - step[i];
    const double fm = f(xp);
    xp[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      xp[i] = x[i] + step[i];
      xp[j] = x[j] + step[j];
      const double fpp = f(xp);
      xp[j] = x[j] - step[j];
      const double fpm = f(xp);
      xp[i] = x[i] - step[i];
      const double fmm = f(xp);
      xp[j] = x[j] + step[j];
      const double fmp = f(xp);
      xp[i] = x[i];
      xp[j] = x[j];
      hess(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * step[i] * step[j]);
      hess(j, i) = hess(i, j);
    }
  }
  return hess;
}

}  // namespace ogpssm

#endif  // OGPSSM_FINITE_DIFF_HPP
