#ifndef OGPSSM_KERNEL_HPP
#define OGPSSM_KERNEL_HPP

#include <memory>

#include "ogpssm/finite_diff.hpp"
#include "ogpssm/tape.hpp"
#include "ogpssm/types.hpp"

namespace ogpssm {

using ad::Rev;
using RVec = VecX<Rev>;
using RMat = MatX<Rev>;

/// Squared-exponential kernel with one lengthscale per input dimension.
/// The kernel contract (evaluate / cross-covariance / input gradient) is what
/// the rest of the library is written against; other differentiable kernels
/// can slot in by providing the same three operations.
template <typename T>
struct SeArdKernelT {
  VecX<T> lengthscales;  // size D+P, all positive
  T signal_variance;     // k(x, x)

  Eigen::Index input_dim() const { return lengthscales.size(); }

  T operator()(const VecX<T>& a, const VecX<T>& b) const {
    T s(0.0);
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      const T diff = (a[d] - b[d]) / lengthscales[d];
      s += diff * diff;
    }
    return signal_variance * exp(T(-0.5) * s);
  }
};
using SeArdKernel = SeArdKernelT<double>;

template <typename T>
MatX<T> kernel_matrix(const SeArdKernelT<T>& k, const MatX<T>& a, const MatX<T>& b) {
  require(a.cols() == k.input_dim() && b.cols() == k.input_dim(),
          "kernel_matrix: input dimension mismatch");
  MatX<T> out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      out(i, j) = k(VecX<T>(a.row(i).transpose()), VecX<T>(b.row(j).transpose()));
  return out;
}

/// Symmetric Gram matrix; only the lower triangle is evaluated.
template <typename T>
MatX<T> kernel_gram(const SeArdKernelT<T>& k, const MatX<T>& a) {
  MatX<T> out(a.rows(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    out(i, i) = k.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      out(i, j) = k(VecX<T>(a.row(i).transpose()), VecX<T>(a.row(j).transpose()));
      out(j, i) = out(i, j);
    }
  }
  return out;
}

template <typename T>
VecX<T> kernel_vector(const SeArdKernelT<T>& k, const VecX<T>& x, const MatX<T>& b) {
  VecX<T> out(b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) out[j] = k(x, VecX<T>(b.row(j).transpose()));
  return out;
}

/// Row j holds d k(x, b_j) / d x.
inline Mat kernel_input_jacobian(const SeArdKernel& k, const Vec& x, const Mat& b) {
  Mat out(b.rows(), x.size());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const double kj = k(x, Vec(b.row(j).transpose()));
    for (Eigen::Index d = 0; d < x.size(); ++d)
      out(j, d) = -kj * (x[d] - b(j, d)) / (k.lengthscales[d] * k.lengthscales[d]);
  }
  return out;
}

// --- mean functions ---

/// Prior mean of the transition GP. Implementations provide the same map for
/// plain doubles and for tape variables so it can sit inside training losses;
/// inducing inputs are trainable and gradients flow through m(eta).
class MeanFunction {
 public:
  virtual ~MeanFunction() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual Vec eval(const Vec& x) const = 0;
  virtual RVec eval(const RVec& x) const = 0;
  /// d eval / d x; default central differences.
  virtual Mat jacobian(const Vec& x) const {
    return finite_diff_jacobian([this](const Vec& z) { return eval(z); }, x);
  }
};

class ZeroMean final : public MeanFunction {
 public:
  ZeroMean(Eigen::Index input_dim, Eigen::Index output_dim)
      : in_(input_dim), out_(output_dim) {}
  Eigen::Index input_dim() const override { return in_; }
  Eigen::Index output_dim() const override { return out_; }
  Vec eval(const Vec&) const override { return Vec::Zero(out_); }
  RVec eval(const RVec&) const override { return RVec::Constant(out_, Rev(0.0)); }
  Mat jacobian(const Vec&) const override { return Mat::Zero(out_, in_); }

 private:
  Eigen::Index in_, out_;
};

template <typename T>
VecX<T> mean_eval(const MeanFunction& m, const VecX<T>& x) {
  require(x.size() == m.input_dim(), "mean_eval: input dimension mismatch");
  return m.eval(x);
}

// --- measurement models ---

/// Known measurement map g. Both experiments observe positions linearly, but
/// the filter and the losses only rely on eval + jacobian.
class MeasurementModel {
 public:
  virtual ~MeasurementModel() = default;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index obs_dim() const = 0;
  virtual Vec eval(const Vec& x) const = 0;
  virtual RVec eval(const RVec& x) const = 0;
  virtual Mat jacobian(const Vec& x) const = 0;
};

class LinearMeasurement final : public MeasurementModel {
 public:
  explicit LinearMeasurement(Mat h) : h_(std::move(h)) {}

  /// Observe the first `obs_dim` state components directly.
  static std::shared_ptr<const LinearMeasurement> selector(Eigen::Index state_dim,
                                                           Eigen::Index obs_dim) {
    Mat h = Mat::Zero(obs_dim, state_dim);
    h.leftCols(obs_dim).setIdentity();
    return std::make_shared<const LinearMeasurement>(h);
  }

  Eigen::Index state_dim() const override { return h_.cols(); }
  Eigen::Index obs_dim() const override { return h_.rows(); }
  Vec eval(const Vec& x) const override { return h_ * x; }
  RVec eval(const RVec& x) const override { return h_.cast<Rev>() * x; }
  Mat jacobian(const Vec&) const override { return h_; }
  const Mat& matrix() const { return h_; }

 private:
  Mat h_;
};

}  // namespace ogpssm

#endif  // OGPSSM_KERNEL_HPP
