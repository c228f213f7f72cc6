#ifndef OGPSSM_SIM_ENVS_HPP
#define OGPSSM_SIM_ENVS_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <utility>

#include "ogpssm/kernel.hpp"
#include "ogpssm/rng.hpp"
#include "ogpssm/types.hpp"

namespace ogpssm {

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

// --- wind fields ---

struct WindField {
  enum class Kind { Zero, Constant, Vortex };
  Kind kind = Kind::Zero;
  double w1 = 0.0, w2 = 0.0;            // Constant
  double center_x = 0.0, center_y = 0.0;  // Vortex
  double strength = 0.0, falloff = 1.0;

  static WindField zero() { return {}; }
  static WindField constant(double w1, double w2) {
    WindField f;
    f.kind = Kind::Constant;
    f.w1 = w1;
    f.w2 = w2;
    return f;
  }
  static WindField vortex(double cx, double cy, double strength, double falloff) {
    WindField f;
    f.kind = Kind::Vortex;
    f.center_x = cx;
    f.center_y = cy;
    f.strength = strength;
    f.falloff = falloff;
    return f;
  }
};

/// Wind velocity at a position; continuous and bounded on the workspace.
inline std::pair<double, double> wind_eval(const WindField& f, double x1, double x2) {
  switch (f.kind) {
    case WindField::Kind::Zero:
      return {0.0, 0.0};
    case WindField::Kind::Constant:
      return {f.w1, f.w2};
    case WindField::Kind::Vortex: {
      const double dx = x1 - f.center_x, dy = x2 - f.center_y;
      const double scale = f.strength / (dx * dx + dy * dy + f.falloff * f.falloff);
      return {-dy * scale, dx * scale};
    }
  }
  return {0.0, 0.0};
}

// --- environment contract ---

struct StepResult {
  Vec next_state;
  Vec measurement;
};

class EnvInterface {
 public:
  virtual ~EnvInterface() = default;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index control_dim() const = 0;
  virtual Eigen::Index obs_dim() const = 0;
  virtual double dt() const = 0;
  /// Reseeds the internal noise stream and returns the initial state.
  virtual Vec reset(std::uint64_t seed) = 0;
  /// Applies one control; the measurement observes the post-transition state.
  virtual StepResult step(const Vec& state, const Vec& u) = 0;
  /// Control actually applied when `u` is commanded (bounds, if any).
  virtual Vec clamp_control(const Vec& u) const { return u; }
};

// --- scalar linear benchmark ---

class LinearToyEnv final : public EnvInterface {
 public:
  double a = 0.8;
  double proc_var = 0.1;
  double meas_var = 1.0;
  double x0 = 0.0;

  Eigen::Index state_dim() const override { return 1; }
  Eigen::Index control_dim() const override { return 1; }
  Eigen::Index obs_dim() const override { return 1; }
  double dt() const override { return 1.0; }

  Vec reset(std::uint64_t seed) override {
    rng_ = RngStream(seed);
    return Vec::Constant(1, x0);
  }

  StepResult step(const Vec& state, const Vec& u) override {
    Vec next(1), y(1);
    next[0] = a * state[0] + u[0] + std::sqrt(proc_var) * rng_.normal();
    y[0] = next[0] + std::sqrt(meas_var) * rng_.normal();
    return {next, y};
  }

 private:
  RngStream rng_{0};
};

/// The benchmark control schedule: -2 for the first 30 s, 3 for the next 30 s,
/// -1 afterwards.
inline double toy_control_schedule(int t) {
  if (t < 30) return -2.0;
  if (t < 60) return 3.0;
  return -1.0;
}

// --- fixed-wing UAV in a wind field ---

struct UavParams {
  double airspeed = 5.0;
  double dt = 0.1;
  double gravity = 9.81;
  // Angle noise entries are variances in deg^2 (converted to rad^2 here).
  Vec proc_var = make_proc_var();
  Vec meas_var = Vec::Constant(2, 1.0);
  double bank_limit = 60.0 * std::numbers::pi / 180.0;
  double control_limit = 1.0;  // |u| <= 1 rad/s
  WindField wind = WindField::constant(1.0, -0.5);
  Vec x0 = make_default_x0();

  static Vec make_proc_var() {
    Vec v(4);
    const double deg2 = 0.01 * 180.0 / std::numbers::pi;  // deg^2
    const double rad2 = deg2 * std::pow(std::numbers::pi / 180.0, 2);
    v << 0.1, 0.1, rad2, rad2;
    return v;
  }
  static Vec make_default_x0() {
    Vec v(4);
    v << 20.0, 0.0, std::numbers::pi / 2.0, 0.0;
    return v;
  }
};

class UavEnv final : public EnvInterface {
 public:
  explicit UavEnv(UavParams params = {}) : p_(std::move(params)) {}

  Eigen::Index state_dim() const override { return 4; }
  Eigen::Index control_dim() const override { return 1; }
  Eigen::Index obs_dim() const override { return 2; }
  double dt() const override { return p_.dt; }
  const UavParams& params() const { return p_; }

  Vec reset(std::uint64_t seed) override {
    rng_ = RngStream(seed);
    return p_.x0;
  }

  Vec clamp_control(const Vec& u) const override {
    Vec out = u;
    out[0] = std::clamp(u[0], -p_.control_limit, p_.control_limit);
    return out;
  }

  StepResult step(const Vec& state, const Vec& u) override {
    const Vec uc = clamp_control(u);
    const auto [w1, w2] = wind_eval(p_.wind, state[0], state[1]);
    Vec next(4);
    next[0] = state[0] + (p_.airspeed * std::cos(state[2]) + w1) * p_.dt +
              std::sqrt(p_.proc_var[0]) * rng_.normal();
    next[1] = state[1] + (p_.airspeed * std::sin(state[2]) + w2) * p_.dt +
              std::sqrt(p_.proc_var[1]) * rng_.normal();
    next[2] = wrap_angle(state[2] + p_.gravity * std::tan(state[3]) / p_.airspeed * p_.dt +
                         std::sqrt(p_.proc_var[2]) * rng_.normal());
    next[3] = std::clamp(state[3] + uc[0] * p_.dt + std::sqrt(p_.proc_var[3]) * rng_.normal(),
                         -p_.bank_limit, p_.bank_limit);
    Vec y(2);
    y[0] = next[0] + std::sqrt(p_.meas_var[0]) * rng_.normal();
    y[1] = next[1] + std::sqrt(p_.meas_var[1]) * rng_.normal();
    return {next, y};
  }

 private:
  UavParams p_;
  RngStream rng_{0};
};

// --- mean priors for the transition GP ---

/// The toy transition map itself; used as a known-dynamics prior in tests.
class ToyLinearMean final : public MeanFunction {
 public:
  explicit ToyLinearMean(double a = 0.8) : a_(a) {}
  Eigen::Index input_dim() const override { return 2; }
  Eigen::Index output_dim() const override { return 1; }
  Vec eval(const Vec& x) const override { return eval_impl<double>(x); }
  RVec eval(const RVec& x) const override { return eval_impl<Rev>(x); }
  Mat jacobian(const Vec&) const override {
    Mat j(1, 2);
    j << a_, 1.0;
    return j;
  }

 private:
  template <typename T>
  VecX<T> eval_impl(const VecX<T>& x) const {
    VecX<T> out(1);
    out[0] = T(a_) * x[0] + x[1];
    return out;
  }
  double a_;
};

/// UAV kinematics without the wind terms; the mean prior of the GP-SSM.
class UavNoWindMean final : public MeanFunction {
 public:
  UavNoWindMean(double airspeed, double dt, double gravity)
      : airspeed_(airspeed), dt_(dt), gravity_(gravity) {}
  explicit UavNoWindMean(const UavParams& p) : UavNoWindMean(p.airspeed, p.dt, p.gravity) {}

  Eigen::Index input_dim() const override { return 5; }
  Eigen::Index output_dim() const override { return 4; }
  Vec eval(const Vec& x) const override { return eval_impl<double>(x); }
  RVec eval(const RVec& x) const override { return eval_impl<Rev>(x); }

  Mat jacobian(const Vec& x) const override {
    Mat j = Mat::Zero(4, 5);
    j(0, 0) = 1.0;
    j(0, 2) = -airspeed_ * std::sin(x[2]) * dt_;
    j(1, 1) = 1.0;
    j(1, 2) = airspeed_ * std::cos(x[2]) * dt_;
    const double sec = 1.0 / std::cos(x[3]);
    j(2, 2) = 1.0;
    j(2, 3) = gravity_ * sec * sec / airspeed_ * dt_;
    j(3, 3) = 1.0;
    j(3, 4) = dt_;
    return j;
  }

 private:
  template <typename T>
  VecX<T> eval_impl(const VecX<T>& x) const {
    using std::cos;
    using std::sin;
    using std::tan;
    VecX<T> out(4);
    out[0] = x[0] + T(airspeed_ * dt_) * cos(x[2]);
    out[1] = x[1] + T(airspeed_ * dt_) * sin(x[2]);
    out[2] = x[2] + T(gravity_ / airspeed_ * dt_) * tan(x[3]);
    out[3] = x[3] + T(dt_) * x[4];
    return out;
  }
  double airspeed_, dt_, gravity_;
};

}  // namespace ogpssm

#endif  // OGPSSM_SIM_ENVS_HPP
