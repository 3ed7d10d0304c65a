#include "needle/kinematics.hpp"

#include "needle/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>

namespace needle {

namespace {

void require_finite(const NeedleState &s, const VirtualInput &u) {
  if (!u.finite()) {
    throw InvalidInput("virtual input has non-finite components");
  }
  if (!s.position.allFinite() || !s.direction.allFinite()) {
    throw InvalidInput("needle state has non-finite components");
  }
}

void require_sample_time(double sample_time) {
  if (!(sample_time > 0.0) || !std::isfinite(sample_time)) {
    throw InvalidConfig("sample time must be positive, got " + std::to_string(sample_time));
  }
}

// sin(x)/x and (1 - cos x)/x, accurate near zero.
double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    return 1.0 - x * x / 6.0;
  }
  return std::sin(x) / x;
}

double cosc(double x) {
  if (std::abs(x) < 1e-4) {
    return x / 2.0 - x * x * x / 24.0;
  }
  return (1.0 - std::cos(x)) / x;
}

} // namespace

Vec6 NeedleState::stacked() const {
  Vec6 s;
  s << position, direction;
  return s;
}

NeedleState NeedleState::from_stacked(const Vec6 &s) {
  return {s.head<3>(), s.tail<3>()};
}

bool VirtualInput::finite() const {
  return std::isfinite(speed) && std::isfinite(rate_x) && std::isfinite(rate_y);
}

const SystemMatrices &SystemMatrices::get() {
  static const SystemMatrices matrices = [] {
    SystemMatrices m;
    m.insertion.setZero();
    m.insertion.topRightCorner<3, 3>().setIdentity();

    Eigen::Matrix3d g;
    g << 0, 0, 0,
         0, 0, 1,
         0, -1, 0;
    Eigen::Matrix3d h;
    h << 0, 0, -1,
         0, 0, 0,
         1, 0, 0;
    m.bend_x.setZero();
    m.bend_x.bottomRightCorner<3, 3>() = g;
    m.bend_y.setZero();
    m.bend_y.bottomRightCorner<3, 3>() = h;
    return m;
  }();
  return matrices;
}

Vec6 derivative(const NeedleState &s, const VirtualInput &u) {
  require_finite(s, u);
  const auto &m = SystemMatrices::get();
  const Vec6 x = s.stacked();
  return u.speed * (m.insertion * x) + u.rate_x * (m.bend_x * x) + u.rate_y * (m.bend_y * x);
}

NeedleState step_euler(const NeedleState &s, const VirtualInput &u, double sample_time) {
  require_sample_time(sample_time);
  require_finite(s, u);
  const auto &m = SystemMatrices::get();
  const Mat6 transition = Mat6::Identity() + sample_time * (u.speed * m.insertion +
                                                            u.rate_x * m.bend_x +
                                                            u.rate_y * m.bend_y);
  NeedleState next = NeedleState::from_stacked(transition * s.stacked());
  next.direction.normalize();
  return next;
}

NeedleState step_exact(const NeedleState &s, const VirtualInput &u, double sample_time) {
  require_sample_time(sample_time);
  require_finite(s, u);

  // d' = d x w = omega x d with omega = -w, w = (ux, uy, 0).
  const Vec3 omega(-u.rate_x, -u.rate_y, 0.0);
  const double rate = omega.norm();
  const Vec3 &d = s.direction;

  if (rate == 0.0) {
    return {s.position + u.speed * sample_time * d, d};
  }

  const Vec3 axis = omega / rate;
  const double angle = rate * sample_time;
  const Vec3 parallel = axis.dot(d) * axis;
  const Vec3 perpendicular = d - parallel;
  const Vec3 binormal = axis.cross(d);

  Vec3 next_dir = parallel + std::cos(angle) * perpendicular + std::sin(angle) * binormal;
  next_dir.normalize();

  // Integral of d(t) over the sample.
  const Vec3 swept = sample_time * (parallel + sinc(angle) * perpendicular + cosc(angle) * binormal);
  return {s.position + u.speed * swept, next_dir};
}

NeedleState step(const NeedleState &s, const VirtualInput &u, double sample_time,
                 Integrator integrator) {
  return integrator == Integrator::euler ? step_euler(s, u, sample_time)
                                         : step_exact(s, u, sample_time);
}

std::vector<NeedleState> rollout(const NeedleState &s0, std::span<const VirtualInput> inputs,
                                 double sample_time, Integrator integrator) {
  if (inputs.empty()) {
    throw InvalidInput("rollout requires at least one input");
  }
  std::vector<NeedleState> states;
  states.reserve(inputs.size() + 1);
  states.push_back(s0);
  for (const auto &u : inputs) {
    states.push_back(step(states.back(), u, sample_time, integrator));
  }
  return states;
}

} // namespace needle
