#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace needle {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Needle tip pose: position [mm] and unit insertion direction.
struct NeedleState {
  Vec3 position{Vec3::Zero()};
  Vec3 direction{Vec3::UnitZ()};

  NeedleState() = default;
  NeedleState(const Vec3 &p, const Vec3 &d) : position(p), direction(d) {}

  /// Stacked (p, d) state vector.
  Vec6 stacked() const;
  static NeedleState from_stacked(const Vec6 &s);
};

/// Controller-facing inputs: insertion speed [mm/s] and two bending rates [rad/s].
struct VirtualInput {
  double speed{0.0};
  double rate_x{0.0};
  double rate_y{0.0};

  Eigen::Vector3d as_vector() const { return {speed, rate_x, rate_y}; }
  bool finite() const;
};

/// Constant matrices of the bilinear model  s' = us B1 s + ux B2 s + uy B3 s.
struct SystemMatrices {
  Mat6 insertion;  ///< B1: identity in the upper-right block
  Mat6 bend_x;     ///< B2: G in the lower-right block
  Mat6 bend_y;     ///< B3: H in the lower-right block

  static const SystemMatrices &get();
};

enum class Integrator { euler, exact };

/// Time derivative of the stacked state. Throws InvalidInput on non-finite input.
Vec6 derivative(const NeedleState &s, const VirtualInput &u);

/// One forward-Euler step of the bilinear model followed by direction renormalization.
NeedleState step_euler(const NeedleState &s, const VirtualInput &u, double sample_time);

/// Exact flow of the model over one sample for a constant input (rotation about
/// a fixed axis, position along the resulting circular arc).
NeedleState step_exact(const NeedleState &s, const VirtualInput &u, double sample_time);

NeedleState step(const NeedleState &s, const VirtualInput &u, double sample_time,
                 Integrator integrator);

/// States s0..sN for inputs u0..u(N-1).
std::vector<NeedleState> rollout(const NeedleState &s0, std::span<const VirtualInput> inputs,
                                 double sample_time, Integrator integrator);

} // namespace needle
