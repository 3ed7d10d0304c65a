#pragma once

#include "needle/kinematics.hpp"

#include <Eigen/Core>

#include <span>
#include <utility>
#include <vector>

namespace needle {

/// Three tendons at 2*pi/3 spacing; tendon 1 sits at theta_e from the negative y-axis.
struct TendonGeometry {
  double theta_e{0.0};   ///< [rad], in [0, 2*pi)
  double gain{3.7e-4};   ///< curvature per unit tension [1/(mm N)]
  double tau_max{7.0};   ///< tension saturation [N]

  static constexpr int kTendons = 3;

  /// Throws InvalidConfig when an invariant is violated.
  void validate() const;

  /// Unit curvature direction of each tendon, one column per tendon.
  Eigen::Matrix<double, 2, 3> directions() const;
};

struct TendonCommand {
  double speed{0.0};            ///< [mm/s]
  Eigen::Vector3d tension{Eigen::Vector3d::Zero()};  ///< [N]
};

struct InverseMapResult {
  TendonCommand command;
  bool saturated{false};
};

/// Below this insertion speed the requested curvature is undefined and tensions are zeroed.
inline constexpr double kMinInsertionSpeed = 1e-6;

double curvature_of_tension(double tension, const TendonGeometry &geom);

/// Superposed trajectory curvature (kappa_x, kappa_y) [1/mm].
Eigen::Vector2d forward_map(const Eigen::Vector3d &tension, const TendonGeometry &geom);

VirtualInput rates_from_command(const TendonCommand &cmd, const TendonGeometry &geom);

/// Minimum-norm nonnegative, bounded tensions realizing the requested bending rates.
/// Unreachable curvatures are projected onto the reachable set (saturated = true).
InverseMapResult inverse_map(const VirtualInput &u, const TendonGeometry &geom);

struct TensionCurvatureSample {
  double tension{0.0};    ///< [N]
  double curvature{0.0};  ///< [1/mm]
};

/// Zero-intercept least-squares slope.
double fit_gain(std::span<const TensionCurvatureSample> samples);

/// 1/R of a least-squares circle through points projected onto their best-fit plane.
/// Returns 0 for (numerically) collinear points.
double estimate_curvature(std::span<const Eigen::Vector3d> points);

/// Two-column calibration CSV (tension_N, curvature_per_mm) with a header row.
std::vector<TensionCurvatureSample> read_calibration_samples(const std::string &path);

} // namespace needle
