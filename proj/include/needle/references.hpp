#pragma once

#include "needle/kinematics.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace needle::ref {

struct FixedTarget {
  Vec3 target{Vec3::Zero()};
};

/// Helix about `axis` through `start`; the reference begins at `start` and
/// stops (holds its last point) after `duration`.
struct Helix {
  double radius{10.0};        ///< [mm]
  double pitch{40.0};         ///< axial advance per turn [mm]
  double angular_rate{1.2};   ///< [rad/s]
  Vec3 axis{Vec3::UnitZ()};
  Vec3 start{Vec3::Zero()};
  double duration{9.5};       ///< [s]
};

/// Polyline traversed at constant speed; corners are C0 only.
struct SharpTurn {
  std::vector<Vec3> waypoints;
  double speed{10.0};  ///< [mm/s]
};

/// Straight insertion along +z with independent sinusoidal x/y offsets.
struct Sinusoidal {
  double speed{15.0};                                 ///< [mm/s]
  Eigen::Vector2d amplitude{Eigen::Vector2d::Zero()};  ///< [mm]
  Eigen::Vector2d frequency{Eigen::Vector2d::Zero()};  ///< [Hz]
  Vec3 start{Vec3::Zero()};
  double duration{10.0};  ///< [s]
};

/// Timestamped samples, linearly interpolated. Before the first sample the
/// first point is held.
struct WaypointPath {
  std::vector<double> times;
  std::vector<Vec3> points;
};

/// Recorded tip path (CSV t_s,x_mm,y_mm,z_mm). Sampling before the first
/// timestamp is an error.
struct Replay {
  std::string path;
  std::vector<double> times;
  std::vector<Vec3> points;
};

using ReferenceSpec = std::variant<FixedTarget, Helix, SharpTurn, Sinusoidal, WaypointPath, Replay>;

std::string_view kind_name(const ReferenceSpec &spec);

/// Throws InvalidConfig on non-finite parameters or non-increasing timestamps.
void validate(const ReferenceSpec &spec);

Vec3 sample(const ReferenceSpec &spec, double t);

/// sample(spec, t + i * sample_time) for i = 0..horizon.
std::vector<Vec3> horizon_samples(const ReferenceSpec &spec, double t, int horizon,
                                  double sample_time);

/// Arrival time at each waypoint of a sharp-turn path.
std::vector<double> waypoint_times(const SharpTurn &turn);

/// Upper bound on the path speed the reference demands [mm/s].
double max_path_speed(const ReferenceSpec &spec);

/// Warning text when the reference outruns `max_insertion_speed` by more than 5 %.
std::optional<std::string> speed_warning(const ReferenceSpec &spec, double max_insertion_speed);

/// Loads the samples of a replay reference from its CSV file.
Replay load_replay(const std::string &path);

} // namespace needle::ref
