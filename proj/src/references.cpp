#include "needle/references.hpp"

#include "needle/csv.hpp"
#include "needle/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace needle::ref {

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };

void require(bool ok, const std::string &what) {
  if (!ok) {
    throw InvalidConfig("reference: " + what);
  }
}

void check_samples(const std::vector<double> &times, const std::vector<Vec3> &points) {
  require(!times.empty(), "needs at least one sample");
  require(times.size() == points.size(), "times and points differ in length");
  for (std::size_t i = 0; i < times.size(); ++i) {
    require(std::isfinite(times[i]) && points[i].allFinite(), "samples must be finite");
    if (i > 0) {
      require(times[i] > times[i - 1], "timestamps must be strictly increasing");
    }
  }
}

Vec3 interpolate(const std::vector<double> &times, const std::vector<Vec3> &points, double t) {
  if (t <= times.front()) {
    return points.front();
  }
  if (t >= times.back()) {
    return points.back();
  }
  const auto upper = std::upper_bound(times.begin(), times.end(), t);
  const auto k = static_cast<std::size_t>(upper - times.begin());
  const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return (1.0 - w) * points[k - 1] + w * points[k];
}

// Orthonormal (e1, e2) with e1 x e2 = axis.
std::pair<Vec3, Vec3> helix_basis(const Vec3 &axis) {
  const Vec3 a = axis.normalized();
  Vec3 e1 = Vec3::UnitX() - a.x() * a;
  if (e1.norm() < 1e-6) {
    e1 = Vec3::UnitY() - a.y() * a;
  }
  e1.normalize();
  return {e1, a.cross(e1)};
}

double max_segment_speed(const std::vector<double> &times, const std::vector<Vec3> &points) {
  double fastest = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    fastest = std::max(fastest, (points[i] - points[i - 1]).norm() / (times[i] - times[i - 1]));
  }
  return fastest;
}

} // namespace

std::string_view kind_name(const ReferenceSpec &spec) {
  return std::visit(overloaded{
                        [](const FixedTarget &) { return std::string_view("fixed_target"); },
                        [](const Helix &) { return std::string_view("helix"); },
                        [](const SharpTurn &) { return std::string_view("sharp_turn"); },
                        [](const Sinusoidal &) { return std::string_view("sinusoidal"); },
                        [](const WaypointPath &) { return std::string_view("waypoint_path"); },
                        [](const Replay &) { return std::string_view("replay"); },
                    },
                    spec);
}

void validate(const ReferenceSpec &spec) {
  std::visit(overloaded{
                 [](const FixedTarget &f) { require(f.target.allFinite(), "target must be finite"); },
                 [](const Helix &h) {
                   require(std::isfinite(h.radius) && h.radius >= 0.0, "helix radius must be >= 0");
                   require(std::isfinite(h.pitch) && std::isfinite(h.angular_rate),
                           "helix pitch and rate must be finite");
                   require(h.axis.allFinite() && h.axis.norm() > 0.0, "helix axis must be nonzero");
                   require(h.start.allFinite(), "helix start must be finite");
                   require(std::isfinite(h.duration) && h.duration > 0.0,
                           "helix duration must be positive");
                 },
                 [](const SharpTurn &s) {
                   require(s.waypoints.size() >= 2, "sharp turn needs at least two waypoints");
                   require(std::isfinite(s.speed) && s.speed > 0.0, "sharp turn speed must be positive");
                   for (std::size_t i = 0; i < s.waypoints.size(); ++i) {
                     require(s.waypoints[i].allFinite(), "waypoints must be finite");
                     if (i > 0) {
                       require((s.waypoints[i] - s.waypoints[i - 1]).norm() > 0.0,
                               "consecutive waypoints must differ");
                     }
                   }
                 },
                 [](const Sinusoidal &s) {
                   require(std::isfinite(s.speed) && s.amplitude.allFinite() &&
                               s.frequency.allFinite() && s.start.allFinite(),
                           "sinusoid parameters must be finite");
                   require(std::isfinite(s.duration) && s.duration > 0.0,
                           "sinusoid duration must be positive");
                 },
                 [](const WaypointPath &w) { check_samples(w.times, w.points); },
                 [](const Replay &r) { check_samples(r.times, r.points); },
             },
             spec);
}

Vec3 sample(const ReferenceSpec &spec, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw InvalidInput("reference time must be finite and >= 0");
  }
  return std::visit(
      overloaded{
          [](const FixedTarget &f) -> Vec3 { return f.target; },
          [t](const Helix &h) -> Vec3 {
            const double tt = std::min(t, h.duration);
            const auto [e1, e2] = helix_basis(h.axis);
            const double phase = h.angular_rate * tt;
            const double axial = h.pitch * phase / (2.0 * std::numbers::pi);
            return h.start + h.radius * (std::cos(phase) - 1.0) * e1 +
                   h.radius * std::sin(phase) * e2 + axial * h.axis.normalized();
          },
          [t](const SharpTurn &s) -> Vec3 { return interpolate(waypoint_times(s), s.waypoints, t); },
          [t](const Sinusoidal &s) -> Vec3 {
            const double tt = std::min(t, s.duration);
            const double two_pi = 2.0 * std::numbers::pi;
            return s.start + Vec3(s.amplitude.x() * std::sin(two_pi * s.frequency.x() * tt),
                                  s.amplitude.y() * std::sin(two_pi * s.frequency.y() * tt),
                                  s.speed * tt);
          },
          [t](const WaypointPath &w) -> Vec3 { return interpolate(w.times, w.points, t); },
          [t](const Replay &r) -> Vec3 {
            if (t < r.times.front()) {
              std::ostringstream msg;
              msg << "replay reference starts at t = " << r.times.front() << " s, sampled at " << t;
              throw OutOfRange(msg.str());
            }
            return interpolate(r.times, r.points, t);
          },
      },
      spec);
}

std::vector<Vec3> horizon_samples(const ReferenceSpec &spec, double t, int horizon,
                                  double sample_time) {
  if (horizon < 1 || !(sample_time > 0.0)) {
    throw InvalidConfig("horizon sampling needs horizon >= 1 and sample time > 0");
  }
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  for (int i = 0; i <= horizon; ++i) {
    out.push_back(sample(spec, t + i * sample_time));
  }
  return out;
}

std::vector<double> waypoint_times(const SharpTurn &turn) {
  std::vector<double> times{0.0};
  for (std::size_t i = 1; i < turn.waypoints.size(); ++i) {
    times.push_back(times.back() + (turn.waypoints[i] - turn.waypoints[i - 1]).norm() / turn.speed);
  }
  return times;
}

double max_path_speed(const ReferenceSpec &spec) {
  return std::visit(
      overloaded{
          [](const FixedTarget &) { return 0.0; },
          [](const Helix &h) {
            const double axial = h.pitch / (2.0 * std::numbers::pi);
            return std::abs(h.angular_rate) * std::hypot(h.radius, axial);
          },
          [](const SharpTurn &s) { return s.speed; },
          [](const Sinusoidal &s) {
            const double two_pi = 2.0 * std::numbers::pi;
            const double vx = s.amplitude.x() * two_pi * s.frequency.x();
            const double vy = s.amplitude.y() * two_pi * s.frequency.y();
            return std::sqrt(s.speed * s.speed + vx * vx + vy * vy);
          },
          [](const WaypointPath &w) { return max_segment_speed(w.times, w.points); },
          [](const Replay &r) { return max_segment_speed(r.times, r.points); },
      },
      spec);
}

std::optional<std::string> speed_warning(const ReferenceSpec &spec, double max_insertion_speed) {
  const double needed = max_path_speed(spec);
  if (needed > max_insertion_speed * 1.05) {
    std::ostringstream msg;
    msg << kind_name(spec) << " reference needs " << needed
        << " mm/s, above the insertion speed bound " << max_insertion_speed << " mm/s";
    return msg.str();
  }
  return std::nullopt;
}

Replay load_replay(const std::string &path) {
  const auto table = read_numeric_csv(path, {"t_s", "x_mm", "y_mm", "z_mm"});
  Replay r;
  r.path = path;
  for (const auto &row : table.rows) {
    r.times.push_back(row[0]);
    r.points.emplace_back(row[1], row[2], row[3]);
  }
  validate(r);
  return r;
}

} // namespace needle::ref
