#include "needle/mapping.hpp"

#include "needle/csv.hpp"
#include "needle/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace needle {

namespace {

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2 &a, const Vec2 &b) { return a.x() * b.y() - a.y() * b.x(); }

// Counter-clockwise convex hull (monotone chain); collinear points dropped.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2 &a, const Vec2 &b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto &p : pts) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) {
      --k;
    }
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
    while (k >= lower && cross2(hull[k - 1] - hull[k - 2], *it - hull[k - 2]) <= 0.0) {
      --k;
    }
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

Vec2 closest_on_segment(const Vec2 &a, const Vec2 &b, const Vec2 &q) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return a + t * ab;
}

// Nearest point of the reachable curvature set (image of the tension box) to `target`.
Vec2 project_onto_reachable(const Eigen::Matrix<double, 2, 3> &map, double tau_max,
                            const Vec2 &target, double tol, bool &moved) {
  std::vector<Vec2> corners;
  for (int mask = 0; mask < 8; ++mask) {
    Eigen::Vector3d tau;
    for (int j = 0; j < 3; ++j) {
      tau[j] = (mask >> j) & 1 ? tau_max : 0.0;
    }
    corners.push_back(map * tau);
  }
  const auto hull = convex_hull(corners);

  bool inside = true;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 &a = hull[i];
    const Vec2 &b = hull[(i + 1) % hull.size()];
    const Vec2 edge = b - a;
    if (cross2(edge, target - a) < -tol * edge.norm()) {
      inside = false;
      break;
    }
  }
  moved = !inside;
  if (inside) {
    return target;
  }

  Vec2 best = hull.front();
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 c = closest_on_segment(hull[i], hull[(i + 1) % hull.size()], target);
    const double dist = (c - target).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

} // namespace

void TendonGeometry::validate() const {
  if (!(gain > 0.0) || !std::isfinite(gain)) {
    throw InvalidConfig("geometry.gain_per_mm_N must be positive");
  }
  if (!(tau_max > 0.0) || !std::isfinite(tau_max)) {
    throw InvalidConfig("geometry.tau_max_N must be positive");
  }
  if (!(theta_e >= 0.0 && theta_e < 2.0 * std::numbers::pi)) {
    throw InvalidConfig("geometry.theta_e_rad must lie in [0, 2*pi)");
  }
}

Eigen::Matrix<double, 2, 3> TendonGeometry::directions() const {
  Eigen::Matrix<double, 2, 3> dirs;
  for (int j = 0; j < kTendons; ++j) {
    const double angle = 2.0 * std::numbers::pi * j / 3.0 - theta_e;
    dirs(0, j) = std::cos(angle);
    dirs(1, j) = std::sin(angle);
  }
  return dirs;
}

double curvature_of_tension(double tension, const TendonGeometry &geom) {
  if (!(tension >= 0.0)) {
    throw InvalidInput("tendon tension must be nonnegative, got " + std::to_string(tension));
  }
  return geom.gain * tension;
}

Eigen::Vector2d forward_map(const Eigen::Vector3d &tension, const TendonGeometry &geom) {
  Eigen::Vector3d kappa;
  for (int j = 0; j < 3; ++j) {
    kappa[j] = curvature_of_tension(tension[j], geom);
  }
  return geom.directions() * kappa;
}

VirtualInput rates_from_command(const TendonCommand &cmd, const TendonGeometry &geom) {
  const Eigen::Vector2d kappa = forward_map(cmd.tension, geom);
  return {cmd.speed, kappa.x() * cmd.speed, kappa.y() * cmd.speed};
}

InverseMapResult inverse_map(const VirtualInput &u, const TendonGeometry &geom) {
  InverseMapResult result;
  result.command.speed = u.speed;
  if (std::abs(u.speed) < kMinInsertionSpeed) {
    return result;
  }

  const Eigen::Matrix<double, 2, 3> map = geom.gain * geom.directions();
  const Vec2 wanted(u.rate_x / u.speed, u.rate_y / u.speed);
  const double scale = geom.gain * geom.tau_max;
  bool moved = false;
  const Vec2 reachable = project_onto_reachable(map, geom.tau_max, wanted, 1e-12 * scale, moved);
  result.saturated = moved;

  // Particular solution orthogonal to the null space span{(1,1,1)}; the
  // minimum-norm nonnegative solution lifts it until the smallest tension is zero.
  const Eigen::Matrix2d gram = map * map.transpose();
  const Eigen::Vector3d particular = map.transpose() * gram.ldlt().solve(reachable);
  Eigen::Vector3d tension = particular.array() - particular.minCoeff();
  for (int j = 0; j < 3; ++j) {
    tension[j] = std::clamp(tension[j], 0.0, geom.tau_max);
  }
  result.command.tension = tension;
  return result;
}

double fit_gain(std::span<const TensionCurvatureSample> samples) {
  if (samples.size() < 2) {
    throw InvalidInput("gain fit needs at least two samples");
  }
  double num = 0.0;
  double den = 0.0;
  for (const auto &s : samples) {
    num += s.tension * s.curvature;
    den += s.tension * s.tension;
  }
  if (den == 0.0) {
    throw DegenerateFit("all calibration tensions are zero");
  }
  return num / den;
}

double estimate_curvature(std::span<const Eigen::Vector3d> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 3) {
    throw InvalidInput("curvature estimate needs at least three points");
  }

  Eigen::MatrixX3d centered(n, 3);
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto &p : points) {
    centroid += p;
  }
  centroid /= static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    centered.row(i) = (points[i] - centroid).transpose();
  }

  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(centered, Eigen::ComputeThinV);
  const auto &sv = svd.singularValues();
  if (sv[0] == 0.0 || sv[1] <= 1e-9 * sv[0]) {
    return 0.0;
  }

  // In-plane coordinates, scaled to O(1) for the algebraic fit.
  const double unit = sv[0] / std::sqrt(static_cast<double>(n));
  Eigen::MatrixX2d uv = centered * svd.matrixV().leftCols<2>() / unit;

  Eigen::MatrixX3d design(n, 3);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = uv(i, 0);
    design(i, 1) = uv(i, 1);
    design(i, 2) = 1.0;
    rhs[i] = -uv.row(i).squaredNorm();
  }
  const Eigen::Vector3d coef = design.colPivHouseholderQr().solve(rhs);
  Eigen::Vector2d center(-coef[0] / 2.0, -coef[1] / 2.0);
  double radius2 = center.squaredNorm() - coef[2];
  if (!(radius2 > 0.0) || !std::isfinite(radius2)) {
    return 0.0;
  }
  double radius = std::sqrt(radius2);

  // Geometric refinement: Gauss-Newton on sum (|q - c| - r)^2.
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::MatrixX3d jac(n, 3);
    Eigen::VectorXd res(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2d diff = uv.row(i).transpose() - center;
      const double dist = diff.norm();
      if (dist == 0.0) {
        return 1.0 / (radius * unit);
      }
      res[i] = dist - radius;
      jac(i, 0) = -diff.x() / dist;
      jac(i, 1) = -diff.y() / dist;
      jac(i, 2) = -1.0;
    }
    const Eigen::Vector3d delta = jac.colPivHouseholderQr().solve(-res);
    if (!delta.allFinite()) {
      break;
    }
    center += delta.head<2>();
    radius += delta[2];
    if (delta.norm() <= 1e-14 * (1.0 + radius)) {
      break;
    }
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    return 0.0;
  }
  return 1.0 / (radius * unit);
}

std::vector<TensionCurvatureSample> read_calibration_samples(const std::string &path) {
  const auto table = read_numeric_csv(path, {"tension_N", "curvature_per_mm"});
  std::vector<TensionCurvatureSample> samples;
  samples.reserve(table.rows.size());
  for (const auto &row : table.rows) {
    samples.push_back({row[0], row[1]});
  }
  return samples;
}

} // namespace needle
