#pragma once

#include "needle/kinematics.hpp"

#include <span>
#include <string>
#include <vector>

namespace needle {

/// Constant-tension insertion on a single tendon and the tip points it traced.
struct CalibrationRun {
  int tendon_index{1};  ///< 1..3
  double tension{0.0};  ///< [N]
  std::vector<Vec3> tip_points;
  std::string source;   ///< file the points came from, if any
};

struct CalibrationResult {
  double gain{0.0};                 ///< [1/(mm N)]
  std::vector<double> curvatures;   ///< per run, [1/mm]
  double fit_residual{0.0};         ///< RMS of kappa - gain * tau, [1/mm]
};

/// Circle-fit curvature per run, then a zero-intercept gain fit.
/// Throws DegenerateFit when fewer than two distinct tensions are present.
CalibrationResult calibrate(std::span<const CalibrationRun> runs);

/// Reads `manifest.json` ({"runs": [{"file", "tendon_index", "tension_N"}]}) and
/// the per-run CSV files (x_mm,y_mm,z_mm) it names.
std::vector<CalibrationRun> load_calibration_runs(const std::string &directory);

} // namespace needle
