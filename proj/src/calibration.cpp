#include "needle/calibration.hpp"

#include "needle/csv.hpp"
#include "needle/errors.hpp"
#include "needle/mapping.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace needle {

CalibrationResult calibrate(std::span<const CalibrationRun> runs) {
  if (runs.size() < 2) {
    throw DegenerateFit("calibration needs at least two runs");
  }
  std::set<double> distinct;
  for (const auto &run : runs) {
    if (run.tendon_index < 1 || run.tendon_index > 3) {
      throw InvalidInput("tendon index must be 1, 2 or 3");
    }
    if (!(run.tension >= 0.0)) {
      throw InvalidInput("calibration tension must be nonnegative");
    }
    if (run.tip_points.size() < 3) {
      throw InvalidInput("calibration run needs at least three tip points");
    }
    distinct.insert(run.tension);
  }
  if (distinct.size() < 2) {
    throw DegenerateFit("calibration runs must span at least two distinct tensions");
  }

  CalibrationResult result;
  std::vector<TensionCurvatureSample> samples;
  for (const auto &run : runs) {
    const double kappa = estimate_curvature(run.tip_points);
    result.curvatures.push_back(kappa);
    samples.push_back({run.tension, kappa});
  }
  result.gain = fit_gain(samples);

  double sq = 0.0;
  for (const auto &s : samples) {
    const double r = s.curvature - result.gain * s.tension;
    sq += r * r;
  }
  result.fit_residual = std::sqrt(sq / static_cast<double>(samples.size()));
  return result;
}

std::vector<CalibrationRun> load_calibration_runs(const std::string &directory) {
  namespace fs = std::filesystem;
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) {
    throw InvalidInput(directory + " is not a directory");
  }
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw InvalidInput("no manifest.json in " + directory);
  }

  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw InvalidInput(std::string("manifest.json: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("runs") || !manifest["runs"].is_array()) {
    throw InvalidInput("manifest.json must hold a 'runs' array");
  }

  std::vector<CalibrationRun> runs;
  for (const auto &entry : manifest["runs"]) {
    CalibrationRun run;
    try {
      run.source = entry.at("file").get<std::string>();
      run.tendon_index = entry.at("tendon_index").get<int>();
      run.tension = entry.at("tension_N").get<double>();
    } catch (const nlohmann::json::exception &e) {
      throw InvalidInput(std::string("manifest.json run entry: ") + e.what());
    }
    const auto table = read_numeric_csv((dir / run.source).string(), {"x_mm", "y_mm", "z_mm"});
    for (const auto &row : table.rows) {
      run.tip_points.emplace_back(row[0], row[1], row[2]);
    }
    runs.push_back(std::move(run));
  }
  if (runs.empty()) {
    throw InvalidInput("manifest.json lists no runs");
  }
  return runs;
}

} // namespace needle
