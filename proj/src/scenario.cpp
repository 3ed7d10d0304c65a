#include "needle/scenario.hpp"

#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace needle {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string> &items) {
  std::string out;
  for (const auto &item : items) {
    out += (out.empty() ? "" : "; ") + item;
  }
  return out;
}

// Typed access to one JSON object; records type errors and unknown keys as problems.
class Section {
public:
  Section(const json *obj, std::string path, std::vector<std::string> &problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {
    if (obj_ != nullptr && !obj_->is_object()) {
      problem("", "expected an object");
      obj_ = nullptr;
    }
  }

  bool has(const std::string &key) const { return obj_ != nullptr && obj_->contains(key); }

  Section child(const std::string &key) {
    seen_.insert(key);
    return Section(has(key) ? &obj_->at(key) : nullptr, name(key), problems_);
  }

  void read(const std::string &key, double &out) {
    if (const json *v = lookup(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        problem(key, "expected a number");
      }
    }
  }

  void read(const std::string &key, int &out) {
    if (const json *v = lookup(key)) {
      if (v->is_number_integer()) {
        out = v->get<int>();
      } else {
        problem(key, "expected an integer");
      }
    }
  }

  void read(const std::string &key, std::uint64_t &out) {
    if (const json *v = lookup(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)) {
        out = v->get<std::uint64_t>();
      } else {
        problem(key, "expected a nonnegative integer");
      }
    }
  }

  void read(const std::string &key, bool &out) {
    if (const json *v = lookup(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        problem(key, "expected true or false");
      }
    }
  }

  void read(const std::string &key, std::string &out) {
    if (const json *v = lookup(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        problem(key, "expected a string");
      }
    }
  }

  template <int N> void read(const std::string &key, Eigen::Matrix<double, N, 1> &out) {
    if (const json *v = lookup(key)) {
      if (!numeric_array(*v, N)) {
        problem(key, "expected an array of " + std::to_string(N) + " numbers");
        return;
      }
      for (int i = 0; i < N; ++i) {
        out[i] = (*v)[static_cast<std::size_t>(i)].get<double>();
      }
    }
  }

  void read(const std::string &key, InputBounds &out) {
    Eigen::Vector2d b(out.lower, out.upper);
    read<2>(key, b);
    out = {b[0], b[1]};
  }

  void read(const std::string &key, std::vector<double> &out) {
    if (const json *v = lookup(key)) {
      if (!numeric_array(*v, -1)) {
        problem(key, "expected an array of numbers");
        return;
      }
      out = v->get<std::vector<double>>();
    }
  }

  void read(const std::string &key, std::vector<Vec3> &out) {
    if (const json *v = lookup(key)) {
      bool ok = v->is_array();
      if (ok) {
        for (const auto &p : *v) {
          ok = ok && numeric_array(p, 3);
        }
      }
      if (!ok) {
        problem(key, "expected an array of [x, y, z] points");
        return;
      }
      out.clear();
      for (const auto &p : *v) {
        out.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
      }
    }
  }

  void require(const std::string &key) {
    if (!has(key)) {
      problem(key, "required key missing");
    }
  }

  /// Flags every key that was never read.
  void finish() {
    if (obj_ == nullptr) {
      return;
    }
    for (const auto &item : obj_->items()) {
      if (!seen_.contains(item.key())) {
        problem(item.key(), "unknown key");
      }
    }
  }

  void problem(const std::string &key, const std::string &what) {
    problems_.push_back(name(key) + ": " + what);
  }

private:
  const json *lookup(const std::string &key) {
    seen_.insert(key);
    return has(key) ? &obj_->at(key) : nullptr;
  }

  std::string name(const std::string &key) const {
    if (key.empty()) {
      return path_.empty() ? "<root>" : path_;
    }
    return path_.empty() ? key : path_ + "." + key;
  }

  static bool numeric_array(const json &v, int n) {
    if (!v.is_array() || (n >= 0 && v.size() != static_cast<std::size_t>(n))) {
      return false;
    }
    for (const auto &x : v) {
      if (!x.is_number()) {
        return false;
      }
    }
    return true;
  }

  const json *obj_;
  std::string path_;
  std::vector<std::string> &problems_;
  std::set<std::string> seen_;
};

json to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }
json to_json(const Eigen::Vector2d &v) { return json::array({v.x(), v.y()}); }
json to_json(const InputBounds &b) { return json::array({b.lower, b.upper}); }
json to_json(const std::vector<Vec3> &pts) {
  json arr = json::array();
  for (const auto &p : pts) {
    arr.push_back(to_json(p));
  }
  return arr;
}

void parse_mpc(Section s, MpcConfig &cfg) {
  s.read("T_s_s", cfg.sample_time);
  s.read("horizon", cfg.horizon);
  Eigen::Vector3d q = cfg.position_weight;
  Eigen::Vector3d r = cfg.input_weight;
  s.read<3>("Q_diag", q);
  s.read<3>("R_diag", r);
  cfg.position_weight = q;
  cfg.input_weight = r;
  s.read("us_bounds_mm_s", cfg.speed);
  s.read("ux_bounds_rad_s", cfg.rate_x);
  s.read("uy_bounds_rad_s", cfg.rate_y);
  s.read("planar_mode", cfg.planar_mode);
  Section solver = s.child("solver");
  solver.read("max_iterations", cfg.solver.max_iterations);
  solver.read("gradient_tolerance", cfg.solver.gradient_tolerance);
  solver.read("step_tolerance", cfg.solver.step_tolerance);
  solver.read("multi_start", cfg.solver.multi_start);
  solver.read("seed", cfg.solver.seed);
  solver.finish();
  s.finish();
}

void parse_geometry(Section s, TendonGeometry &g) {
  s.read("theta_e_rad", g.theta_e);
  s.read("gain_per_mm_N", g.gain);
  s.read("tau_max_N", g.tau_max);
  s.finish();
}

void parse_plant(Section s, PlantConfig &p) {
  std::string integrator = p.integrator == Integrator::euler ? "euler" : "exact";
  s.read("integrator", integrator);
  if (integrator == "euler") {
    p.integrator = Integrator::euler;
  } else if (integrator == "exact") {
    p.integrator = Integrator::exact;
  } else {
    s.problem("integrator", "expected \"euler\" or \"exact\"");
  }
  s.read("gain_error", p.gain_error);
  s.read("theta_e_error_rad", p.theta_e_error);
  s.read<3>("measurement_noise_std_mm", p.measurement_noise_std);
  s.read("latency_steps", p.latency_steps);
  s.read("seed", p.seed);
  s.finish();
}

ref::ReferenceSpec parse_reference(Section s, const std::filesystem::path &base_dir,
                                   std::vector<std::string> &problems) {
  std::string kind;
  s.require("kind");
  s.read("kind", kind);
  ref::ReferenceSpec spec = ref::FixedTarget{};

  if (kind == "fixed_target") {
    ref::FixedTarget f;
    s.require("target_mm");
    s.read<3>("target_mm", f.target);
    spec = f;
  } else if (kind == "helix") {
    ref::Helix h;
    s.read("radius_mm", h.radius);
    s.read("pitch_mm", h.pitch);
    s.read("angular_rate_rad_s", h.angular_rate);
    s.read<3>("axis", h.axis);
    s.read<3>("start_mm", h.start);
    s.read("duration_s", h.duration);
    spec = h;
  } else if (kind == "sharp_turn") {
    ref::SharpTurn t;
    s.require("waypoints_mm");
    s.read("waypoints_mm", t.waypoints);
    s.read("speed_mm_s", t.speed);
    spec = t;
  } else if (kind == "sinusoidal") {
    ref::Sinusoidal w;
    s.read("speed_mm_s", w.speed);
    s.read<2>("amplitude_mm", w.amplitude);
    s.read<2>("frequency_hz", w.frequency);
    s.read<3>("start_mm", w.start);
    s.read("duration_s", w.duration);
    spec = w;
  } else if (kind == "waypoint_path") {
    ref::WaypointPath w;
    s.require("times_s");
    s.require("points_mm");
    s.read("times_s", w.times);
    s.read("points_mm", w.points);
    spec = w;
  } else if (kind == "replay") {
    std::string path;
    s.require("path");
    s.read("path", path);
    if (!path.empty()) {
      std::filesystem::path p(path);
      if (p.is_relative() && !base_dir.empty()) {
        p = base_dir / p;
      }
      try {
        spec = ref::load_replay(p.lexically_normal().string());
      } catch (const std::exception &e) {
        problems.push_back(std::string("reference.path: ") + e.what());
      }
    }
  } else if (!kind.empty()) {
    s.problem("kind", "unknown reference kind '" + kind + "'");
  }
  s.finish();
  return spec;
}

void parse_run(Section s, RunSettings &run) {
  s.read("steps", run.steps);
  s.read("early_stop", run.early_stop);
  s.read("stop_tolerance_mm", run.stop_tolerance);
  s.read("speed_tolerance_mm_s", run.speed_tolerance);
  s.read("terminal_window_s", run.terminal_window);
  s.read("fault_budget", run.fault_budget);
  s.read<3>("initial_position_mm", run.initial_state.position);
  s.read<3>("initial_direction", run.initial_state.direction);
  s.finish();
}

json reference_to_json(const ref::ReferenceSpec &spec) {
  json j;
  j["kind"] = std::string(ref::kind_name(spec));
  std::visit(
      [&j](const auto &r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, ref::FixedTarget>) {
          j["target_mm"] = to_json(r.target);
        } else if constexpr (std::is_same_v<T, ref::Helix>) {
          j["radius_mm"] = r.radius;
          j["pitch_mm"] = r.pitch;
          j["angular_rate_rad_s"] = r.angular_rate;
          j["axis"] = to_json(r.axis);
          j["start_mm"] = to_json(r.start);
          j["duration_s"] = r.duration;
        } else if constexpr (std::is_same_v<T, ref::SharpTurn>) {
          j["waypoints_mm"] = to_json(r.waypoints);
          j["speed_mm_s"] = r.speed;
        } else if constexpr (std::is_same_v<T, ref::Sinusoidal>) {
          j["speed_mm_s"] = r.speed;
          j["amplitude_mm"] = to_json(r.amplitude);
          j["frequency_hz"] = to_json(r.frequency);
          j["start_mm"] = to_json(r.start);
          j["duration_s"] = r.duration;
        } else if constexpr (std::is_same_v<T, ref::WaypointPath>) {
          j["times_s"] = r.times;
          j["points_mm"] = to_json(r.points);
        } else {
          j["path"] = r.path;
        }
      },
      spec);
  return j;
}

Scenario base_fast() {
  Scenario s;
  // Virtual-input studies: the tension bound is lifted so that the mapping
  // never saturates and the plant sees exactly the commanded bending rates.
  s.geometry.tau_max = 1.0e4;
  return s;
}

Scenario fixed_target_preset(std::string name, const Vec3 &target) {
  Scenario s = base_fast();
  s.name = std::move(name);
  s.reference = ref::FixedTarget{target};
  return s;
}

Scenario planar_preset(std::string name, double sample_time, int steps, const Vec3 &target) {
  Scenario s;
  s.name = std::move(name);
  s.mpc.sample_time = sample_time;
  s.mpc.speed = {-1.0, 20.0};
  s.mpc.planar_mode = true;
  s.reference = ref::FixedTarget{target};
  s.run.steps = steps;
  s.run.early_stop = true;
  return s;
}

} // namespace

ScenarioError::ScenarioError(std::vector<std::string> problems)
    : InvalidConfig("invalid scenario: " + join(problems)), problems_(std::move(problems)) {}

Scenario parse_scenario(const json &doc, const std::filesystem::path &base_dir) {
  std::vector<std::string> problems;
  Scenario scenario;
  Section root(&doc, "", problems);

  int version = 0;
  root.require("schema_version");
  root.read("schema_version", version);
  if (root.has("schema_version") && version != kScenarioSchemaVersion) {
    root.problem("schema_version", "unsupported version " + std::to_string(version));
  }
  root.read("name", scenario.name);
  parse_mpc(root.child("mpc"), scenario.mpc);
  parse_geometry(root.child("geometry"), scenario.geometry);
  parse_plant(root.child("plant"), scenario.plant);
  root.require("reference");
  scenario.reference = parse_reference(root.child("reference"), base_dir, problems);
  parse_run(root.child("run"), scenario.run);
  root.finish();

  if (!problems.empty()) {
    throw ScenarioError(std::move(problems));
  }
  try {
    scenario.validate();
  } catch (const InvalidConfig &e) {
    throw ScenarioError({e.what()});
  }
  return scenario;
}

Scenario load_scenario(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError({"cannot open " + path});
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ScenarioError({path + ": " + e.what()});
  }
  return parse_scenario(doc, std::filesystem::path(path).parent_path());
}

json scenario_to_json(const Scenario &s) {
  json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["name"] = s.name;
  j["mpc"] = {
      {"T_s_s", s.mpc.sample_time},
      {"horizon", s.mpc.horizon},
      {"Q_diag", to_json(Vec3(s.mpc.position_weight))},
      {"R_diag", to_json(Vec3(s.mpc.input_weight))},
      {"us_bounds_mm_s", to_json(s.mpc.speed)},
      {"ux_bounds_rad_s", to_json(s.mpc.rate_x)},
      {"uy_bounds_rad_s", to_json(s.mpc.rate_y)},
      {"planar_mode", s.mpc.planar_mode},
      {"solver",
       {{"max_iterations", s.mpc.solver.max_iterations},
        {"gradient_tolerance", s.mpc.solver.gradient_tolerance},
        {"step_tolerance", s.mpc.solver.step_tolerance},
        {"multi_start", s.mpc.solver.multi_start},
        {"seed", s.mpc.solver.seed}}},
  };
  j["geometry"] = {
      {"theta_e_rad", s.geometry.theta_e},
      {"gain_per_mm_N", s.geometry.gain},
      {"tau_max_N", s.geometry.tau_max},
  };
  j["plant"] = {
      {"integrator", s.plant.integrator == Integrator::euler ? "euler" : "exact"},
      {"gain_error", s.plant.gain_error},
      {"theta_e_error_rad", s.plant.theta_e_error},
      {"measurement_noise_std_mm", to_json(Vec3(s.plant.measurement_noise_std))},
      {"latency_steps", s.plant.latency_steps},
      {"seed", s.plant.seed},
  };
  j["reference"] = reference_to_json(s.reference);
  j["run"] = {
      {"steps", s.run.steps},
      {"early_stop", s.run.early_stop},
      {"stop_tolerance_mm", s.run.stop_tolerance},
      {"speed_tolerance_mm_s", s.run.speed_tolerance},
      {"terminal_window_s", s.run.terminal_window},
      {"fault_budget", s.run.fault_budget},
      {"initial_position_mm", to_json(s.run.initial_state.position)},
      {"initial_direction", to_json(s.run.initial_state.direction)},
  };
  return j;
}

std::vector<std::string> preset_names() {
  return {"target1", "target2", "target3", "helix", "sharp_turn", "sinusoidal",
          "planar_fast", "planar_slow", "openloop_mismatch", "openloop_gain10"};
}

Scenario preset(std::string_view name) {
  if (name == "target1") {
    return fixed_target_preset("target1", {5.0, -15.0, 150.0});
  }
  if (name == "target2") {
    return fixed_target_preset("target2", {-25.0, 10.0, 190.0});
  }
  if (name == "target3") {
    return fixed_target_preset("target3", {35.0, 40.0, 230.0});
  }
  if (name == "helix") {
    Scenario s = base_fast();
    s.name = "helix";
    s.reference = ref::Helix{};
    return s;
  }
  if (name == "sharp_turn") {
    Scenario s = base_fast();
    s.name = "sharp_turn";
    s.reference = ref::SharpTurn{{Vec3(0, 0, 0), Vec3(0, 0, 60), Vec3(60, 0, 60)}, 12.0};
    return s;
  }
  if (name == "sinusoidal") {
    Scenario s = base_fast();
    s.name = "sinusoidal";
    ref::Sinusoidal w;
    w.speed = 15.0;
    w.amplitude = {8.0, 5.0};
    w.frequency = {0.15, 0.1};
    w.duration = 10.0;
    s.reference = w;
    return s;
  }
  if (name == "planar_fast") {
    return planar_preset("planar_fast", 0.05, 210, {0.0, -6.0, 90.0});
  }
  if (name == "planar_slow") {
    return planar_preset("planar_slow", 1.0, 12, {0.0, -6.0, 90.0});
  }
  if (name == "openloop_mismatch") {
    Scenario s;
    s.name = "openloop_mismatch";
    s.plant.gain_error = 0.05;
    s.plant.theta_e_error = 2.0 * std::numbers::pi / 180.0;
    s.reference = ref::FixedTarget{{0.0, 0.0, 70.0}};
    return s;
  }
  if (name == "openloop_gain10") {
    Scenario s;
    s.name = "openloop_gain10";
    s.plant.gain_error = 0.10;
    s.reference = ref::FixedTarget{{0.0, 0.0, 60.0}};
    return s;
  }
  throw InvalidInput("unknown preset '" + std::string(name) + "'");
}

json summary_to_json(const Scenario &scenario, const ScenarioResult &result) {
  const Summary &m = result.summary;
  json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["scenario"] = scenario_to_json(scenario);
  j["seed"] = scenario.plant.seed;
  j["metrics"] = {
      {"final_error_mm", m.final_error},
      {"max_error_mm", m.max_error},
      {"terminal_max_error_mm", m.terminal_max_error},
      {"inserted_length_mm", m.inserted_length},
      {"error_percent_of_inserted", m.error_percent ? json(*m.error_percent) : json(nullptr)},
      {"steps", m.steps},
      {"faults", m.faults},
      {"saturated_steps", m.saturated_steps},
  };
  j["warnings"] = result.warnings;
  return j;
}

} // namespace needle
