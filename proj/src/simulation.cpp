#include "needle/simulation.hpp"

#include "needle/csv.hpp"
#include "needle/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace needle {

namespace {

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) {
    a += two_pi;
  }
  return a >= two_pi ? 0.0 : a;
}

// Position-only sensor with latency; direction is re-estimated from successive
// measured positions whenever noise is on.
class Sensor {
public:
  Sensor(const PlantConfig &plant, const NeedleState &initial)
      : plant_(plant), rng_(plant.seed), estimate_(initial.direction) {}

  NeedleState measure(const std::vector<NeedleState> &truth, const std::vector<double> &speeds) {
    const auto k = static_cast<int>(truth.size()) - 1;
    const int idx = std::max(0, k - plant_.latency_steps);
    const NeedleState &delayed = truth[static_cast<std::size_t>(idx)];
    if (!plant_.noisy()) {
      return delayed;
    }

    Vec3 p = delayed.position;
    for (int i = 0; i < 3; ++i) {
      if (plant_.measurement_noise_std[i] > 0.0) {
        std::normal_distribution<double> noise(0.0, plant_.measurement_noise_std[i]);
        p[i] += noise(rng_);
      }
    }
    // Motion between the previous and current delayed samples came from speeds[idx - 1].
    if (last_ && idx >= 1) {
      const Vec3 delta = p - *last_;
      const double speed = speeds[static_cast<std::size_t>(idx - 1)];
      if (delta.norm() > 1e-9 && std::abs(speed) > 1e-3) {
        estimate_ = (speed > 0.0 ? 1.0 : -1.0) * delta.normalized();
      }
    }
    last_ = p;
    return {p, estimate_};
  }

private:
  const PlantConfig &plant_;
  std::mt19937_64 rng_;
  Vec3 estimate_;
  std::optional<Vec3> last_;
};

} // namespace

void PlantConfig::validate() const {
  if (!std::isfinite(gain_error) || gain_error <= -1.0) {
    throw InvalidConfig("plant.gain_error must be finite and > -1");
  }
  if (!std::isfinite(theta_e_error)) {
    throw InvalidConfig("plant.theta_e_error_rad must be finite");
  }
  if (!measurement_noise_std.allFinite() || (measurement_noise_std.array() < 0.0).any()) {
    throw InvalidConfig("plant.measurement_noise_std_mm must be finite and >= 0");
  }
  if (latency_steps < 0) {
    throw InvalidConfig("plant.latency_steps must be >= 0");
  }
}

TendonGeometry PlantConfig::true_geometry(const TendonGeometry &nominal) const {
  TendonGeometry g = nominal;
  g.gain = nominal.gain * (1.0 + gain_error);
  g.theta_e = wrap_angle(nominal.theta_e + theta_e_error);
  return g;
}

void RunSettings::validate() const {
  if (steps < 1) {
    throw InvalidConfig("run.steps must be >= 1");
  }
  if (!(stop_tolerance >= 0.0) || !(speed_tolerance >= 0.0) || !(terminal_window >= 0.0)) {
    throw InvalidConfig("run tolerances must be >= 0");
  }
  if (fault_budget < 0) {
    throw InvalidConfig("run.fault_budget must be >= 0");
  }
  if (!initial_state.position.allFinite() || !initial_state.direction.allFinite() ||
      std::abs(initial_state.direction.norm() - 1.0) > 1e-9) {
    throw InvalidConfig("run.initial_direction must be a finite unit vector");
  }
}

void Scenario::validate() const {
  mpc.validate();
  geometry.validate();
  plant.validate();
  ref::validate(reference);
  run.validate();
}

Summary compute_metrics(std::span<const StepRecord> records, double terminal_window) {
  if (records.empty()) {
    throw InvalidInput("metrics need at least one step record");
  }
  Summary s;
  s.steps = static_cast<int>(records.size());
  s.final_error = records.back().error;
  const double t_end = records.back().t;
  for (const auto &r : records) {
    s.inserted_length += std::abs(r.applied.speed) * r.dt;
    if (r.t > t_end - terminal_window) {
      s.terminal_max_error = std::max(s.terminal_max_error, r.error);
    } else {
      s.max_error = std::max(s.max_error, r.error);
    }
    s.faults += r.fault ? 1 : 0;
    s.saturated_steps += r.saturated ? 1 : 0;
  }
  if (s.inserted_length > 0.0) {
    s.error_percent = 100.0 * s.final_error / s.inserted_length;
  }
  return s;
}

ScenarioResult run_closed_loop(const Scenario &scenario) {
  scenario.validate();
  const MpcConfig &cfg = scenario.mpc;
  const TendonGeometry &nominal = scenario.geometry;
  const TendonGeometry actual = scenario.plant.true_geometry(nominal);
  const double dt = cfg.sample_time;
  const bool fixed_target = std::holds_alternative<ref::FixedTarget>(scenario.reference);

  ScenarioResult result;
  if (auto warning = ref::speed_warning(scenario.reference, cfg.speed.upper)) {
    result.warnings.push_back(*warning);
  }

  Controller controller(cfg);
  Sensor sensor(scenario.plant, scenario.run.initial_state);
  std::vector<NeedleState> truth{scenario.run.initial_state};
  std::vector<double> speeds;
  int faults = 0;

  for (int k = 0; k < scenario.run.steps; ++k) {
    const double t = k * dt;
    const NeedleState measured = sensor.measure(truth, speeds);
    const auto refs = ref::horizon_samples(scenario.reference, t, cfg.horizon, dt);

    const auto started = std::chrono::steady_clock::now();
    const RecedingStep decision = controller.step(measured, refs);
    const auto finished = std::chrono::steady_clock::now();

    StepRecord rec;
    rec.fault = decision.solution.fault;
    if (rec.fault && ++faults > scenario.run.fault_budget) {
      throw SimulationFault("optimizer fault budget exceeded at step " + std::to_string(k));
    }
    rec.applied = decision.applied;
    const InverseMapResult mapped = inverse_map(rec.applied, nominal);
    rec.command = mapped.command;
    rec.saturated = mapped.saturated;

    const VirtualInput true_rates = rates_from_command(rec.command, actual);
    truth.push_back(step(truth.back(), true_rates, dt, scenario.plant.integrator));
    speeds.push_back(rec.applied.speed);

    rec.t = (k + 1) * dt;
    rec.dt = dt;
    rec.state = truth.back();
    rec.measured = measured;
    rec.reference = ref::sample(scenario.reference, rec.t);
    rec.cost = decision.solution.cost;
    rec.solver_status = decision.solution.solver_status;
    rec.projected_gradient = decision.solution.projected_gradient;
    rec.solve_seconds = std::chrono::duration<double>(finished - started).count();
    rec.error = (rec.state.position - rec.reference).norm();
    result.records.push_back(rec);

    if (scenario.run.early_stop && fixed_target && rec.error < scenario.run.stop_tolerance &&
        std::abs(rec.applied.speed) < scenario.run.speed_tolerance) {
      break;
    }
  }

  result.summary = compute_metrics(result.records, scenario.run.terminal_window);
  return result;
}

OpenLoopResult run_open_loop(std::span<const TendonCommand> commands, double sample_time,
                             const PlantConfig &plant, const TendonGeometry &model_geometry,
                             const NeedleState &initial_state) {
  if (commands.empty()) {
    throw InvalidInput("open-loop replay needs at least one command");
  }
  model_geometry.validate();
  plant.validate();
  const TendonGeometry actual = plant.true_geometry(model_geometry);

  OpenLoopResult out;
  out.model.push_back(initial_state);
  out.plant.push_back(initial_state);
  out.error.push_back(0.0);
  out.inserted.push_back(0.0);
  for (const auto &cmd : commands) {
    const VirtualInput nominal_rates = rates_from_command(cmd, model_geometry);
    const VirtualInput true_rates = rates_from_command(cmd, actual);
    out.model.push_back(step(out.model.back(), nominal_rates, sample_time, plant.integrator));
    out.plant.push_back(step(out.plant.back(), true_rates, sample_time, plant.integrator));
    out.error.push_back((out.model.back().position - out.plant.back().position).norm());
    out.inserted.push_back(out.inserted.back() + std::abs(cmd.speed) * sample_time);
  }
  out.final_error = out.error.back();
  out.max_error = *std::max_element(out.error.begin(), out.error.end());
  out.inserted_length = out.inserted.back();
  if (out.inserted_length > 0.0) {
    out.error_percent = 100.0 * out.final_error / out.inserted_length;
  }
  return out;
}

std::vector<TendonCommand> read_tendon_commands(const std::string &path) {
  const auto table = read_numeric_csv(path, {"us_mm_s", "tau1_N", "tau2_N", "tau3_N"});
  std::vector<TendonCommand> commands;
  commands.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto &row = table.rows[i];
    if (row[1] < 0.0 || row[2] < 0.0 || row[3] < 0.0) {
      throw CsvError(i + 2, "tendon tensions must be nonnegative");
    }
    commands.push_back({row[0], Eigen::Vector3d(row[1], row[2], row[3])});
  }
  if (commands.empty()) {
    throw CsvError(1, "no command rows");
  }
  return commands;
}

void write_step_csv(const ScenarioResult &result, std::ostream &out) {
  out << kStepCsvHeader << '\n';
  for (const auto &r : result.records) {
    const double fields[] = {
        r.t,
        r.state.position.x(), r.state.position.y(), r.state.position.z(),
        r.state.direction.x(), r.state.direction.y(), r.state.direction.z(),
        r.reference.x(), r.reference.y(), r.reference.z(),
        r.applied.speed, r.applied.rate_x, r.applied.rate_y,
        r.command.tension[0], r.command.tension[1], r.command.tension[2],
        r.saturated ? 1.0 : 0.0,
        r.cost,
        r.error,
    };
    bool first = true;
    for (double v : fields) {
      out << (first ? "" : ",") << format_number(v);
      first = false;
    }
    out << '\n';
  }
}

void write_open_loop_csv(const OpenLoopResult &result, double sample_time, std::ostream &out) {
  out << "t_s,model_x_mm,model_y_mm,model_z_mm,plant_x_mm,plant_y_mm,plant_z_mm,inserted_mm,err_mm\n";
  for (std::size_t i = 0; i < result.model.size(); ++i) {
    const auto &m = result.model[i].position;
    const auto &p = result.plant[i].position;
    const double fields[] = {static_cast<double>(i) * sample_time, m.x(), m.y(), m.z(),
                             p.x(), p.y(), p.z(), result.inserted[i], result.error[i]};
    bool first = true;
    for (double v : fields) {
      out << (first ? "" : ",") << format_number(v);
      first = false;
    }
    out << '\n';
  }
}

} // namespace needle
