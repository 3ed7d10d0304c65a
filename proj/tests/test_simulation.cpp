#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "needle/csv.hpp"
#include "needle/errors.hpp"
#include "needle/scenario.hpp"
#include "needle/simulation.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace needle;
namespace fs = std::filesystem;

namespace {

Scenario fixed_target_scenario(const Vec3 &target) {
  Scenario s;
  s.name = "unit";
  s.reference = ref::FixedTarget{target};
  s.geometry.tau_max = 1e4;
  return s;
}

std::string step_csv(const ScenarioResult &r) {
  std::ostringstream out;
  write_step_csv(r, out);
  return out.str();
}

std::vector<TendonCommand> constant_commands(double speed, const Eigen::Vector3d &tau, int n) {
  return std::vector<TendonCommand>(static_cast<std::size_t>(n), TendonCommand{speed, tau});
}

} // namespace

TEST_CASE("target at the start position produces no motion") {
  Scenario s = fixed_target_scenario(Vec3(3, -2, 7));
  s.run.initial_state = {Vec3(3, -2, 7), Vec3(0, 0.6, 0.8)};
  s.run.steps = 40;
  const ScenarioResult r = run_closed_loop(s);
  for (const auto &rec : r.records) {
    REQUIRE(rec.applied.speed == 0.0);
    REQUIRE(rec.applied.rate_x == 0.0);
    REQUIRE(rec.applied.rate_y == 0.0);
  }
  CHECK(r.summary.final_error == 0.0);
  CHECK(r.summary.inserted_length == 0.0);
  CHECK_FALSE(r.summary.error_percent.has_value());
}

TEST_CASE("straight-ahead planar target needs no tendon tension") {
  Scenario s = fixed_target_scenario(Vec3(0, 0, 150));
  s.mpc.planar_mode = true;
  s.geometry.tau_max = 7.0;
  const ScenarioResult r = run_closed_loop(s);
  double worst = 0.0;
  for (const auto &rec : r.records) {
    worst = std::max(worst, rec.command.tension.maxCoeff());
    REQUIRE(rec.applied.rate_y == 0.0);
  }
  CHECK(worst <= 1e-9);
  CHECK(r.summary.final_error <= 0.5);
}

TEST_CASE("first fixed target is reached") {
  const Scenario s = preset("target1");
  const ScenarioResult r = run_closed_loop(s);
  CHECK(r.records.size() == 210);
  CHECK(r.summary.final_error <= 0.5);
  CHECK(r.summary.faults == 0);
}

TEST_CASE("loop invariants on a moving reference") {
  const Scenario s = preset("helix");
  const ScenarioResult r = run_closed_loop(s);
  const TendonGeometry &g = s.geometry;
  for (const auto &rec : r.records) {
    // Feasible inputs.
    REQUIRE(rec.applied.speed >= s.mpc.speed.lower);
    REQUIRE(rec.applied.speed <= s.mpc.speed.upper);
    REQUIRE(std::abs(rec.applied.rate_x) <= 5.0);
    REQUIRE(std::abs(rec.applied.rate_y) <= 5.0);
    // Mapping consistency unless saturated.
    if (!rec.saturated) {
      const VirtualInput back = rates_from_command(rec.command, g);
      REQUIRE(std::abs(back.rate_x - rec.applied.rate_x) <= 1e-6);
      REQUIRE(std::abs(back.rate_y - rec.applied.rate_y) <= 1e-6);
    }
    REQUIRE(std::abs(rec.state.direction.norm() - 1.0) <= 1e-9);
    REQUIRE(rec.error == doctest::Approx((rec.state.position - rec.reference).norm()));
  }
  // Metric identity.
  const auto &m = r.summary;
  REQUIRE(m.error_percent.has_value());
  CHECK(*m.error_percent * m.inserted_length / 100.0 == doctest::Approx(m.final_error).epsilon(1e-14));
}

TEST_CASE("Euler plant without mismatch follows the controller prediction") {
  Scenario s = fixed_target_scenario(Vec3(-25, 10, 190));
  s.plant.integrator = Integrator::euler;
  const ScenarioResult r = run_closed_loop(s);
  oracle::Pose prev{s.run.initial_state.position, s.run.initial_state.direction};
  double worst = 0.0;
  for (const auto &rec : r.records) {
    const oracle::Pose want = oracle::euler(prev, rec.applied.speed, rec.applied.rate_x,
                                            rec.applied.rate_y, rec.dt);
    worst = std::max(worst, (rec.state.position - want.p).norm());
    prev = {rec.state.position, rec.state.direction};
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("closed loop is deterministic for a fixed seed") {
  Scenario s = preset("sinusoidal");
  s.plant.measurement_noise_std = Vec3(0.05, 0.05, 0.05);
  s.plant.latency_steps = 2;
  s.plant.seed = 9;
  const std::string a = step_csv(run_closed_loop(s));
  const std::string b = step_csv(run_closed_loop(s));
  CHECK(a == b);
  s.plant.seed = 10;
  CHECK(step_csv(run_closed_loop(s)) != a);
}

TEST_CASE("latency delays the measurement") {
  Scenario s = fixed_target_scenario(Vec3(10, 0, 120));
  s.plant.latency_steps = 3;
  s.run.steps = 30;
  const ScenarioResult r = run_closed_loop(s);
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    // Record k measured the state after step k - 1 - latency (initial state if negative).
    const long idx = static_cast<long>(k) - 3;
    const NeedleState want = idx <= 0 ? s.run.initial_state : r.records[static_cast<std::size_t>(idx - 1)].state;
    REQUIRE(r.records[k].measured.position == want.position);
  }
}

TEST_CASE("early stop on fixed targets") {
  Scenario s = fixed_target_scenario(Vec3(0, -6, 40));
  s.run.early_stop = true;
  s.run.steps = 400;
  const ScenarioResult r = run_closed_loop(s);
  CHECK(r.records.size() < 400);
  CHECK(r.summary.final_error < s.run.stop_tolerance);
  CHECK(std::abs(r.records.back().applied.speed) < s.run.speed_tolerance);
}

TEST_CASE("metrics from synthetic records") {
  StepRecord one;
  one.t = 0.05;
  one.dt = 0.05;
  one.applied = {20.0, 0.0, 0.0};
  one.error = 0.0;
  const Summary a = compute_metrics(std::vector<StepRecord>{one}, 0.0);
  CHECK(a.final_error == 0.0);
  CHECK(a.inserted_length == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*a.error_percent == 0.0);

  std::vector<StepRecord> log;
  const double errors[] = {3.0, 1.5, 4.25, 0.5, 2.0, 7.0};
  for (int k = 0; k < 6; ++k) {
    StepRecord rec;
    rec.t = 1.0 * (k + 1);
    rec.dt = 1.0;
    rec.applied = {k % 2 == 0 ? 2.0 : -1.0, 0.0, 0.0};
    rec.error = errors[k];
    rec.saturated = k == 2;
    log.push_back(rec);
  }
  const Summary b = compute_metrics(log, 1.5);
  CHECK(b.final_error == 7.0);
  CHECK(b.max_error == 4.25);           // t = 5 and 6 fall in the terminal window
  CHECK(b.terminal_max_error == 7.0);
  CHECK(b.inserted_length == 9.0);
  CHECK(b.saturated_steps == 1);
  CHECK(*b.error_percent == doctest::Approx(700.0 / 9.0).epsilon(1e-15));
  CHECK_THROWS_AS(compute_metrics(std::vector<StepRecord>{}, 1.0), InvalidInput);
}

TEST_CASE("open loop without perturbation has no error") {
  PlantConfig plant;
  const auto cmds = constant_commands(20.0, {3, 0, 1}, 100);
  for (auto integ : {Integrator::exact, Integrator::euler}) {
    plant.integrator = integ;
    const OpenLoopResult r = run_open_loop(cmds, 0.05, plant, TendonGeometry{});
    CHECK(r.max_error <= 1e-9);
    CHECK(r.inserted_length == doctest::Approx(100.0));
  }
}

TEST_CASE("gain mismatch matches the two-arc chord") {
  PlantConfig plant;
  plant.gain_error = 0.10;
  const TendonGeometry g;
  const double tau = 5.0;
  // 60 mm at 20 mm/s.
  const auto cmds = constant_commands(20.0, {tau, 0, 0}, 60);
  const OpenLoopResult r = run_open_loop(cmds, 0.05, plant, g);

  const double kappa = g.gain * tau;
  const Eigen::Vector2d nominal = oracle::arc_endpoint(kappa, 60.0);
  const Eigen::Vector2d perturbed = oracle::arc_endpoint(1.1 * kappa, 60.0);
  const double expected = (nominal - perturbed).norm();
  CHECK(r.final_error == doctest::Approx(expected).epsilon(1e-6));
  // Both arcs bend toward +y from the +z start.
  CHECK(r.model.back().position.y() == doctest::Approx(nominal.x()).epsilon(1e-6));
  CHECK(r.plant.back().position.z() == doctest::Approx(perturbed.y()).epsilon(1e-6));
}

TEST_CASE("open-loop error grows with depth") {
  PlantConfig plant;
  plant.gain_error = 0.05;
  const auto cmds = constant_commands(20.0, {3, 0, 0}, 100);
  const OpenLoopResult r = run_open_loop(cmds, 0.05, plant, TendonGeometry{});
  for (std::size_t i = 1; i < r.error.size(); ++i) {
    REQUIRE(r.error[i] >= r.error[i - 1]);
  }
  CHECK(r.final_error > 0.0);
  CHECK(*r.error_percent == doctest::Approx(100.0 * r.final_error / 100.0));
}

TEST_CASE("configuration validation") {
  PlantConfig p;
  p.latency_steps = -1;
  CHECK_THROWS_AS(p.validate(), InvalidConfig);
  p = {};
  p.measurement_noise_std = Vec3(0, -1, 0);
  CHECK_THROWS_AS(p.validate(), InvalidConfig);

  Scenario s = fixed_target_scenario(Vec3::Ones());
  s.run.steps = 0;
  CHECK_THROWS_AS(run_closed_loop(s), InvalidConfig);
  s = fixed_target_scenario(Vec3::Ones());
  s.run.initial_state.direction = Vec3(1, 1, 0);
  CHECK_THROWS_AS(run_closed_loop(s), InvalidConfig);

  CHECK_THROWS_AS(run_open_loop(std::vector<TendonCommand>{}, 0.05, PlantConfig{}, TendonGeometry{}),
                  InvalidInput);
}

TEST_CASE("tendon command CSV and step CSV layout") {
  const fs::path dir = fs::temp_directory_path() / "needle_simulation_test";
  fs::create_directories(dir);
  std::ofstream(dir / "ok.csv") << "us_mm_s,tau1_N,tau2_N,tau3_N\n20,3,0,0\n20,0,1.5,0\n";
  const auto cmds = read_tendon_commands((dir / "ok.csv").string());
  REQUIRE(cmds.size() == 2);
  CHECK(cmds[1].tension[1] == 1.5);

  std::ofstream(dir / "neg.csv") << "us_mm_s,tau1_N,tau2_N,tau3_N\n20,3,0,0\n20,-1,0,0\n";
  try {
    read_tendon_commands((dir / "neg.csv").string());
    FAIL("expected CsvError");
  } catch (const CsvError &e) {
    CHECK(e.row() == 3);
  }

  Scenario s = fixed_target_scenario(Vec3(1, 0, 10));
  s.run.steps = 3;
  const std::string csv = step_csv(run_closed_loop(s));
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header == kStepCsvHeader);
  std::string row;
  int rows = 0;
  while (std::getline(lines, row)) {
    ++rows;
    CHECK(std::count(row.begin(), row.end(), ',') == 18);
  }
  CHECK(rows == 3);
}
