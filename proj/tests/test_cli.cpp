#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "needle/kinematics.hpp"
#include "needle/mapping.hpp"
#include "support/oracles.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace needle;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

const fs::path &scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "needle_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli(const std::string &args, const std::string &env = "") {
  const fs::path out = scratch() / "stdout.txt";
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = env + " '" NEEDLE_CLI_PATH "' " + args + " > '" + out.string() + "' 2> '" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::string quoted(const fs::path &p) { return "'" + p.string() + "'"; }

std::string bundled(const std::string &name) {
  return quoted(fs::path(NEEDLE_SCENARIO_DIR) / (name + ".json"));
}

std::string commands(const std::string &name) {
  return quoted(fs::path(NEEDLE_SCENARIO_DIR) / "commands" / (name + ".csv"));
}

// Writes a calibration directory from exact constant-curvature insertions.
void write_calibration_dir(const fs::path &dir, const std::vector<std::pair<int, double>> &runs,
                           double gain) {
  fs::create_directories(dir);
  json manifest;
  manifest["runs"] = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto [tendon, tension] = runs[i];
    TendonCommand cmd{20.0, Eigen::Vector3d::Zero()};
    cmd.tension[tendon - 1] = tension;
    TendonGeometry g;
    g.gain = gain;
    g.tau_max = 1e4;
    const auto states = rollout({}, std::vector<VirtualInput>(100, rates_from_command(cmd, g)), 0.05,
                                Integrator::exact);
    const std::string name = "run" + std::to_string(i) + ".csv";
    std::ofstream csv(dir / name);
    csv.precision(17);
    csv << "x_mm,y_mm,z_mm\n";
    for (const auto &s : states) {
      csv << s.position.x() << ',' << s.position.y() << ',' << s.position.z() << '\n';
    }
    manifest["runs"].push_back({{"file", name}, {"tendon_index", tendon}, {"tension_N", tension}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2);
}

} // namespace

TEST_CASE("run a bundled scenario") {
  const fs::path out = scratch() / "target1";
  const Outcome r = cli("run " + bundled("target1") + " --out " + quoted(out));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("target1: final error") != std::string::npos);
  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["metrics"]["final_error_mm"].get<double>() <= 0.5);
  CHECK(fs::file_size(out / "steps.csv") > 0);
}

TEST_CASE("reruns are byte identical") {
  json doc = json::parse(slurp(fs::path(NEEDLE_SCENARIO_DIR) / "target2.json"));
  doc["plant"]["measurement_noise_std_mm"] = {0.05, 0.05, 0.05};
  doc["plant"]["latency_steps"] = 1;
  const fs::path noisy = scratch() / "noisy.json";
  std::ofstream(noisy) << doc.dump(2);

  const fs::path a = scratch() / "rerun_a";
  const fs::path b = scratch() / "rerun_b";
  REQUIRE(cli("run " + quoted(noisy) + " --out " + quoted(a)).code == 0);
  REQUIRE(cli("run " + quoted(noisy) + " --out " + quoted(b)).code == 0);
  CHECK(slurp(a / "steps.csv") == slurp(b / "steps.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));

  const fs::path c = scratch() / "rerun_c";
  REQUIRE(cli("run " + quoted(noisy) + " --seed 12345 --out " + quoted(c)).code == 0);
  CHECK(slurp(a / "steps.csv") != slurp(c / "steps.csv"));
  CHECK(json::parse(slurp(c / "summary.json"))["seed"] == 12345);
}

TEST_CASE("invalid scenario exits 2 and names the field") {
  json doc = json::parse(slurp(fs::path(NEEDLE_SCENARIO_DIR) / "target1.json"));
  doc["mpc"]["horizon"] = 0;
  const fs::path bad = scratch() / "horizon0.json";
  std::ofstream(bad) << doc.dump(2);
  const Outcome r = cli("run " + quoted(bad) + " --out " + quoted(scratch() / "bad"));
  CHECK(r.code == 2);
  CHECK(r.err.find("mpc.horizon") != std::string::npos);
  CHECK_FALSE(fs::exists(scratch() / "bad" / "steps.csv"));

  CHECK(cli("run --preset target9 --out " + quoted(scratch() / "bad")).code == 2);
  CHECK(cli("run --out " + quoted(scratch() / "bad")).code == 2);
  CHECK(cli("frobnicate").code == 2);
}

TEST_CASE("calibrate") {
  fs::create_directories(scratch() / "calib_empty");
  const Outcome empty = cli("calibrate " + quoted(scratch() / "calib_empty") + " --out " +
                            quoted(scratch() / "calib_empty.json"));
  CHECK(empty.code == 2);
  CHECK_FALSE(empty.err.empty());

  write_calibration_dir(scratch() / "calib_good", {{1, 1.0}, {2, 2.5}, {3, 4.0}, {1, 5.5}, {2, 7.0}},
                        3.7e-4);
  const fs::path out = scratch() / "calib_good.json";
  const Outcome good = cli("calibrate " + quoted(scratch() / "calib_good") + " --out " + quoted(out));
  REQUIRE(good.code == 0);
  const json doc = json::parse(slurp(out));
  CHECK(std::abs(doc["gain_per_mm_N"].get<double>() - 3.7e-4) / 3.7e-4 <= 0.005);
  CHECK(doc["runs"].size() == 5);
  CHECK(doc["runs"][3]["curvature_per_mm"].get<double>() ==
        doctest::Approx(3.7e-4 * 5.5).epsilon(1e-6));

  // Runs generated with two different gains do not sit on one line.
  write_calibration_dir(scratch() / "calib_mixed", {{1, 2.0}, {2, 4.0}}, 3.0e-4);
  write_calibration_dir(scratch() / "calib_mixed_b", {{3, 6.0}}, 4.5e-4);
  fs::copy_file(scratch() / "calib_mixed_b" / "run0.csv", scratch() / "calib_mixed" / "run2.csv");
  json manifest = json::parse(slurp(scratch() / "calib_mixed" / "manifest.json"));
  manifest["runs"].push_back({{"file", "run2.csv"}, {"tendon_index", 3}, {"tension_N", 6.0}});
  std::ofstream(scratch() / "calib_mixed" / "manifest.json") << manifest.dump(2);
  const fs::path mixed_out = scratch() / "calib_mixed.json";
  REQUIRE(cli("calibrate " + quoted(scratch() / "calib_mixed") + " --out " + quoted(mixed_out)).code == 0);
  const json mixed = json::parse(slurp(mixed_out));
  CHECK(mixed["fit_residual_per_mm"].get<double>() > 1e-6);
}

TEST_CASE("replay") {
  const fs::path bad_csv = scratch() / "bad_commands.csv";
  std::ofstream(bad_csv) << "us_mm_s,tau1_N,tau2_N,tau3_N\n20,1,0,0\n20,1,0,0\n20,x,0,0\n";
  const Outcome bad = cli("replay " + quoted(bad_csv) + " --preset openloop_mismatch --out " +
                          quoted(scratch() / "replay_bad"));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("row 4") != std::string::npos);

  // No perturbation: model and plant agree.
  const fs::path clean = scratch() / "replay_clean";
  REQUIRE(cli("replay " + commands("replay_switching") + " --preset target1 --out " + quoted(clean)).code == 0);
  const json c = json::parse(slurp(clean / "replay_summary.json"));
  CHECK(c["metrics"]["max_error_mm"].get<double>() <= 1e-9);

  // A 10 % gain error on a single-tendon arc reproduces the two-arc chord.
  const fs::path gain = scratch() / "replay_gain";
  REQUIRE(cli("replay " + commands("single_tendon_60mm") + " " + bundled("openloop_gain10") +
              " --out " + quoted(gain))
              .code == 0);
  const json g = json::parse(slurp(gain / "replay_summary.json"));
  const double kappa = 3.7e-4 * 5.0;
  const double chord = (oracle::arc_endpoint(kappa, 60.0) - oracle::arc_endpoint(1.1 * kappa, 60.0)).norm();
  CHECK(g["metrics"]["final_error_mm"].get<double>() == doctest::Approx(chord).epsilon(0.01));
  CHECK(g["metrics"]["inserted_length_mm"].get<double>() == doctest::Approx(60.0));

  for (const char *name : {"replay_constant", "replay_switching", "replay_ramp"}) {
    CAPTURE(name);
    const fs::path dir = scratch() / name;
    const Outcome r = cli("replay " + commands(name) + " " + bundled("openloop_mismatch") + " --out " +
                          quoted(dir));
    REQUIRE(r.code == 0);
    CHECK(r.out.find(" %)") != std::string::npos);
    const json m = json::parse(slurp(dir / "replay_summary.json"))["metrics"];
    CHECK(m["error_percent_of_inserted"].get<double>() > 0.0);
    CHECK(slurp(dir / "replay.csv").size() > 0);
  }
}

TEST_CASE("batch runs presets in parallel with deterministic output") {
  const fs::path one = scratch() / "batch1";
  const fs::path four = scratch() / "batch4";
  const std::string args = "batch --preset target1 --preset target2 --preset sinusoidal --out ";
  REQUIRE(cli(args + quoted(one), "NEEDLE_MPC_THREADS=1").code == 0);
  const Outcome r = cli(args + quoted(four), "NEEDLE_MPC_THREADS=4");
  REQUIRE(r.code == 0);
  for (const char *name : {"target1", "target2", "sinusoidal"}) {
    CAPTURE(name);
    CHECK(r.out.find(std::string(name) + ": final error") != std::string::npos);
    CHECK(slurp(one / name / "steps.csv") == slurp(four / name / "steps.csv"));
    CHECK(slurp(one / name / "summary.json") == slurp(four / name / "summary.json"));
  }
}

TEST_CASE("preset listing and export") {
  const Outcome list = cli("preset");
  REQUIRE(list.code == 0);
  for (const char *name : {"target1", "target2", "target3", "helix", "sharp_turn", "openloop_mismatch"}) {
    CHECK(list.out.find(name) != std::string::npos);
  }
  const Outcome shown = cli("preset helix");
  REQUIRE(shown.code == 0);
  CHECK(json::parse(shown.out) == json::parse(slurp(fs::path(NEEDLE_SCENARIO_DIR) / "helix.json")));
}
