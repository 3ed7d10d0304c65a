// needle_mpc: scenario runner, calibration and open-loop replay front end.
//
// Exit codes: 0 success, 2 validation error, 3 runtime fault.

#include "needle/calibration.hpp"
#include "needle/csv.hpp"
#include "needle/errors.hpp"
#include "needle/scenario.hpp"
#include "needle/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct ScenarioSource {
  std::string path;
  std::string preset;
};

needle::Scenario resolve(const ScenarioSource &src, std::optional<std::uint64_t> seed) {
  needle::Scenario s = src.preset.empty() ? needle::load_scenario(src.path)
                                          : needle::preset(src.preset);
  if (seed) {
    s.plant.seed = *seed;
  }
  return s;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw needle::InvalidInput("cannot write " + path.string());
  }
  out << text;
}

// Writes steps.csv and summary.json; returns the one-line report.
std::string run_one(const needle::Scenario &scenario, const fs::path &out_dir) {
  const needle::ScenarioResult result = needle::run_closed_loop(scenario);
  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "steps.csv", std::ios::binary);
    needle::write_step_csv(result, csv);
  }
  write_text(out_dir / "summary.json", needle::summary_to_json(scenario, result).dump(2) + "\n");
  std::string report;
  for (const auto &w : result.warnings) {
    report += "warning: " + w + "\n";
  }
  const auto &m = result.summary;
  report += scenario.name + ": final error " + needle::format_number(m.final_error) +
            " mm, max error " + needle::format_number(m.max_error) + " mm, inserted " +
            needle::format_number(m.inserted_length) + " mm\n";
  return report;
}

// Maps library exceptions onto exit codes.
template <class F> int guarded(F &&body) {
  try {
    body();
    return kExitOk;
  } catch (const needle::ScenarioError &e) {
    std::cerr << "error: invalid scenario\n";
    for (const auto &p : e.problems()) {
      std::cerr << "  " << p << '\n';
    }
    return kExitValidation;
  } catch (const needle::CsvError &e) {
    std::cerr << "error: malformed CSV at " << e.what() << '\n';
    return kExitValidation;
  } catch (const needle::InvalidInput &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const needle::InvalidConfig &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const needle::DegenerateFit &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception &e) {
    std::cerr << "fault: " << e.what() << '\n';
    return kExitRuntime;
  }
}

unsigned batch_threads(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char *env = std::getenv("NEEDLE_MPC_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) {
      n = std::min(n, static_cast<unsigned>(cap));
    }
  }
  return std::max(1u, std::min(n, static_cast<unsigned>(jobs)));
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Bilinear MPC for a tendon-driven steerable needle"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out;

  ScenarioSource run_src;
  auto *run = app.add_subcommand("run", "Run a closed-loop scenario");
  run->add_option("scenario", run_src.path, "Scenario JSON file");
  run->add_option("--preset", run_src.preset, "Bundled preset name");
  run->add_option("--seed", seed, "Override plant.seed");
  run->add_option("--out", out, "Output directory")->required();

  std::vector<std::string> batch_paths;
  std::vector<std::string> batch_presets;
  auto *batch = app.add_subcommand("batch", "Run several scenarios in parallel");
  batch->add_option("scenarios", batch_paths, "Scenario JSON files");
  batch->add_option("--preset", batch_presets, "Bundled preset names");
  batch->add_option("--seed", seed, "Override plant.seed");
  batch->add_option("--out", out, "Output root; one subdirectory per scenario")->required();

  std::string runs_dir;
  auto *calibrate = app.add_subcommand("calibrate", "Fit the curvature gain from insertion runs");
  calibrate->add_option("runs_dir", runs_dir, "Directory with manifest.json and run CSVs")->required();
  calibrate->add_option("--out", out, "Output JSON path")->required();

  std::string commands_csv;
  ScenarioSource replay_src;
  auto *replay = app.add_subcommand("replay", "Open-loop model-vs-plant replay of tendon commands");
  replay->add_option("commands", commands_csv, "CSV: us_mm_s,tau1_N,tau2_N,tau3_N")->required();
  replay->add_option("scenario", replay_src.path, "Scenario JSON (mpc.T_s_s, geometry, plant)");
  replay->add_option("--preset", replay_src.preset, "Bundled preset name");
  replay->add_option("--seed", seed, "Override plant.seed");
  replay->add_option("--out", out, "Output directory")->required();

  std::string preset_name;
  auto *show = app.add_subcommand("preset", "Print a bundled preset as scenario JSON");
  show->add_option("name", preset_name, "Preset name (omit to list)");
  show->add_option("--out", out, "Write to file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitValidation;
  }

  auto need_one = [](const ScenarioSource &s) {
    if (s.path.empty() == s.preset.empty()) {
      throw needle::InvalidInput("give exactly one of a scenario file or --preset");
    }
  };

  if (*run) {
    return guarded([&] {
      need_one(run_src);
      std::cout << run_one(resolve(run_src, seed), out);
    });
  }

  if (*batch) {
    std::vector<needle::Scenario> scenarios;
    const int status = guarded([&] {
      for (const auto &p : batch_paths) {
        scenarios.push_back(resolve({p, ""}, seed));
      }
      for (const auto &p : batch_presets) {
        scenarios.push_back(resolve({"", p}, seed));
      }
      if (scenarios.empty()) {
        throw needle::InvalidInput("batch needs at least one scenario");
      }
    });
    if (status != kExitOk) {
      return status;
    }
    std::vector<fs::path> dirs;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      fs::path dir = fs::path(out) / scenarios[i].name;
      if (std::find(dirs.begin(), dirs.end(), dir) != dirs.end()) {
        dir = fs::path(out) / (scenarios[i].name + "_" + std::to_string(i));
      }
      dirs.push_back(dir);
    }

    std::atomic<std::size_t> next{0};
    std::vector<int> codes(scenarios.size(), kExitOk);
    std::mutex log;
    auto worker = [&] {
      for (std::size_t i = next++; i < scenarios.size(); i = next++) {
        codes[i] = guarded([&] {
          const std::string report = run_one(scenarios[i], dirs[i]);
          std::lock_guard<std::mutex> lock(log);
          std::cout << report << std::flush;
        });
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < batch_threads(scenarios.size()); ++t) {
      pool.emplace_back(worker);
    }
    for (auto &th : pool) {
      th.join();
    }
    return *std::max_element(codes.begin(), codes.end());
  }

  if (*calibrate) {
    return guarded([&] {
      const auto runs = needle::load_calibration_runs(runs_dir);
      const auto result = needle::calibrate(runs);
      json doc;
      doc["gain_per_mm_N"] = result.gain;
      doc["fit_residual_per_mm"] = result.fit_residual;
      doc["runs"] = json::array();
      for (std::size_t i = 0; i < runs.size(); ++i) {
        doc["runs"].push_back({{"file", runs[i].source},
                               {"tendon_index", runs[i].tendon_index},
                               {"tension_N", runs[i].tension},
                               {"curvature_per_mm", result.curvatures[i]}});
      }
      const fs::path target(out);
      if (target.has_parent_path()) {
        fs::create_directories(target.parent_path());
      }
      write_text(target, doc.dump(2) + "\n");
      std::cout << "gain " << needle::format_number(result.gain) << " 1/(mm N), residual "
                << needle::format_number(result.fit_residual) << " 1/mm\n";
    });
  }

  if (*replay) {
    return guarded([&] {
      need_one(replay_src);
      const needle::Scenario scenario = resolve(replay_src, seed);
      const auto commands = needle::read_tendon_commands(commands_csv);
      const double dt = scenario.mpc.sample_time;
      const auto result = needle::run_open_loop(commands, dt, scenario.plant, scenario.geometry,
                                                scenario.run.initial_state);
      fs::create_directories(out);
      {
        std::ofstream csv(fs::path(out) / "replay.csv", std::ios::binary);
        needle::write_open_loop_csv(result, dt, csv);
      }
      json doc;
      doc["schema_version"] = needle::kScenarioSchemaVersion;
      doc["scenario"] = needle::scenario_to_json(scenario);
      doc["commands"] = fs::path(commands_csv).filename().string();
      doc["metrics"] = {
          {"final_error_mm", result.final_error},
          {"max_error_mm", result.max_error},
          {"inserted_length_mm", result.inserted_length},
          {"error_percent_of_inserted",
           result.error_percent ? json(*result.error_percent) : json(nullptr)},
          {"steps", commands.size()},
      };
      write_text(fs::path(out) / "replay_summary.json", doc.dump(2) + "\n");
      std::cout << "replay: final error " << needle::format_number(result.final_error)
                << " mm over " << needle::format_number(result.inserted_length) << " mm ("
                << (result.error_percent ? needle::format_number(*result.error_percent) : "n/a")
                << " %)\n";
    });
  }

  if (*show) {
    return guarded([&] {
      if (preset_name.empty()) {
        for (const auto &n : needle::preset_names()) {
          std::cout << n << '\n';
        }
        return;
      }
      const std::string text = needle::scenario_to_json(needle::preset(preset_name)).dump(2) + "\n";
      if (out.empty()) {
        std::cout << text;
      } else {
        write_text(out, text);
      }
    });
  }
  return kExitOk;
}
