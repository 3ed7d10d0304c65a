#pragma once

#include "needle/kinematics.hpp"
#include "needle/mapping.hpp"
#include "needle/mpc.hpp"
#include "needle/references.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace needle {

/// Simulated needle/tissue: integrator plus deviations from the controller's nominal model.
struct PlantConfig {
  Integrator integrator{Integrator::exact};
  double gain_error{0.0};     ///< true gain = nominal * (1 + gain_error)
  double theta_e_error{0.0};  ///< [rad], added to the nominal tendon angle
  Eigen::Vector3d measurement_noise_std{Eigen::Vector3d::Zero()};  ///< [mm]
  int latency_steps{0};
  std::uint64_t seed{0};

  void validate() const;
  TendonGeometry true_geometry(const TendonGeometry &nominal) const;
  bool noisy() const { return (measurement_noise_std.array() > 0.0).any(); }
};

struct RunSettings {
  int steps{210};
  bool early_stop{false};          ///< fixed targets only
  double stop_tolerance{0.2};      ///< [mm]
  double speed_tolerance{0.1};     ///< [mm/s]
  double terminal_window{1.0};     ///< [s] excluded from max tracking error
  int fault_budget{10};
  NeedleState initial_state;

  void validate() const;
};

struct Scenario {
  std::string name{"scenario"};
  MpcConfig mpc;
  TendonGeometry geometry;
  PlantConfig plant;
  ref::ReferenceSpec reference{ref::FixedTarget{}};
  RunSettings run;

  void validate() const;
};

/// One control step; time and state refer to the end of the step.
struct StepRecord {
  double t{0.0};
  double dt{0.0};
  NeedleState state;     ///< true plant state
  NeedleState measured;  ///< controller input at the start of the step
  Vec3 reference{Vec3::Zero()};
  VirtualInput applied;
  TendonCommand command;
  bool saturated{false};
  bool fault{false};
  double cost{0.0};
  opt::Status solver_status{opt::Status::converged};
  double projected_gradient{0.0};  ///< solver optimality residual at the returned inputs
  double solve_seconds{0.0};
  double error{0.0};  ///< |state.position - reference| [mm]
};

struct Summary {
  double final_error{0.0};           ///< [mm]
  double max_error{0.0};             ///< [mm], terminal window excluded
  double terminal_max_error{0.0};    ///< [mm], inside the terminal window
  double inserted_length{0.0};       ///< sum |speed| dt [mm]
  std::optional<double> error_percent;  ///< 100 final_error / inserted_length
  int steps{0};
  int faults{0};
  int saturated_steps{0};
};

struct ScenarioResult {
  std::vector<StepRecord> records;
  Summary summary;
  std::vector<std::string> warnings;
};

Summary compute_metrics(std::span<const StepRecord> records, double terminal_window);

ScenarioResult run_closed_loop(const Scenario &scenario);

struct OpenLoopResult {
  std::vector<NeedleState> model;
  std::vector<NeedleState> plant;
  std::vector<double> error;   ///< per state, [mm]
  std::vector<double> inserted;  ///< cumulative inserted length per state, [mm]
  double final_error{0.0};
  double max_error{0.0};
  double inserted_length{0.0};
  std::optional<double> error_percent;
};

/// Rolls the nominal model and the perturbed plant under the same tendon commands.
OpenLoopResult run_open_loop(std::span<const TendonCommand> commands, double sample_time,
                             const PlantConfig &plant, const TendonGeometry &model_geometry,
                             const NeedleState &initial_state = {});

/// Recorded tendon commands: CSV with header us_mm_s,tau1_N,tau2_N,tau3_N.
std::vector<TendonCommand> read_tendon_commands(const std::string &path);

inline constexpr const char *kStepCsvHeader =
    "t_s,x_mm,y_mm,z_mm,dx,dy,dz,ref_x_mm,ref_y_mm,ref_z_mm,us_mm_s,ux_rad_s,uy_rad_s,"
    "tau1_N,tau2_N,tau3_N,sat_flag,cost,err_mm";

void write_step_csv(const ScenarioResult &result, std::ostream &out);

/// Per-step model-vs-plant CSV: t_s, model xyz, plant xyz, inserted_mm, err_mm.
void write_open_loop_csv(const OpenLoopResult &result, double sample_time, std::ostream &out);

} // namespace needle
