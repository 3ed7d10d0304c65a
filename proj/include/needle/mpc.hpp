#pragma once

#include "needle/kinematics.hpp"
#include "needle/optimizer.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace needle {

struct InputBounds {
  double lower{0.0};
  double upper{0.0};
};

struct SolverSettings {
  int max_iterations{500};
  double gradient_tolerance{1e-8};
  double step_tolerance{1e-14};
  int multi_start{0};
  std::uint64_t seed{0};
};

struct MpcConfig {
  double sample_time{0.05};  ///< [s]
  int horizon{5};
  Eigen::Vector3d position_weight{100.0, 100.0, 200.0};  ///< diag(Q)
  Eigen::Vector3d input_weight{1.0, 1.0, 1.0};           ///< diag(R), order (speed, rate_x, rate_y)
  InputBounds speed{-1.0, 24.0};   ///< [mm/s]
  InputBounds rate_x{-5.0, 5.0};   ///< [rad/s]
  InputBounds rate_y{-5.0, 5.0};   ///< [rad/s]
  bool planar_mode{false};         ///< pins rate_y to zero
  SolverSettings solver;

  void validate() const;

  /// Bounds after planar mode is applied.
  InputBounds effective_rate_y() const;

  /// Stacked box for the 3N decision vector (speed, rate_x, rate_y per step).
  Eigen::VectorXd lower_bounds() const;
  Eigen::VectorXd upper_bounds() const;
};

struct HorizonCost {
  double value{0.0};
  Eigen::VectorXd gradient;  ///< d value / d (speed_0, rate_x_0, rate_y_0, speed_1, ...)
};

struct HorizonSolution {
  std::vector<VirtualInput> inputs;          ///< N inputs
  std::vector<NeedleState> predicted_states; ///< N + 1 states from the Euler model
  double cost{0.0};
  opt::Status solver_status{opt::Status::converged};
  int iterations{0};
  double projected_gradient{0.0};
  bool fault{false};  ///< optimizer failed; inputs are zero
};

Eigen::VectorXd stack_inputs(std::span<const VirtualInput> inputs);
std::vector<VirtualInput> unstack_inputs(const Eigen::VectorXd &x);

/// Quadratic tracking cost over the Euler-predicted horizon and its exact gradient.
/// `refs` holds N + 1 reference positions for steps 0..N.
HorizonCost horizon_cost(const NeedleState &s0, std::span<const VirtualInput> inputs,
                         std::span<const Vec3> refs, const MpcConfig &cfg);

HorizonSolution solve_horizon(const NeedleState &s0, std::span<const Vec3> refs,
                              const MpcConfig &cfg, const HorizonSolution *warm_start = nullptr);

struct RecedingStep {
  VirtualInput applied;
  HorizonSolution solution;
};

RecedingStep receding_step(const NeedleState &measured, std::span<const Vec3> refs,
                           const MpcConfig &cfg, const HorizonSolution *warm_start = nullptr);

/// Receding-horizon loop state: the previous solution kept for warm starting.
class Controller {
public:
  explicit Controller(MpcConfig cfg);

  RecedingStep step(const NeedleState &measured, std::span<const Vec3> refs);
  void reset() { previous_.reset(); }

  const MpcConfig &config() const { return cfg_; }
  const std::optional<HorizonSolution> &previous() const { return previous_; }

private:
  MpcConfig cfg_;
  std::optional<HorizonSolution> previous_;
};

} // namespace needle
