#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string_view>

namespace needle::opt {

/// Objective value together with its gradient.
struct Evaluation {
  double value{0.0};
  Eigen::VectorXd gradient;
};

using Objective = std::function<Evaluation(const Eigen::VectorXd &)>;

/// Smooth objective over a box  lower <= x <= upper.
struct BoxNlp {
  Objective objective;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int max_iterations{500};
  /// Convergence when the projected-gradient inf-norm <= gradient_tolerance * (1 + |f|).
  double gradient_tolerance{1e-8};
  double step_tolerance{1e-14};
  /// Extra seeded uniform restarts inside the box (0 = deterministic single start).
  int multi_start{0};
  std::uint64_t seed{0};

  Eigen::Index dimension() const { return lower.size(); }
  void validate() const;
};

enum class Status { converged, max_iter, stalled };

std::string_view to_string(Status status);

struct Result {
  Eigen::VectorXd x;
  double value{0.0};
  Status status{Status::converged};
  int iterations{0};
  double projected_gradient{0.0};  ///< inf-norm of P(x - g) - x at x
};

Eigen::VectorXd project(const Eigen::VectorXd &x, const Eigen::VectorXd &lower,
                        const Eigen::VectorXd &upper);

double projected_gradient_norm(const Eigen::VectorXd &x, const Eigen::VectorXd &gradient,
                               const Eigen::VectorXd &lower, const Eigen::VectorXd &upper);

/// Projected limited-memory quasi-Newton with backtracking on the projection arc.
/// Throws NumericalFailure if the objective turns non-finite.
Result minimize(const BoxNlp &problem, const Eigen::VectorXd &x0);

/// Largest relative discrepancy between the analytic gradient and central
/// differences with step h_i = 1e-6 (1 + |x_i|):  ||g - g_fd|| / max(||g_fd||, 1).
double gradient_check(const Objective &objective, const Eigen::VectorXd &x);

} // namespace needle::opt
