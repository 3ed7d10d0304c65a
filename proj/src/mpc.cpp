#include "needle/mpc.hpp"

#include "needle/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace needle {

namespace {

Vec3 apply_g(const Vec3 &d) { return {0.0, d.z(), -d.y()}; }
Vec3 apply_h(const Vec3 &d) { return {-d.z(), 0.0, d.x()}; }
Vec3 apply_g_transpose(const Vec3 &v) { return {0.0, -v.z(), v.y()}; }
Vec3 apply_h_transpose(const Vec3 &v) { return {v.z(), 0.0, -v.x()}; }

void check_bounds(const InputBounds &b, const char *name) {
  if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || b.lower > b.upper) {
    throw InvalidConfig(std::string("invalid bounds for ") + name);
  }
}

HorizonCost cost_of_stacked(const NeedleState &s0, const Eigen::VectorXd &x,
                            std::span<const Vec3> refs, const MpcConfig &cfg) {
  const int n = cfg.horizon;
  const double dt = cfg.sample_time;
  const Eigen::Vector3d &q = cfg.position_weight;
  const Eigen::Vector3d &r = cfg.input_weight;

  std::vector<Vec3> p(n + 1);
  std::vector<Vec3> d(n + 1);
  std::vector<double> raw_norm(n + 1, 1.0);
  p[0] = s0.position;
  d[0] = s0.direction;
  for (int i = 0; i < n; ++i) {
    const double us = x[3 * i];
    const double ux = x[3 * i + 1];
    const double uy = x[3 * i + 2];
    p[i + 1] = p[i] + dt * us * d[i];
    const Vec3 raw = d[i] + dt * (ux * apply_g(d[i]) + uy * apply_h(d[i]));
    raw_norm[i + 1] = raw.norm();
    d[i + 1] = raw / raw_norm[i + 1];
  }

  HorizonCost out;
  out.gradient.setZero(3 * n);
  std::vector<Vec3> err(n + 1);
  for (int i = 0; i <= n; ++i) {
    err[i] = p[i] - refs[i];
    out.value += err[i].dot(q.cwiseProduct(err[i]));
  }
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d u = x.segment<3>(3 * i);
    out.value += u.dot(r.cwiseProduct(u));
  }

  // Reverse sweep through the rollout, renormalization included.
  Vec3 adj_p = 2.0 * q.cwiseProduct(err[n]);
  Vec3 adj_d = Vec3::Zero();
  for (int i = n - 1; i >= 0; --i) {
    const double us = x[3 * i];
    const double ux = x[3 * i + 1];
    const double uy = x[3 * i + 2];
    const Vec3 &next = d[i + 1];
    const Vec3 adj_raw = (adj_d - next * next.dot(adj_d)) / raw_norm[i + 1];

    out.gradient[3 * i] = dt * d[i].dot(adj_p) + 2.0 * r[0] * us;
    out.gradient[3 * i + 1] = dt * apply_g(d[i]).dot(adj_raw) + 2.0 * r[1] * ux;
    out.gradient[3 * i + 2] = dt * apply_h(d[i]).dot(adj_raw) + 2.0 * r[2] * uy;

    adj_d = dt * us * adj_p + adj_raw +
            dt * (ux * apply_g_transpose(adj_raw) + uy * apply_h_transpose(adj_raw));
    adj_p = adj_p + 2.0 * q.cwiseProduct(err[i]);
  }
  return out;
}

void check_horizon_args(const NeedleState &s0, std::span<const Vec3> refs, const MpcConfig &cfg) {
  if (refs.size() != static_cast<std::size_t>(cfg.horizon) + 1) {
    throw InvalidInput("expected " + std::to_string(cfg.horizon + 1) +
                       " reference positions, got " + std::to_string(refs.size()));
  }
  if (!s0.position.allFinite() || !s0.direction.allFinite()) {
    throw InvalidInput("initial state is not finite");
  }
  for (const auto &ref : refs) {
    if (!ref.allFinite()) {
      throw InvalidInput("reference position is not finite");
    }
  }
}

} // namespace

void MpcConfig::validate() const {
  if (!(sample_time > 0.0) || !std::isfinite(sample_time)) {
    throw InvalidConfig("mpc.T_s_s must be positive");
  }
  if (horizon < 1) {
    throw InvalidConfig("mpc.horizon must be at least 1");
  }
  if ((position_weight.array() < 0.0).any() || (input_weight.array() < 0.0).any() ||
      !position_weight.allFinite() || !input_weight.allFinite()) {
    throw InvalidConfig("mpc.Q_diag and mpc.R_diag must be finite and nonnegative");
  }
  check_bounds(speed, "mpc.us_bounds_mm_s");
  check_bounds(rate_x, "mpc.ux_bounds_rad_s");
  check_bounds(rate_y, "mpc.uy_bounds_rad_s");
  if (solver.max_iterations < 1 || !(solver.gradient_tolerance > 0.0) ||
      !(solver.step_tolerance > 0.0) || solver.multi_start < 0) {
    throw InvalidConfig("mpc.solver settings are invalid");
  }
}

InputBounds MpcConfig::effective_rate_y() const {
  return planar_mode ? InputBounds{0.0, 0.0} : rate_y;
}

Eigen::VectorXd MpcConfig::lower_bounds() const {
  Eigen::VectorXd lo(3 * horizon);
  for (int i = 0; i < horizon; ++i) {
    lo.segment<3>(3 * i) << speed.lower, rate_x.lower, effective_rate_y().lower;
  }
  return lo;
}

Eigen::VectorXd MpcConfig::upper_bounds() const {
  Eigen::VectorXd hi(3 * horizon);
  for (int i = 0; i < horizon; ++i) {
    hi.segment<3>(3 * i) << speed.upper, rate_x.upper, effective_rate_y().upper;
  }
  return hi;
}

Eigen::VectorXd stack_inputs(std::span<const VirtualInput> inputs) {
  Eigen::VectorXd x(3 * static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    x.segment<3>(3 * static_cast<Eigen::Index>(i)) = inputs[i].as_vector();
  }
  return x;
}

std::vector<VirtualInput> unstack_inputs(const Eigen::VectorXd &x) {
  std::vector<VirtualInput> inputs(static_cast<std::size_t>(x.size() / 3));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto k = 3 * static_cast<Eigen::Index>(i);
    inputs[i] = {x[k], x[k + 1], x[k + 2]};
  }
  return inputs;
}

HorizonCost horizon_cost(const NeedleState &s0, std::span<const VirtualInput> inputs,
                         std::span<const Vec3> refs, const MpcConfig &cfg) {
  cfg.validate();
  if (inputs.size() != static_cast<std::size_t>(cfg.horizon)) {
    throw InvalidInput("expected " + std::to_string(cfg.horizon) + " inputs, got " +
                       std::to_string(inputs.size()));
  }
  check_horizon_args(s0, refs, cfg);
  for (const auto &u : inputs) {
    if (!u.finite()) {
      throw InvalidInput("horizon input is not finite");
    }
  }
  return cost_of_stacked(s0, stack_inputs(inputs), refs, cfg);
}

HorizonSolution solve_horizon(const NeedleState &s0, std::span<const Vec3> refs,
                              const MpcConfig &cfg, const HorizonSolution *warm_start) {
  cfg.validate();
  check_horizon_args(s0, refs, cfg);
  const int n = cfg.horizon;

  opt::BoxNlp problem;
  problem.lower = cfg.lower_bounds();
  problem.upper = cfg.upper_bounds();
  problem.max_iterations = cfg.solver.max_iterations;
  problem.gradient_tolerance = cfg.solver.gradient_tolerance;
  problem.step_tolerance = cfg.solver.step_tolerance;
  problem.multi_start = cfg.solver.multi_start;
  problem.seed = cfg.solver.seed;
  problem.objective = [&](const Eigen::VectorXd &x) {
    HorizonCost c = cost_of_stacked(s0, x, refs, cfg);
    return opt::Evaluation{c.value, std::move(c.gradient)};
  };

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3 * n);
  if (warm_start != nullptr && !warm_start->fault &&
      warm_start->inputs.size() == static_cast<std::size_t>(n)) {
    for (int i = 0; i < n; ++i) {
      const int src = std::min(i + 1, n - 1);
      x0.segment<3>(3 * i) = warm_start->inputs[src].as_vector();
    }
  }

  HorizonSolution sol;
  try {
    const opt::Result res = opt::minimize(problem, x0);
    sol.inputs = unstack_inputs(res.x);
    sol.cost = res.value;
    sol.solver_status = res.status;
    sol.iterations = res.iterations;
    sol.projected_gradient = res.projected_gradient;
  } catch (const NumericalFailure &) {
    sol.inputs.assign(n, VirtualInput{});
    sol.cost = cost_of_stacked(s0, Eigen::VectorXd::Zero(3 * n), refs, cfg).value;
    sol.solver_status = opt::Status::stalled;
    sol.fault = true;
  }
  sol.predicted_states = rollout(s0, sol.inputs, cfg.sample_time, Integrator::euler);
  return sol;
}

RecedingStep receding_step(const NeedleState &measured, std::span<const Vec3> refs,
                           const MpcConfig &cfg, const HorizonSolution *warm_start) {
  RecedingStep out;
  out.solution = solve_horizon(measured, refs, cfg, warm_start);
  out.applied = out.solution.inputs.front();
  return out;
}

Controller::Controller(MpcConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

RecedingStep Controller::step(const NeedleState &measured, std::span<const Vec3> refs) {
  RecedingStep out =
      receding_step(measured, refs, cfg_, previous_ ? &*previous_ : nullptr);
  previous_ = out.solution;
  return out;
}

} // namespace needle
