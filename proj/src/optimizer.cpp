#include "needle/optimizer.hpp"

#include "needle/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

namespace needle::opt {

namespace {

constexpr int kMemory = 8;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
};

Evaluation evaluate(const BoxNlp &problem, const Eigen::VectorXd &x, int iteration) {
  Evaluation ev = problem.objective(x);
  if (!std::isfinite(ev.value) || ev.gradient.size() != x.size() || !ev.gradient.allFinite()) {
    std::ostringstream msg;
    msg << "objective not finite at iteration " << iteration << ", x = ["
        << x.transpose().format(Eigen::IOFormat(Eigen::FullPrecision, 0, ", ")) << "]";
    throw NumericalFailure(msg.str());
  }
  return ev;
}

// Variables held at a bound by the gradient are excluded from the search direction.
Eigen::VectorXd free_mask(const Eigen::VectorXd &x, const Eigen::VectorXd &g,
                          const Eigen::VectorXd &lower, const Eigen::VectorXd &upper) {
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool pinned_low = x[i] <= lower[i] && g[i] > 0.0;
    const bool pinned_high = x[i] >= upper[i] && g[i] < 0.0;
    if (lower[i] == upper[i] || pinned_low || pinned_high) {
      mask[i] = 0.0;
    }
  }
  return mask;
}

// L-BFGS two-loop recursion on the free subspace.
Eigen::VectorXd quasi_newton_direction(const Eigen::VectorXd &g, const Eigen::VectorXd &mask,
                                       const std::deque<CurvaturePair> &memory) {
  Eigen::VectorXd q = -g.cwiseProduct(mask);
  std::vector<double> alpha(memory.size());
  std::vector<double> rho(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    const Eigen::VectorXd s = memory[k].s.cwiseProduct(mask);
    const Eigen::VectorXd y = memory[k].y.cwiseProduct(mask);
    const double sy = s.dot(y);
    rho[k] = sy > 0.0 ? 1.0 / sy : 0.0;
    alpha[k] = rho[k] * s.dot(q);
    q -= alpha[k] * y;
  }
  if (!memory.empty()) {
    const Eigen::VectorXd s = memory.back().s.cwiseProduct(mask);
    const Eigen::VectorXd y = memory.back().y.cwiseProduct(mask);
    const double yy = y.squaredNorm();
    if (yy > 0.0 && s.dot(y) > 0.0) {
      q *= s.dot(y) / yy;
    }
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const Eigen::VectorXd s = memory[k].s.cwiseProduct(mask);
    const Eigen::VectorXd y = memory[k].y.cwiseProduct(mask);
    const double beta = rho[k] * y.dot(q);
    q += (alpha[k] - beta) * s;
  }
  return q.cwiseProduct(mask);
}

Result solve_from(const BoxNlp &problem, const Eigen::VectorXd &start) {
  Result r;
  r.x = project(start, problem.lower, problem.upper);
  Evaluation ev = evaluate(problem, r.x, 0);
  std::deque<CurvaturePair> memory;

  for (r.iterations = 0; r.iterations < problem.max_iterations; ++r.iterations) {
    r.projected_gradient =
        projected_gradient_norm(r.x, ev.gradient, problem.lower, problem.upper);
    if (r.projected_gradient <= problem.gradient_tolerance * (1.0 + std::abs(ev.value))) {
      r.value = ev.value;
      r.status = Status::converged;
      return r;
    }

    const Eigen::VectorXd mask = free_mask(r.x, ev.gradient, problem.lower, problem.upper);
    bool accepted = false;
    Eigen::VectorXd trial;
    Evaluation trial_ev;

    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Eigen::VectorXd dir = quasi_newton_direction(ev.gradient, mask, memory);
      if (!(ev.gradient.dot(dir) < 0.0)) {
        memory.clear();
        dir = -ev.gradient.cwiseProduct(mask);
      }
      const double dir_norm = dir.lpNorm<Eigen::Infinity>();
      if (dir_norm == 0.0) {
        break;
      }
      double step = memory.empty() ? std::min(1.0, 1.0 / dir_norm) : 1.0;

      for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
        trial = project(r.x + step * dir, problem.lower, problem.upper);
        const Eigen::VectorXd delta = trial - r.x;
        if (delta.lpNorm<Eigen::Infinity>() == 0.0) {
          break;
        }
        const double slope = ev.gradient.dot(delta);
        if (!(slope < 0.0)) {
          continue;
        }
        trial_ev = evaluate(problem, trial, r.iterations);
        if (trial_ev.value <= ev.value + kArmijo * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (memory.empty()) {
          break;
        }
        memory.clear();
      }
    }

    if (!accepted) {
      r.value = ev.value;
      r.status = Status::stalled;
      return r;
    }

    CurvaturePair pair{trial - r.x, trial_ev.gradient - ev.gradient};
    const double step_size = pair.s.lpNorm<Eigen::Infinity>();
    if (pair.s.dot(pair.y) > 1e-12 * pair.s.norm() * pair.y.norm()) {
      memory.push_back(std::move(pair));
      if (memory.size() > kMemory) {
        memory.pop_front();
      }
    }
    r.x = trial;
    ev = std::move(trial_ev);

    if (step_size <= problem.step_tolerance * (1.0 + r.x.lpNorm<Eigen::Infinity>())) {
      r.projected_gradient =
          projected_gradient_norm(r.x, ev.gradient, problem.lower, problem.upper);
      r.value = ev.value;
      r.status = r.projected_gradient <= problem.gradient_tolerance * (1.0 + std::abs(ev.value))
                     ? Status::converged
                     : Status::stalled;
      return r;
    }
  }

  r.projected_gradient = projected_gradient_norm(r.x, ev.gradient, problem.lower, problem.upper);
  r.value = ev.value;
  r.status = r.projected_gradient <= problem.gradient_tolerance * (1.0 + std::abs(ev.value))
                 ? Status::converged
                 : Status::max_iter;
  return r;
}

} // namespace

void BoxNlp::validate() const {
  if (!objective) {
    throw InvalidConfig("optimizer objective is empty");
  }
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw InvalidConfig("optimizer bounds must be nonempty and of equal dimension");
  }
  if ((lower.array() > upper.array()).any()) {
    throw InvalidConfig("optimizer lower bound exceeds upper bound");
  }
  if (!(gradient_tolerance > 0.0) || !(step_tolerance > 0.0)) {
    throw InvalidConfig("optimizer tolerances must be positive");
  }
  if (max_iterations < 0 || multi_start < 0) {
    throw InvalidConfig("optimizer iteration and restart counts must be nonnegative");
  }
}

std::string_view to_string(Status status) {
  switch (status) {
  case Status::converged:
    return "converged";
  case Status::max_iter:
    return "max_iter";
  case Status::stalled:
    return "stalled";
  }
  return "unknown";
}

Eigen::VectorXd project(const Eigen::VectorXd &x, const Eigen::VectorXd &lower,
                        const Eigen::VectorXd &upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

double projected_gradient_norm(const Eigen::VectorXd &x, const Eigen::VectorXd &gradient,
                               const Eigen::VectorXd &lower, const Eigen::VectorXd &upper) {
  return (project(x - gradient, lower, upper) - x).lpNorm<Eigen::Infinity>();
}

Result minimize(const BoxNlp &problem, const Eigen::VectorXd &x0) {
  problem.validate();
  if (x0.size() != problem.dimension()) {
    throw InvalidInput("initial point dimension does not match the problem");
  }

  Result best = solve_from(problem, x0);
  if (problem.multi_start > 0) {
    std::mt19937_64 rng(problem.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < problem.multi_start; ++k) {
      Eigen::VectorXd start(problem.dimension());
      for (Eigen::Index i = 0; i < start.size(); ++i) {
        start[i] = problem.lower[i] + unit(rng) * (problem.upper[i] - problem.lower[i]);
      }
      Result candidate = solve_from(problem, start);
      if (candidate.value < best.value) {
        best = std::move(candidate);
      }
    }
  }
  return best;
}

double gradient_check(const Objective &objective, const Eigen::VectorXd &x) {
  const Evaluation ev = objective(x);
  Eigen::VectorXd fd(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x[i]));
    Eigen::VectorXd plus = x;
    Eigen::VectorXd minus = x;
    plus[i] += h;
    minus[i] -= h;
    fd[i] = (objective(plus).value - objective(minus).value) / (2.0 * h);
  }
  return (ev.gradient - fd).norm() / std::max(fd.norm(), 1.0);
}

} // namespace needle::opt
