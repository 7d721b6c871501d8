#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phaseopt/nlp.hpp"

namespace phaseopt {

enum class SolveStatus { Optimal, MaxIterations, Infeasible, NumericalFailure };

std::string_view to_string(SolveStatus status);

struct SolverOptions {
  /// Budget of inner (Newton) iterations summed over all outer iterations.
  int max_iterations = 3000;
  double constraint_tol = 1e-6;
  double stationarity_tol = 1e-4;
  std::optional<double> time_limit;
  /// 0 silent, 1 one line per outer iteration, 2 also inner iterations.
  int verbosity = 0;

  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  /// The penalty grows unless the infeasibility measure shrinks by this factor.
  double required_shrink = 0.25;
  double max_penalty = 1e12;
  int max_outer_iterations = 100;

  void validate() const;
};

/// One accepted step of the inner minimizer. `merit` is the augmented
/// Lagrangian for the multipliers and penalty of outer iteration `outer`.
struct IterationRecord {
  int outer = 0;
  int inner = 0;
  double merit = 0.0;
  double penalty = 0.0;
  double stationarity = 0.0;
};

struct Solution {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<double> z;
  double objective = 0.0;
  double max_violation = 0.0;
  /// Infinity norm of the projected Lagrangian gradient at z.
  double stationarity = 0.0;
  int iterations = 0;
  int outer_iterations = 0;
  double wall_time = 0.0;
  std::vector<double> multipliers;
  std::vector<IterationRecord> history;
  std::string message;
};

/// Minimizes the problem from `guess` (clamped into the variable bounds).
///
/// Powell-Hestenes-Rockafellar augmented Lagrangian over the two-sided rows,
/// with a projected Newton method for each bound-constrained subproblem. The
/// subproblem Hessian is the exact Gauss-Newton part of the penalty plus
/// forward differences of the exact row gradients for the curvature part.
/// Deterministic: identical inputs give identical iterates.
Solution solve(const NlpProblem& problem, std::span<const double> guess,
               const SolverOptions& options);

}  // namespace phaseopt
