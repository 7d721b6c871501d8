#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "phaseopt/solver.hpp"
#include "phaseopt/task.hpp"
#include "phaseopt/transcribe.hpp"

namespace phaseopt {

/// Raised when a phase of the sequential planner cannot be solved.
class BaselineError : public std::runtime_error {
 public:
  BaselineError(const std::string& phase, SolveStatus status)
      : std::runtime_error("phase '" + phase + "' failed: " +
                           std::string(to_string(status))),
        phase_(phase),
        status_(status) {}

  const std::string& phase() const { return phase_; }
  SolveStatus status() const { return status_; }

 private:
  std::string phase_;
  SolveStatus status_;
};

struct BaselineResult {
  Trajectory trajectory;
  std::vector<Solution> phase_solutions;
  /// Optimal iff every phase was solved to optimality.
  SolveStatus status = SolveStatus::Optimal;
  double objective = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  double wall_time = 0.0;
};

/// Single-phase task for phase `index` of `task`, starting at rest at `q_start`
/// and required to come to rest at its end.
TaskSpec stop_at_end_subtask(const TaskSpec& task, std::size_t index,
                             const std::vector<double>& q_start);

/// Plans the phases one after another, each ignoring the ones that follow.
/// Throws BaselineError naming the phase when a sub-problem is Infeasible or
/// fails numerically.
BaselineResult solve_sequential(const TaskSpec& task, const TranscribeParams& params,
                                const SolverOptions& options);

}  // namespace phaseopt
