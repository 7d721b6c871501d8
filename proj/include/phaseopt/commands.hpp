#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "phaseopt/solver.hpp"
#include "phaseopt/task.hpp"
#include "phaseopt/trajectory_io.hpp"
#include "phaseopt/transcribe.hpp"

namespace phaseopt {

enum class PlanMode { Joint, Baseline };

std::string_view to_string(PlanMode mode);

struct PlanSettings {
  PlanMode mode = PlanMode::Joint;
  TranscribeParams params;
  SolverOptions solver;
  /// When false every reported compute time is 0, making outputs byte-stable.
  bool timing = true;
};

struct PlanResult {
  PlanMode mode = PlanMode::Joint;
  Trajectory trajectory;
  SolveStatus status = SolveStatus::NumericalFailure;
  double objective = 0.0;
  /// Worst row or bound violation of the full task re-evaluated on `trajectory`.
  double max_violation = 0.0;
  int iterations = 0;
  double compute_s = 0.0;
};

/// Runs one planner on the task. Baseline failures propagate as BaselineError;
/// a joint solve that yields no usable trajectory throws ExtractionError.
PlanResult run_plan(const TaskSpec& task, const PlanSettings& settings);

/// Worst violation of the task's transcription at the decision vector packed
/// from `trajectory`. This is what summary.json reports as max_violation.
double trajectory_violation(const TaskSpec& task, const TranscribeParams& params,
                            const Trajectory& trajectory);

/// For each intermediate boundary i = 1..m-1: max_j |qdot_j| / velocity_limit_j
/// at node iN.
std::vector<double> boundary_speeds(const Trajectory& trajectory,
                                    const KinematicChain& chain);

RunSummary make_summary(const TaskSpec& task, const PlanSettings& settings,
                        const PlanResult& result);

/// Entry point of the command-line tool: `plan`, `compare` and `sweep`.
/// Returns 0 on success, 1 when a solve is not Optimal and 2 on unreadable
/// input, malformed files or bad flags.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace phaseopt
