#include "phaseopt/baseline.hpp"

#include <algorithm>
#include <chrono>

namespace phaseopt {

TaskSpec stop_at_end_subtask(const TaskSpec& task, std::size_t index,
                             const std::vector<double>& q_start) {
  TaskSpec sub;
  sub.chain = task.chain;
  sub.q_init = q_start;
  PhaseSpec phase = task.phases.at(index);
  const bool already_stops =
      std::any_of(phase.terminal.begin(), phase.terminal.end(), [](const auto& c) {
        const auto* v = std::get_if<VelocityZero>(&c);
        return v != nullptr && v->tol == 0.0;
      });
  if (!already_stops) phase.terminal.push_back(VelocityZero{0.0});
  sub.phases.push_back(std::move(phase));
  return sub;
}

BaselineResult solve_sequential(const TaskSpec& task, const TranscribeParams& params,
                                const SolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  validate_task(task);
  const std::size_t n = task.joint_count();
  const std::size_t m = task.phase_count();
  const std::size_t N = static_cast<std::size_t>(params.steps);

  BaselineResult result;
  Trajectory& traj = result.trajectory;
  traj.joints = n;
  traj.steps = N;
  traj.times.assign(m * N + 1, 0.0);
  traj.states = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m * N + 1),
                                      static_cast<Eigen::Index>(2 * n));
  traj.controls = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m * N),
                                        static_cast<Eigen::Index>(n));

  std::vector<double> q_start = task.q_init;
  double offset = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const TaskSpec sub = stop_at_end_subtask(task, i, q_start);
    const auto problem = transcribe(sub, params);
    const auto guess = default_initial_guess(sub, params, problem.layout);
    Solution sol = solve(problem.nlp, guess, options);
    if (sol.status == SolveStatus::Infeasible ||
        sol.status == SolveStatus::NumericalFailure) {
      throw BaselineError(task.phases[i].name, sol.status);
    }
    if (sol.status != SolveStatus::Optimal) result.status = sol.status;
    const Trajectory part = extract_trajectory(problem, sol.z);

    // Node 0 of each part is the chained start state (previous end position,
    // zero velocity) and overwrites the previous part's final node.
    for (std::size_t s = 0; s <= N; ++s) {
      const auto row = static_cast<Eigen::Index>(i * N + s);
      traj.times[i * N + s] = offset + part.times[s];
      traj.states.row(row) = part.states.row(static_cast<Eigen::Index>(s));
    }
    for (std::size_t s = 0; s < N; ++s) {
      traj.controls.row(static_cast<Eigen::Index>(i * N + s)) =
          part.controls.row(static_cast<Eigen::Index>(s));
    }
    offset += part.duration;
    traj.times[(i + 1) * N] = offset;
    traj.phase_end_times.push_back(offset);

    q_start.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      q_start[j] = part.states(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(j));
    }
    result.objective += sol.objective;
    result.max_violation = std::max(result.max_violation, sol.max_violation);
    result.iterations += sol.iterations;
    result.phase_solutions.push_back(std::move(sol));
  }
  traj.duration = offset;
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace phaseopt
