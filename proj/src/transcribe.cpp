#include "phaseopt/transcribe.hpp"

#include <fmt/format.h>

namespace phaseopt {

void TranscribeParams::validate() const {
  if (steps < 2) throw std::invalid_argument("steps per phase must be >= 2");
  if (!(min_phase_duration > 0.0)) {
    throw std::invalid_argument("minimum phase duration must be positive");
  }
  if (!(w_vel >= 0.0) || !(w_acc >= 0.0)) {
    throw std::invalid_argument("regularization weights must be nonnegative");
  }
  if (!(phase_time_guess >= min_phase_duration)) {
    throw std::invalid_argument(
        "phase time guess must be at least the minimum phase duration");
  }
}

DecisionLayout::DecisionLayout(std::size_t joints, std::size_t phases,
                               std::size_t steps)
    : n_(joints), m_(phases), steps_(steps) {
  if (n_ == 0 || m_ == 0 || steps_ == 0) {
    throw std::invalid_argument("layout sizes must be positive");
  }
}

TranscribedProblem transcribe(const TaskSpec& task, const TranscribeParams& params) {
  params.validate();
  validate_task(task);

  const std::size_t n = task.joint_count();
  const std::size_t m = task.phase_count();
  const std::size_t N = static_cast<std::size_t>(params.steps);
  TranscribedProblem out;
  out.layout = DecisionLayout(n, m, N);
  out.params = params;
  const DecisionLayout& layout = out.layout;
  NlpProblem& nlp = out.nlp;
  ExpressionGraph& graph = nlp.graph;

  const std::size_t dim = layout.dimension();
  std::vector<ExprRef> z(dim);
  for (auto& v : z) v = graph.new_variable();
  auto expr = [&](std::size_t index) { return Expr(&graph, z[index]); };

  // Step length of each phase, h_i = (T_i - T_{i-1}) / N with T_0 = 0.
  std::vector<Expr> step_length(m + 1);
  std::vector<Expr> duration(m + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    duration[i] = i == 1 ? expr(layout.phase_time(1))
                         : expr(layout.phase_time(i)) - expr(layout.phase_time(i - 1));
    step_length[i] = duration[i] * (1.0 / static_cast<double>(N));
  }

  auto slice = [&](std::size_t start, std::size_t count) {
    return std::vector<ExprRef>(z.begin() + static_cast<std::ptrdiff_t>(start),
                                z.begin() + static_cast<std::ptrdiff_t>(start + count));
  };
  auto add_rows = [&](const std::vector<ConstraintRow>& rows, RowKind kind,
                      std::size_t node, std::size_t phase) {
    for (const auto& r : rows) {
      nlp.rows.push_back(r);
      out.tags.push_back({kind, node, phase});
    }
  };

  std::vector<Expr> objective_terms;
  objective_terms.push_back(expr(layout.phase_time(m)));

  for (std::size_t k = 0; k < layout.control_count(); ++k) {
    const std::size_t i = layout.phase_of(k);
    std::vector<Expr> x, u;
    for (std::size_t c = 0; c < 2 * n; ++c) x.push_back(expr(layout.state(k) + c));
    for (std::size_t j = 0; j < n; ++j) u.push_back(expr(layout.control(k, j)));
    const auto next = rk4_step<Expr, Expr>(x, u, step_length[i]);
    for (std::size_t c = 0; c < 2 * n; ++c) {
      const Expr defect = expr(layout.state(k + 1) + c) - next[c];
      add_rows({{defect.ref(), 0.0, 0.0}}, RowKind::Defect, k, i);
    }

    const auto q = slice(layout.state(k), n);
    const auto qdot = slice(layout.state(k) + n, n);
    for (const auto& spec : task.phases[i - 1].path) {
      add_rows(lower_constraint(spec, graph, task.chain, q, qdot), RowKind::Path, k, i);
    }

    if (params.w_vel > 0.0 || params.w_acc > 0.0) {
      std::vector<Expr> squares;
      for (std::size_t j = 0; j < n; ++j) {
        if (params.w_vel > 0.0) {
          squares.push_back(square(expr(layout.velocity(k, j))) * params.w_vel);
        }
        if (params.w_acc > 0.0) {
          squares.push_back(square(expr(layout.control(k, j))) * params.w_acc);
        }
      }
      objective_terms.push_back(step_length[i] * sum(graph, squares));
    }
  }

  for (std::size_t i = 1; i <= m; ++i) {
    const std::size_t node = layout.phase_end_node(i);
    const auto q = slice(layout.state(node), n);
    const auto qdot = slice(layout.state(node) + n, n);
    for (const auto& spec : task.phases[i - 1].terminal) {
      add_rows(lower_constraint(spec, graph, task.chain, q, qdot), RowKind::Terminal,
               node, i);
    }
    add_rows({{duration[i].ref(), params.min_phase_duration, kInfinity}},
             RowKind::Ordering, node, i);
  }

  for (const auto& t : objective_terms) nlp.objective_terms.push_back(t.ref());
  nlp.objective = sum(graph, objective_terms).ref();

  nlp.lower.assign(dim, -kInfinity);
  nlp.upper.assign(dim, kInfinity);
  for (std::size_t k = 0; k < layout.node_count(); ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& joint = task.chain.joint(j);
      nlp.lower[layout.position(k, j)] = joint.lower;
      nlp.upper[layout.position(k, j)] = joint.upper;
      nlp.lower[layout.velocity(k, j)] = -joint.velocity_limit;
      nlp.upper[layout.velocity(k, j)] = joint.velocity_limit;
    }
  }
  for (std::size_t k = 0; k < layout.control_count(); ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = task.chain.joint(j).acceleration_limit;
      nlp.lower[layout.control(k, j)] = -a;
      nlp.upper[layout.control(k, j)] = a;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    nlp.lower[layout.position(0, j)] = nlp.upper[layout.position(0, j)] = task.q_init[j];
    nlp.lower[layout.velocity(0, j)] = nlp.upper[layout.velocity(0, j)] = 0.0;
  }
  // Implied by the ordering rows; keeps every iterate's step length positive.
  for (std::size_t i = 1; i <= m; ++i) {
    nlp.lower[layout.phase_time(i)] = static_cast<double>(i) * params.min_phase_duration;
  }
  return out;
}

std::vector<double> default_initial_guess(const TaskSpec& task,
                                          const TranscribeParams& params,
                                          const DecisionLayout& layout) {
  if (layout.joints() != task.joint_count() || layout.phases() != task.phase_count()) {
    throw std::invalid_argument("layout does not match the task");
  }
  std::vector<double> z(layout.dimension(), 0.0);
  for (std::size_t k = 0; k < layout.node_count(); ++k) {
    for (std::size_t j = 0; j < layout.joints(); ++j) {
      z[layout.position(k, j)] = task.q_init[j];
    }
  }
  for (std::size_t i = 1; i <= layout.phases(); ++i) {
    z[layout.phase_time(i)] = static_cast<double>(i) * params.phase_time_guess;
  }
  return z;
}

Trajectory extract_trajectory(const DecisionLayout& layout, std::span<const double> z) {
  if (z.size() != layout.dimension()) {
    throw ExtractionError(fmt::format("decision vector has {} entries, expected {}",
                                      z.size(), layout.dimension()));
  }
  const std::size_t n = layout.joints();
  const std::size_t N = layout.steps();
  Trajectory traj;
  traj.joints = n;
  traj.steps = N;
  double previous = 0.0;
  for (std::size_t i = 1; i <= layout.phases(); ++i) {
    const double t = z[layout.phase_time(i)];
    if (!(t > previous)) {
      throw ExtractionError(fmt::format("phase times not increasing at phase {}", i));
    }
    traj.phase_end_times.push_back(t);
    previous = t;
  }
  traj.duration = traj.phase_end_times.back();

  traj.times.assign(layout.node_count(), 0.0);
  for (std::size_t i = 1; i <= layout.phases(); ++i) {
    const double start = i == 1 ? 0.0 : traj.phase_end_times[i - 2];
    const double h = (traj.phase_end_times[i - 1] - start) / static_cast<double>(N);
    for (std::size_t s = 1; s < N; ++s) {
      traj.times[(i - 1) * N + s] = start + static_cast<double>(s) * h;
    }
    traj.times[i * N] = traj.phase_end_times[i - 1];
  }

  traj.states.resize(static_cast<Eigen::Index>(layout.node_count()),
                     static_cast<Eigen::Index>(2 * n));
  for (std::size_t k = 0; k < layout.node_count(); ++k) {
    for (std::size_t c = 0; c < 2 * n; ++c) {
      traj.states(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
          z[layout.state(k) + c];
    }
  }
  traj.controls.resize(static_cast<Eigen::Index>(layout.control_count()),
                       static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < layout.control_count(); ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      traj.controls(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          z[layout.control(k, j)];
    }
  }
  return traj;
}

std::vector<double> pack_trajectory(const DecisionLayout& layout,
                                    const Trajectory& trajectory) {
  const std::size_t n = layout.joints();
  if (trajectory.joints != n || trajectory.node_count() != layout.node_count() ||
      trajectory.phase_count() != layout.phases()) {
    throw std::invalid_argument("trajectory does not match the layout");
  }
  std::vector<double> z(layout.dimension(), 0.0);
  for (std::size_t k = 0; k < layout.node_count(); ++k) {
    for (std::size_t c = 0; c < 2 * n; ++c) {
      z[layout.state(k) + c] =
          trajectory.states(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
    }
  }
  for (std::size_t k = 0; k < layout.control_count(); ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      z[layout.control(k, j)] =
          trajectory.controls(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    }
  }
  for (std::size_t i = 1; i <= layout.phases(); ++i) {
    z[layout.phase_time(i)] = trajectory.phase_end_times[i - 1];
  }
  return z;
}

}  // namespace phaseopt
