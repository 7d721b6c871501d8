#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "phaseopt/expr_graph.hpp"
#include "phaseopt/nlp.hpp"
#include "phaseopt/task.hpp"

namespace phaseopt {

struct TranscribeParams {
  /// Discretization steps per phase.
  int steps = 20;
  /// Lower bound on every phase duration, seconds.
  double min_phase_duration = 0.05;
  double w_vel = 1e-3;
  double w_acc = 1e-3;
  /// Duration per phase used by the default initial guess, seconds.
  double phase_time_guess = 1.0;

  /// Throws std::invalid_argument unless steps >= 2, min_phase_duration > 0,
  /// weights >= 0 and phase_time_guess >= min_phase_duration.
  void validate() const;
};

/// Index map of the decision vector
///   [x_0 .. x_{mN}, u_0 .. u_{mN-1}, T_1 .. T_m],  x_k = [q_k; qdot_k].
class DecisionLayout {
 public:
  DecisionLayout() = default;
  DecisionLayout(std::size_t joints, std::size_t phases, std::size_t steps);

  std::size_t joints() const { return n_; }
  std::size_t phases() const { return m_; }
  std::size_t steps() const { return steps_; }
  std::size_t node_count() const { return m_ * steps_ + 1; }
  std::size_t control_count() const { return m_ * steps_; }
  std::size_t dimension() const {
    return 2 * n_ * node_count() + n_ * control_count() + m_;
  }

  std::size_t state(std::size_t k) const { return 2 * n_ * k; }
  std::size_t position(std::size_t k, std::size_t j) const { return state(k) + j; }
  std::size_t velocity(std::size_t k, std::size_t j) const {
    return state(k) + n_ + j;
  }
  std::size_t control(std::size_t k, std::size_t j) const {
    return 2 * n_ * node_count() + n_ * k + j;
  }
  /// Index of T_i for i = 1..m.
  std::size_t phase_time(std::size_t i) const {
    return 2 * n_ * node_count() + n_ * control_count() + (i - 1);
  }
  /// 1-based phase of step k = 0..mN-1: floor(k / N) + 1.
  std::size_t phase_of(std::size_t k) const { return k / steps_ + 1; }
  /// Node index that ends phase i (1-based).
  std::size_t phase_end_node(std::size_t i) const { return i * steps_; }

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t steps_ = 0;
};

enum class RowKind { Defect, Path, Terminal, Ordering };

/// Where a constraint row of the transcription came from.
struct RowTag {
  RowKind kind;
  std::size_t node;
  std::size_t phase;
};

struct TranscribedProblem {
  NlpProblem nlp;
  DecisionLayout layout;
  std::vector<RowTag> tags;
  TranscribeParams params;
};

/// One RK4 step of the double integrator x = [q; qdot], xdot = [qdot; u] with
/// u held over the step. Works for double and Expr.
template <typename S, typename H>
std::vector<S> rk4_step(std::span<const S> x, std::span<const S> u, const H& h) {
  const std::size_t n = u.size();
  if (x.size() != 2 * n) throw std::invalid_argument("state must have 2n entries");
  auto f = [&](std::span<const S> state) {
    std::vector<S> d;
    d.reserve(2 * n);
    for (std::size_t j = 0; j < n; ++j) d.push_back(state[n + j]);
    for (std::size_t j = 0; j < n; ++j) d.push_back(u[j]);
    return d;
  };
  auto shifted = [&](const std::vector<S>& k, const H& scale) {
    std::vector<S> s;
    s.reserve(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) s.push_back(x[i] + k[i] * scale);
    return s;
  };
  const H half = h * 0.5;
  const auto k1 = f(x);
  const auto k2 = f(shifted(k1, half));
  const auto k3 = f(shifted(k2, half));
  const auto k4 = f(shifted(k3, h));
  const H sixth = h * (1.0 / 6.0);
  std::vector<S> out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    out.push_back(x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * sixth);
  }
  return out;
}

inline std::vector<double> rk4_step(std::span<const double> x,
                                    std::span<const double> u, double h) {
  return rk4_step<double, double>(x, u, h);
}

/// Builds the multi-phase NLP: RK4 shooting defects, path rows of phase p(k)
/// at every node k < mN, terminal rows of phase i at node iN, one ordering row
/// per phase, and the objective T_m + sum_k h_k (w_vel |qdot_k|^2 +
/// w_acc |u_k|^2).
TranscribedProblem transcribe(const TaskSpec& task, const TranscribeParams& params);

/// Stationary trajectory at q_init with T_i = i * phase_time_guess.
std::vector<double> default_initial_guess(const TaskSpec& task,
                                          const TranscribeParams& params,
                                          const DecisionLayout& layout);

/// Sampled trajectory, one row per node.
struct Trajectory {
  std::size_t joints = 0;
  std::size_t steps = 0;
  std::vector<double> times;
  /// (mN+1) x 2n, columns [q, qdot].
  Eigen::MatrixXd states;
  /// mN x n.
  Eigen::MatrixXd controls;
  std::vector<double> phase_end_times;
  double duration = 0.0;

  std::size_t phase_count() const { return phase_end_times.size(); }
  std::size_t node_count() const { return times.size(); }
  /// 1-based phase a node belongs to; node iN belongs to phase i.
  std::size_t node_phase(std::size_t k) const {
    return k == 0 ? 1 : (k - 1) / steps + 1;
  }
};

class ExtractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unpacks a decision vector. Throws ExtractionError unless the phase times
/// are strictly increasing from T_0 = 0.
Trajectory extract_trajectory(const DecisionLayout& layout, std::span<const double> z);
inline Trajectory extract_trajectory(const TranscribedProblem& problem,
                                     std::span<const double> z) {
  return extract_trajectory(problem.layout, z);
}

/// Inverse of extract_trajectory().
std::vector<double> pack_trajectory(const DecisionLayout& layout,
                                    const Trajectory& trajectory);

}  // namespace phaseopt
