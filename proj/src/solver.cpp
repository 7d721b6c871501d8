#include "phaseopt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

namespace phaseopt {

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

void SolverOptions::validate() const {
  if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
  if (!(constraint_tol > 0.0) || !(stationarity_tol > 0.0)) {
    throw std::invalid_argument("solver tolerances must be positive");
  }
  if (!(initial_penalty > 0.0) || !(penalty_growth > 1.0)) {
    throw std::invalid_argument("penalty must be positive and growing");
  }
  if (!(required_shrink > 0.0 && required_shrink < 1.0)) {
    throw std::invalid_argument("required_shrink must lie in (0, 1)");
  }
  if (time_limit && !(*time_limit > 0.0)) {
    throw std::invalid_argument("time limit must be positive");
  }
}

double max_violation(const NlpProblem& problem, const std::vector<double>& z) {
  std::vector<ExprRef> roots;
  roots.reserve(problem.rows.size());
  for (const auto& r : problem.rows) roots.push_back(r.residual);
  const auto values = problem.graph.evaluate(roots, z);
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    worst = std::max(worst, bound_violation(values[i], problem.rows[i].lower,
                                            problem.rows[i].upper));
  }
  for (std::size_t j = 0; j < z.size(); ++j) {
    worst = std::max(worst, bound_violation(z[j], problem.lower[j], problem.upper[j]));
  }
  return worst;
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;
constexpr int kMaxInnerPerOuter = 500;
constexpr double kMultiplierCap = 1e12;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Marks nodes whose value depends nonlinearly on some variable.
std::vector<bool> nonlinear_nodes(const ExpressionGraph& graph) {
  const auto& nodes = graph.nodes();
  std::vector<bool> varying(nodes.size(), false);
  std::vector<bool> nonlinear(nodes.size(), false);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& node = nodes[i];
    const auto a = node.operands[0].index;
    const auto b = node.operands[1].index;
    switch (node.op) {
      case Op::Const: break;
      case Op::Var: varying[i] = true; break;
      case Op::Add:
      case Op::Sub:
        varying[i] = varying[a] || varying[b];
        nonlinear[i] = nonlinear[a] || nonlinear[b];
        break;
      case Op::Mul:
        varying[i] = varying[a] || varying[b];
        nonlinear[i] = nonlinear[a] || nonlinear[b] || (varying[a] && varying[b]);
        break;
      case Op::Div:
        varying[i] = varying[a] || varying[b];
        nonlinear[i] = nonlinear[a] || varying[b];
        break;
      case Op::Neg:
        varying[i] = varying[a];
        nonlinear[i] = nonlinear[a];
        break;
      case Op::Sin:
      case Op::Cos:
      case Op::Sqrt:
      case Op::Square:
        varying[i] = varying[a];
        nonlinear[i] = varying[a];
        break;
    }
  }
  return nonlinear;
}

enum class InnerExit { Converged, Stalled, Budget, TimeLimit };

class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const NlpProblem& problem, const SolverOptions& options)
      : problem_(problem),
        options_(options),
        dim_(problem.dimension()),
        rows_(problem.rows.size()),
        row_tape_(problem.graph, row_roots(problem)),
        obj_tape_(problem.graph, problem.objective_terms),
        row_ws_(row_tape_.make_workspace()),
        obj_ws_(obj_tape_.make_workspace()) {
    const auto nonlinear = nonlinear_nodes(problem.graph);
    for (const auto& r : problem.rows) {
      row_nonlinear_.push_back(nonlinear[r.residual.index]);
      lower_.push_back(r.lower);
      upper_.push_back(r.upper);
    }
    for (const auto& t : problem.objective_terms) {
      obj_nonlinear_.push_back(nonlinear[t.index]);
    }
    c_.resize(rows_);
    row_jac_.resize(row_tape_.nonzeros());
    obj_vals_.resize(obj_tape_.rows());
    obj_jac_.resize(obj_tape_.nonzeros());
    multipliers_.assign(rows_, 0.0);
    weights_.assign(rows_, 0.0);
    grad_.resize(dim_);
  }

  Solution run(std::span<const double> guess) {
    start_ = Clock::now();
    Solution sol;
    if (guess.size() != dim_) {
      throw std::invalid_argument(fmt::format(
          "initial guess has {} entries, expected {}", guess.size(), dim_));
    }
    z_.assign(guess.begin(), guess.end());
    for (std::size_t j = 0; j < dim_; ++j) {
      z_[j] = std::clamp(z_[j], problem_.lower[j], problem_.upper[j]);
    }
    penalty_ = options_.initial_penalty;

    try {
      evaluate_derivatives(z_);
      double previous_measure = kInfinity;
      for (int outer = 0; outer < options_.max_outer_iterations; ++outer) {
        outer_ = outer;
        sol.outer_iterations = outer + 1;
        const double inner_tol = std::max(
            0.5 * options_.stationarity_tol, 1e-2 * std::pow(0.1, outer));
        const InnerExit exit = minimize_subproblem(inner_tol, sol.history);

        // Infeasibility/complementarity measure before the multiplier update.
        double measure = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) {
          const double shifted = c_[i] + multipliers_[i] / penalty_;
          measure = std::max(measure,
                             std::abs(c_[i] - std::clamp(shifted, lower_[i], upper_[i])));
        }
        update_weights();
        for (std::size_t i = 0; i < rows_; ++i) {
          multipliers_[i] = std::clamp(weights_[i], -kMultiplierCap, kMultiplierCap);
        }
        const double violation = row_violation();
        // With the updated multipliers the Lagrangian gradient equals the
        // subproblem gradient, so this is the KKT stationarity residual.
        const double stationarity = projected_gradient_norm();

        if (options_.verbosity >= 1) {
          std::fprintf(stderr,
                       "outer %3d  mu %9.2e  f %14.8e  viol %9.2e  kkt %9.2e  "
                       "inner %5d\n",
                       outer, penalty_, objective_value(), violation, stationarity,
                       inner_total_);
        }
        if (violation <= options_.constraint_tol &&
            measure <= options_.constraint_tol &&
            stationarity <= options_.stationarity_tol) {
          return finish(sol, SolveStatus::Optimal, "converged");
        }
        if (exit == InnerExit::Budget) {
          return finish(sol, SolveStatus::MaxIterations, "iteration budget exhausted");
        }
        if (exit == InnerExit::TimeLimit) {
          return finish(sol, SolveStatus::MaxIterations, "time limit reached");
        }
        if (measure > options_.required_shrink * previous_measure ||
            exit == InnerExit::Stalled) {
          penalty_ *= options_.penalty_growth;
          if (penalty_ > options_.max_penalty) {
            return finish(sol, SolveStatus::Infeasible,
                          "penalty limit reached without feasibility");
          }
        }
        previous_measure = measure;
      }
      return finish(sol, SolveStatus::MaxIterations, "outer iteration limit reached");
    } catch (const EvaluationError& e) {
      return finish(sol, SolveStatus::NumericalFailure, e.what(), false);
    } catch (const NonFiniteError& e) {
      return finish(sol, SolveStatus::NumericalFailure, e.what(), false);
    }
  }

 private:
  static std::vector<ExprRef> row_roots(const NlpProblem& problem) {
    std::vector<ExprRef> roots;
    roots.reserve(problem.rows.size());
    for (const auto& r : problem.rows) roots.push_back(r.residual);
    return roots;
  }

  Solution& finish(Solution& sol, SolveStatus status, std::string message,
                   bool evaluated = true) {
    sol.status = status;
    sol.message = std::move(message);
    sol.z = z_;
    sol.iterations = inner_total_;
    sol.multipliers = multipliers_;
    if (evaluated) {
      sol.objective = objective_value();
      sol.max_violation = row_violation();
      sol.stationarity = projected_gradient_norm();
    } else {
      sol.objective = std::numeric_limits<double>::quiet_NaN();
      sol.max_violation = std::numeric_limits<double>::quiet_NaN();
      sol.stationarity = std::numeric_limits<double>::quiet_NaN();
    }
    sol.wall_time = std::chrono::duration<double>(Clock::now() - start_).count();
    return sol;
  }

  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

  double objective_value() const {
    double f = 0.0;
    for (double v : obj_vals_) f += v;
    return f;
  }

  double row_violation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      worst = std::max(worst, bound_violation(c_[i], lower_[i], upper_[i]));
    }
    return worst;
  }

  static void check_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
      if (!std::isfinite(v)) throw NonFiniteError(fmt::format("non-finite {}", what));
    }
  }

  void evaluate_values(const std::vector<double>& z, std::vector<double>& c,
                       std::vector<double>& obj) {
    row_tape_.evaluate(z, c, row_ws_);
    obj_tape_.evaluate(z, obj, obj_ws_);
    check_finite(c, "constraint value");
    check_finite(obj, "objective value");
  }

  void evaluate_derivatives(const std::vector<double>& z) {
    row_tape_.evaluate_with_jacobian(z, c_, row_jac_, row_ws_);
    obj_tape_.evaluate_with_jacobian(z, obj_vals_, obj_jac_, obj_ws_);
    check_finite(c_, "constraint value");
    check_finite(obj_vals_, "objective value");
    check_finite(row_jac_, "constraint derivative");
    check_finite(obj_jac_, "objective derivative");
  }

  // PHR term for one row; returns the penalty and writes the row weight
  // (the first-order multiplier estimate).
  double row_term(std::size_t i, double c, double& weight) const {
    const double shifted = c + multipliers_[i] / penalty_;
    const double excess = shifted - std::clamp(shifted, lower_[i], upper_[i]);
    weight = penalty_ * excess;
    return 0.5 * penalty_ * excess * excess -
           0.5 * multipliers_[i] * multipliers_[i] / penalty_;
  }

  double merit(const std::vector<double>& c, const std::vector<double>& obj) const {
    double value = 0.0;
    for (double v : obj) value += v;
    double unused = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) value += row_term(i, c[i], unused);
    return value;
  }

  void update_weights() {
    for (std::size_t i = 0; i < rows_; ++i) row_term(i, c_[i], weights_[i]);
    std::fill(grad_.begin(), grad_.end(), 0.0);
    const auto obj_off = obj_tape_.row_offsets();
    const auto obj_col = obj_tape_.column_indices();
    for (std::size_t t = 0; t < obj_tape_.rows(); ++t) {
      for (std::size_t e = obj_off[t]; e < obj_off[t + 1]; ++e) {
        grad_[obj_col[e]] += obj_jac_[e];
      }
    }
    const auto off = row_tape_.row_offsets();
    const auto col = row_tape_.column_indices();
    for (std::size_t i = 0; i < rows_; ++i) {
      if (weights_[i] == 0.0) continue;
      for (std::size_t e = off[i]; e < off[i + 1]; ++e) {
        grad_[col[e]] += weights_[i] * row_jac_[e];
      }
    }
  }

  double projected_gradient_norm() const {
    double worst = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double moved =
          std::clamp(z_[j] - grad_[j], problem_.lower[j], problem_.upper[j]);
      worst = std::max(worst, std::abs(moved - z_[j]));
    }
    return worst;
  }

  bool fixed(std::size_t j) const { return problem_.lower[j] == problem_.upper[j]; }

  // Adds weight * (finite-difference Hessian of one tape row) to the free
  // block. `base` is the exact gradient at z_.
  void add_row_curvature(const FunctionTape& tape, TapeWorkspace& ws, std::size_t r,
                         std::span<const double> base, double weight,
                         std::vector<Eigen::Triplet<double>>& triplets) {
    const auto vars = tape.row_variables(r);
    const std::size_t d = vars.size();
    scratch_grad_.resize(d);
    scratch_hess_.assign(d * d, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t j = vars[a];
      const double saved = probe_[j];
      const double step = 1.5e-8 * std::max(1.0, std::abs(saved));
      probe_[j] = saved + step;
      const double actual = probe_[j] - saved;
      tape.row_gradient(r, probe_, scratch_grad_, ws);
      probe_[j] = saved;
      for (std::size_t b = 0; b < d; ++b) {
        scratch_hess_[a * d + b] = (scratch_grad_[b] - base[b]) / actual;
      }
    }
    for (std::size_t a = 0; a < d; ++a) {
      const int fa = free_index_[vars[a]];
      if (fa < 0) continue;
      for (std::size_t b = 0; b < d; ++b) {
        const int fb = free_index_[vars[b]];
        if (fb < 0) continue;
        const double h = 0.5 * (scratch_hess_[a * d + b] + scratch_hess_[b * d + a]);
        if (h != 0.0 && std::isfinite(h)) triplets.emplace_back(fa, fb, weight * h);
      }
    }
  }

  // Hessian of the augmented Lagrangian restricted to the free variables.
  Eigen::SparseMatrix<double> free_hessian(std::size_t free_count) {
    std::vector<Eigen::Triplet<double>> triplets;
    probe_ = z_;
    const auto obj_off = obj_tape_.row_offsets();
    for (std::size_t t = 0; t < obj_tape_.rows(); ++t) {
      if (!obj_nonlinear_[t]) continue;
      add_row_curvature(obj_tape_, obj_ws_, t,
                        {obj_jac_.data() + obj_off[t], obj_off[t + 1] - obj_off[t]},
                        1.0, triplets);
    }
    const auto off = row_tape_.row_offsets();
    const auto col = row_tape_.column_indices();
    for (std::size_t i = 0; i < rows_; ++i) {
      const std::span<const double> g{row_jac_.data() + off[i], off[i + 1] - off[i]};
      if (row_nonlinear_[i] && weights_[i] != 0.0) {
        add_row_curvature(row_tape_, row_ws_, i, g, weights_[i], triplets);
      }
      const double shifted = c_[i] + multipliers_[i] / penalty_;
      const bool penalized = lower_[i] == upper_[i] || shifted < lower_[i] ||
                             shifted > upper_[i];
      if (!penalized) continue;
      for (std::size_t a = 0; a < g.size(); ++a) {
        const int fa = free_index_[col[off[i] + a]];
        if (fa < 0 || g[a] == 0.0) continue;
        for (std::size_t b = 0; b < g.size(); ++b) {
          const int fb = free_index_[col[off[i] + b]];
          if (fb < 0 || g[b] == 0.0) continue;
          triplets.emplace_back(fa, fb, penalty_ * g[a] * g[b]);
        }
      }
    }
    Eigen::SparseMatrix<double> h(static_cast<Eigen::Index>(free_count),
                                  static_cast<Eigen::Index>(free_count));
    h.setFromTriplets(triplets.begin(), triplets.end());
    return h;
  }

  // Projected Newton direction (Bertsekas): Newton on the free variables,
  // scaled gradient on variables held at a bound.
  std::vector<double> newton_direction(double pg_norm) {
    const double eps = std::min(1e-3, pg_norm);
    free_index_.assign(dim_, -1);
    std::vector<std::size_t> free;
    for (std::size_t j = 0; j < dim_; ++j) {
      if (fixed(j)) continue;
      const bool at_lower = z_[j] <= problem_.lower[j] + eps && grad_[j] > 0.0;
      const bool at_upper = z_[j] >= problem_.upper[j] - eps && grad_[j] < 0.0;
      if (at_lower || at_upper) continue;
      free_index_[j] = static_cast<int>(free.size());
      free.push_back(j);
    }

    std::vector<double> d(dim_, 0.0);
    Eigen::SparseMatrix<double> h = free_hessian(free.size());
    Eigen::VectorXd diag = h.diagonal();
    double scale = 1.0;
    for (Eigen::Index k = 0; k < diag.size(); ++k) scale = std::max(scale, std::abs(diag(k)));

    // Variables held near a bound head straight for it.
    for (std::size_t j = 0; j < dim_; ++j) {
      if (fixed(j) || free_index_[j] >= 0) continue;
      d[j] = (grad_[j] > 0.0 ? problem_.lower[j] : problem_.upper[j]) - z_[j];
    }
    if (free.empty()) return d;

    Eigen::VectorXd rhs(static_cast<Eigen::Index>(free.size()));
    for (std::size_t f = 0; f < free.size(); ++f) rhs(static_cast<Eigen::Index>(f)) = -grad_[free[f]];

    Eigen::SparseMatrix<double> identity(h.rows(), h.cols());
    identity.setIdentity();
    double shift = regularization_ > 0.0 ? std::max(1e-12 * scale, regularization_ / 10.0)
                                         : 1e-12 * scale;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
    bool analyzed = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::SparseMatrix<double> shifted = h + shift * identity;
      if (!analyzed) {
        llt.analyzePattern(shifted);
        analyzed = true;
      }
      llt.factorize(shifted);
      if (llt.info() == Eigen::Success) {
        const Eigen::VectorXd step = llt.solve(rhs);
        if (step.allFinite()) {
          regularization_ = shift > 1e-12 * scale ? shift : 0.0;
          for (std::size_t f = 0; f < free.size(); ++f) {
            d[free[f]] = step(static_cast<Eigen::Index>(f));
          }
          return d;
        }
      }
      shift = std::max(shift * 10.0, 1e-8 * scale);
    }
    // Factorization never succeeded: fall back to scaled steepest descent.
    for (auto j : free) d[j] = -grad_[j] / scale;
    return d;
  }

  bool line_search(const std::vector<double>& d, double current_merit,
                   std::vector<double>& trial, double& trial_merit) {
    std::vector<double> trial_c(rows_);
    std::vector<double> trial_obj(obj_tape_.rows());
    double alpha = 1.0;
    for (int k = 0; k < kMaxBacktracks; ++k, alpha *= 0.5) {
      double predicted = 0.0;
      double moved = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) {
        trial[j] = std::clamp(z_[j] + alpha * d[j], problem_.lower[j], problem_.upper[j]);
        predicted += grad_[j] * (trial[j] - z_[j]);
        moved = std::max(moved, std::abs(trial[j] - z_[j]));
      }
      if (moved <= 1e-15 * (1.0 + std::abs(current_merit))) return false;
      if (!(predicted < 0.0)) continue;
      try {
        evaluate_values(trial, trial_c, trial_obj);
      } catch (const EvaluationError&) {
        continue;
      } catch (const NonFiniteError&) {
        continue;
      }
      trial_merit = merit(trial_c, trial_obj);
      if (trial_merit <= current_merit + kArmijo * predicted) return true;
    }
    return false;
  }

  InnerExit minimize_subproblem(double tol, std::vector<IterationRecord>& history) {
    std::vector<double> trial(dim_);
    for (int inner = 0;; ++inner) {
      update_weights();
      const double current = merit(c_, obj_vals_);
      const double pg = projected_gradient_norm();
      if (options_.verbosity >= 2) {
        std::fprintf(stderr, "  inner %4d  merit %16.10e  pg %9.2e  reg %8.1e\n", inner,
                     current, pg, regularization_);
      }
      if (pg <= tol) return InnerExit::Converged;
      if (inner_total_ >= options_.max_iterations) return InnerExit::Budget;
      if (options_.time_limit && elapsed() > *options_.time_limit) {
        return InnerExit::TimeLimit;
      }
      if (inner >= kMaxInnerPerOuter) return InnerExit::Stalled;

      double trial_merit = current;
      auto d = newton_direction(pg);
      bool accepted = line_search(d, current, trial, trial_merit);
      if (!accepted) {
        // Retry with a heavily regularized step, then plain projected gradient.
        regularization_ = std::max(regularization_ * 100.0, 1e-4);
        d = newton_direction(pg);
        accepted = line_search(d, current, trial, trial_merit);
      }
      if (!accepted) {
        for (std::size_t j = 0; j < dim_; ++j) d[j] = -grad_[j];
        accepted = line_search(d, current, trial, trial_merit);
      }
      if (!accepted) return InnerExit::Stalled;

      z_ = trial;
      evaluate_derivatives(z_);
      ++inner_total_;
      history.push_back({outer_, inner + 1, trial_merit, penalty_, pg});
    }
  }

  const NlpProblem& problem_;
  const SolverOptions& options_;
  std::size_t dim_;
  std::size_t rows_;
  FunctionTape row_tape_;
  FunctionTape obj_tape_;
  TapeWorkspace row_ws_;
  TapeWorkspace obj_ws_;
  std::vector<bool> row_nonlinear_;
  std::vector<bool> obj_nonlinear_;
  std::vector<double> lower_;
  std::vector<double> upper_;

  std::vector<double> z_;
  std::vector<double> c_;
  std::vector<double> row_jac_;
  std::vector<double> obj_vals_;
  std::vector<double> obj_jac_;
  std::vector<double> multipliers_;
  std::vector<double> weights_;
  std::vector<double> grad_;
  double penalty_ = 10.0;
  double regularization_ = 0.0;
  int inner_total_ = 0;
  int outer_ = 0;
  Clock::time_point start_;

  std::vector<int> free_index_;
  std::vector<double> probe_;
  std::vector<double> scratch_grad_;
  std::vector<double> scratch_hess_;
};

}  // namespace

Solution solve(const NlpProblem& problem, std::span<const double> guess,
               const SolverOptions& options) {
  options.validate();
  if (problem.lower.size() != problem.dimension() ||
      problem.upper.size() != problem.dimension()) {
    throw std::invalid_argument("variable bounds do not match the problem dimension");
  }
  AugmentedLagrangian solver(problem, options);
  return solver.run(guess);
}

}  // namespace phaseopt
