#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "phaseopt/expr_graph.hpp"

namespace phaseopt {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// One constraint row: lower <= residual <= upper. Equalities use
/// lower == upper; one-sided rows use an infinite bound.
struct ConstraintRow {
  ExprRef residual;
  double lower = -kInfinity;
  double upper = kInfinity;
};

/// Smooth NLP over the variables of `graph`:
///   minimize   sum(objective_terms)
///   subject to rows[i].lower <= rows[i].residual <= rows[i].upper
///              lower <= z <= upper
/// `objective` is the single root equal to the sum of the terms; the terms are
/// kept separately so derivative structure stays sparse.
struct NlpProblem {
  ExpressionGraph graph;
  ExprRef objective;
  std::vector<ExprRef> objective_terms;
  std::vector<ConstraintRow> rows;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dimension() const { return graph.variable_count(); }
};

/// Largest violation of a row bound or variable bound at z, recomputed from
/// scratch.
double max_violation(const NlpProblem& problem, const std::vector<double>& z);

/// Per-row violation max(lower - c, c - upper, 0).
inline double bound_violation(double value, double lower, double upper) {
  if (value < lower) return lower - value;
  if (value > upper) return value - upper;
  return 0.0;
}

}  // namespace phaseopt
