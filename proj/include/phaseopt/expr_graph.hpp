#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace phaseopt {

/// Operator of a node in an ExpressionGraph.
enum class Op : std::uint8_t {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Sin,
  Cos,
  Sqrt,
  Square,
};

/// Number of operands an operator takes.
constexpr int arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Var:
      return 0;
    case Op::Neg:
    case Op::Sin:
    case Op::Cos:
    case Op::Sqrt:
    case Op::Square:
      return 1;
    default:
      return 2;
  }
}

const char* op_name(Op op);

/// Position of a node in the graph arena.
struct ExprRef {
  std::uint32_t index = 0;

  friend bool operator==(ExprRef, ExprRef) = default;
};

struct Node {
  Op op = Op::Const;
  std::array<ExprRef, 2> operands{};
  /// Constant value for Const, variable number for Var, unused otherwise.
  double payload = 0.0;
};

/// Raised when a node is built with the wrong operand count or an operand
/// that does not exist yet.
class ConstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward sweep hits a domain error (division by zero,
/// square root of a negative number).
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, std::size_t node_index)
      : std::runtime_error(what), node_index_(node_index) {}

  std::size_t node_index() const { return node_index_; }

 private:
  std::size_t node_index_;
};

/// Append-only arena of scalar expressions in topological order.
///
/// Every operand of a node refers to an earlier arena slot, so a single
/// forward sweep evaluates the graph and a single backward sweep yields
/// adjoints. Structurally identical operator nodes are shared (hash-consing);
/// variables are always fresh.
class ExpressionGraph {
 public:
  ExpressionGraph() = default;

  /// Creates the next dense variable Var(variable_count()).
  ExprRef new_variable();

  ExprRef constant(double value);

  /// Appends (or reuses) a node. Throws ConstructionError when the operand
  /// count does not match the operator or an operand is out of range.
  ExprRef build(Op op, std::span<const ExprRef> operands);
  ExprRef build(Op op, ExprRef a);
  ExprRef build(Op op, ExprRef a, ExprRef b);

  std::size_t size() const { return nodes_.size(); }
  std::size_t variable_count() const { return variable_count_; }
  const Node& node(ExprRef ref) const { return nodes_.at(ref.index); }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Evaluates the roots at the given variable values.
  std::vector<double> evaluate(std::span<const ExprRef> roots,
                               std::span<const double> values) const;

  /// Dense Jacobian, rows = roots, columns = variables.
  Eigen::MatrixXd jacobian(std::span<const ExprRef> roots,
                           std::span<const double> values) const;

  /// Same as jacobian() but only stores structurally reachable entries.
  Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_jacobian(
      std::span<const ExprRef> roots, std::span<const double> values) const;

 private:
  struct KeyHash {
    std::size_t operator()(const std::array<std::uint64_t, 3>& key) const;
  };

  ExprRef append(const Node& node);

  std::vector<Node> nodes_;
  std::size_t variable_count_ = 0;
  std::unordered_map<std::array<std::uint64_t, 3>, std::uint32_t, KeyHash>
      interned_;
};

/// Scratch buffers for FunctionTape sweeps. One per thread.
struct TapeWorkspace {
  std::vector<double> values;
  std::vector<double> adjoints;
};

/// A fixed list of roots over a frozen graph, with the dependency cone of
/// each root precomputed so that per-row evaluation and differentiation only
/// touch the nodes the row actually depends on.
class FunctionTape {
 public:
  FunctionTape(const ExpressionGraph& graph, std::vector<ExprRef> roots);

  std::size_t rows() const { return roots_.size(); }
  std::size_t variable_count() const { return variable_count_; }
  std::size_t nonzeros() const { return col_index_.size(); }

  /// Sorted variable indices row r depends on.
  std::span<const std::uint32_t> row_variables(std::size_t r) const {
    return {col_index_.data() + row_start_[r],
            row_start_[r + 1] - row_start_[r]};
  }
  std::span<const std::size_t> row_offsets() const { return row_start_; }
  std::span<const std::uint32_t> column_indices() const { return col_index_; }

  TapeWorkspace make_workspace() const;

  /// Full forward sweep; writes one value per root.
  void evaluate(std::span<const double> x, std::span<double> out,
                TapeWorkspace& ws) const;

  /// Forward sweep followed by one reverse sweep per row over its cone.
  /// `jac` is laid out in CSR order matching row_offsets()/column_indices().
  void evaluate_with_jacobian(std::span<const double> x, std::span<double> out,
                              std::span<double> jac, TapeWorkspace& ws) const;

  /// Value and gradient of a single row, touching only its cone. The gradient
  /// is ordered like row_variables(r).
  double row_gradient(std::size_t r, std::span<const double> x,
                      std::span<double> grad, TapeWorkspace& ws) const;

 private:
  void forward(std::span<const std::uint32_t> order,
               std::span<const double> x, TapeWorkspace& ws) const;
  void reverse(std::size_t r, std::span<double> grad, TapeWorkspace& ws) const;

  const ExpressionGraph* graph_;
  std::vector<ExprRef> roots_;
  std::size_t variable_count_;
  std::uint32_t sweep_end_ = 0;
  // Ascending node indices of each row's dependency cone.
  std::vector<std::size_t> cone_start_;
  std::vector<std::uint32_t> cone_nodes_;
  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> col_index_;
};

/// Value handle pairing a graph with a node so expressions can be written
/// with ordinary arithmetic operators.
class Expr {
 public:
  Expr() = default;
  Expr(ExpressionGraph* graph, ExprRef ref) : graph_(graph), ref_(ref) {}

  ExprRef ref() const { return ref_; }
  ExpressionGraph* graph() const { return graph_; }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

  friend Expr operator+(const Expr& a, double b);
  friend Expr operator+(double a, const Expr& b);
  friend Expr operator-(const Expr& a, double b);
  friend Expr operator-(double a, const Expr& b);
  friend Expr operator*(const Expr& a, double b);
  friend Expr operator*(double a, const Expr& b);
  friend Expr operator/(const Expr& a, double b);

  Expr& operator+=(const Expr& b) { return *this = *this + b; }
  Expr& operator-=(const Expr& b) { return *this = *this - b; }
  Expr& operator*=(const Expr& b) { return *this = *this * b; }

  friend Expr sin(const Expr& a);
  friend Expr cos(const Expr& a);
  friend Expr sqrt(const Expr& a);
  friend Expr square(const Expr& a);

 private:
  Expr lift(double value) const;

  ExpressionGraph* graph_ = nullptr;
  ExprRef ref_{};
};

inline double square(double a) { return a * a; }

/// Sum of expressions as a balanced tree; an empty list gives Const(0).
Expr sum(ExpressionGraph& graph, std::span<const Expr> terms);

}  // namespace phaseopt
