#include "phaseopt/expr_graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace phaseopt {

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "Const";
    case Op::Var: return "Var";
    case Op::Add: return "Add";
    case Op::Sub: return "Sub";
    case Op::Mul: return "Mul";
    case Op::Div: return "Div";
    case Op::Neg: return "Neg";
    case Op::Sin: return "Sin";
    case Op::Cos: return "Cos";
    case Op::Sqrt: return "Sqrt";
    case Op::Square: return "Square";
  }
  return "?";
}

std::size_t ExpressionGraph::KeyHash::operator()(
    const std::array<std::uint64_t, 3>& key) const {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (auto k : key) {
    h ^= k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

ExprRef ExpressionGraph::append(const Node& node) {
  nodes_.push_back(node);
  return ExprRef{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ExprRef ExpressionGraph::new_variable() {
  Node node;
  node.op = Op::Var;
  node.payload = static_cast<double>(variable_count_++);
  return append(node);
}

ExprRef ExpressionGraph::constant(double value) {
  const std::array<std::uint64_t, 3> key{
      static_cast<std::uint64_t>(Op::Const), std::bit_cast<std::uint64_t>(value),
      0};
  if (auto it = interned_.find(key); it != interned_.end()) {
    return ExprRef{it->second};
  }
  Node node;
  node.op = Op::Const;
  node.payload = value;
  const ExprRef ref = append(node);
  interned_.emplace(key, ref.index);
  return ref;
}

ExprRef ExpressionGraph::build(Op op, std::span<const ExprRef> operands) {
  if (op == Op::Const || op == Op::Var) {
    throw ConstructionError(std::string("build() cannot create ") +
                            op_name(op) + " nodes");
  }
  if (static_cast<int>(operands.size()) != arity(op)) {
    throw ConstructionError(std::string(op_name(op)) + " expects " +
                            std::to_string(arity(op)) + " operand(s), got " +
                            std::to_string(operands.size()));
  }
  Node node;
  node.op = op;
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (operands[i].index >= nodes_.size()) {
      throw ConstructionError("operand " + std::to_string(operands[i].index) +
                              " does not exist");
    }
    node.operands[i] = operands[i];
  }
  const std::array<std::uint64_t, 3> key{static_cast<std::uint64_t>(op),
                                         node.operands[0].index,
                                         node.operands[1].index};
  if (auto it = interned_.find(key); it != interned_.end()) {
    return ExprRef{it->second};
  }
  const ExprRef ref = append(node);
  interned_.emplace(key, ref.index);
  return ref;
}

ExprRef ExpressionGraph::build(Op op, ExprRef a) {
  const ExprRef operands[] = {a};
  return build(op, operands);
}

ExprRef ExpressionGraph::build(Op op, ExprRef a, ExprRef b) {
  const ExprRef operands[] = {a, b};
  return build(op, operands);
}

std::vector<double> ExpressionGraph::evaluate(
    std::span<const ExprRef> roots, std::span<const double> values) const {
  FunctionTape tape(*this, {roots.begin(), roots.end()});
  auto ws = tape.make_workspace();
  std::vector<double> out(roots.size());
  tape.evaluate(values, out, ws);
  return out;
}

Eigen::MatrixXd ExpressionGraph::jacobian(std::span<const ExprRef> roots,
                                          std::span<const double> values) const {
  return Eigen::MatrixXd(sparse_jacobian(roots, values));
}

Eigen::SparseMatrix<double, Eigen::RowMajor> ExpressionGraph::sparse_jacobian(
    std::span<const ExprRef> roots, std::span<const double> values) const {
  FunctionTape tape(*this, {roots.begin(), roots.end()});
  auto ws = tape.make_workspace();
  std::vector<double> out(roots.size());
  std::vector<double> jac(tape.nonzeros());
  tape.evaluate_with_jacobian(values, out, jac, ws);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(jac.size());
  const auto offsets = tape.row_offsets();
  const auto cols = tape.column_indices();
  for (std::size_t r = 0; r < tape.rows(); ++r) {
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(cols[e]),
                            jac[e]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> result(
      static_cast<Eigen::Index>(roots.size()),
      static_cast<Eigen::Index>(variable_count_));
  result.setFromTriplets(triplets.begin(), triplets.end());
  return result;
}

// ---------------------------------------------------------------------------

FunctionTape::FunctionTape(const ExpressionGraph& graph,
                           std::vector<ExprRef> roots)
    : graph_(&graph),
      roots_(std::move(roots)),
      variable_count_(graph.variable_count()) {
  const auto& nodes = graph.nodes();
  std::vector<std::uint32_t> stamp(nodes.size(), 0);
  std::vector<std::uint32_t> stack;
  std::vector<std::uint32_t> cone;

  cone_start_.push_back(0);
  row_start_.push_back(0);
  for (std::size_t r = 0; r < roots_.size(); ++r) {
    const std::uint32_t root = roots_[r].index;
    if (root >= nodes.size()) {
      throw ConstructionError("root " + std::to_string(root) +
                              " does not exist");
    }
    sweep_end_ = std::max(sweep_end_, root + 1);
    const auto mark = static_cast<std::uint32_t>(r + 1);
    cone.clear();
    stack.assign(1, root);
    stamp[root] = mark;
    while (!stack.empty()) {
      const std::uint32_t i = stack.back();
      stack.pop_back();
      cone.push_back(i);
      const Node& node = nodes[i];
      for (int k = 0; k < arity(node.op); ++k) {
        const std::uint32_t child = node.operands[k].index;
        if (stamp[child] != mark) {
          stamp[child] = mark;
          stack.push_back(child);
        }
      }
    }
    std::sort(cone.begin(), cone.end());
    for (auto i : cone) {
      cone_nodes_.push_back(i);
      if (nodes[i].op == Op::Var) {
        col_index_.push_back(static_cast<std::uint32_t>(nodes[i].payload));
      }
    }
    cone_start_.push_back(cone_nodes_.size());
    row_start_.push_back(col_index_.size());
  }
}

TapeWorkspace FunctionTape::make_workspace() const {
  TapeWorkspace ws;
  ws.values.assign(graph_->size(), 0.0);
  ws.adjoints.assign(graph_->size(), 0.0);
  return ws;
}

namespace {

inline double forward_node(const Node& node, std::size_t i,
                           std::span<const double> x,
                           const std::vector<double>& v) {
  const double a = v[node.operands[0].index];
  const double b = v[node.operands[1].index];
  switch (node.op) {
    case Op::Const: return node.payload;
    case Op::Var: return x[static_cast<std::size_t>(node.payload)];
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0.0) {
        throw EvaluationError("division by zero at node " + std::to_string(i),
                              i);
      }
      return a / b;
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Sqrt:
      if (a < 0.0) {
        throw EvaluationError(
            "square root of negative value at node " + std::to_string(i), i);
      }
      return std::sqrt(a);
    case Op::Square: return a * a;
  }
  return 0.0;
}

}  // namespace

void FunctionTape::forward(std::span<const std::uint32_t> order,
                           std::span<const double> x, TapeWorkspace& ws) const {
  const auto& nodes = graph_->nodes();
  for (auto i : order) {
    ws.values[i] = forward_node(nodes[i], i, x, ws.values);
  }
}

void FunctionTape::evaluate(std::span<const double> x, std::span<double> out,
                            TapeWorkspace& ws) const {
  if (x.size() != variable_count_) {
    throw std::invalid_argument("expected " + std::to_string(variable_count_) +
                                " variable values, got " +
                                std::to_string(x.size()));
  }
  const auto& nodes = graph_->nodes();
  for (std::uint32_t i = 0; i < sweep_end_; ++i) {
    ws.values[i] = forward_node(nodes[i], i, x, ws.values);
  }
  for (std::size_t r = 0; r < roots_.size(); ++r) {
    out[r] = ws.values[roots_[r].index];
  }
}

void FunctionTape::reverse(std::size_t r, std::span<double> grad,
                           TapeWorkspace& ws) const {
  const auto& nodes = graph_->nodes();
  const std::uint32_t* begin = cone_nodes_.data() + cone_start_[r];
  const std::uint32_t* end = cone_nodes_.data() + cone_start_[r + 1];
  for (const auto* p = begin; p != end; ++p) {
    ws.adjoints[*p] = 0.0;
  }
  ws.adjoints[roots_[r].index] = 1.0;
  std::size_t slot = row_start_[r + 1] - row_start_[r];
  auto& adj = ws.adjoints;
  const auto& v = ws.values;
  for (const auto* p = end; p != begin;) {
    const std::uint32_t i = *--p;
    const Node& node = nodes[i];
    const double g = adj[i];
    const std::uint32_t ia = node.operands[0].index;
    const std::uint32_t ib = node.operands[1].index;
    switch (node.op) {
      case Op::Const: break;
      case Op::Var: grad[--slot] = g; break;
      case Op::Add: adj[ia] += g; adj[ib] += g; break;
      case Op::Sub: adj[ia] += g; adj[ib] -= g; break;
      case Op::Mul: adj[ia] += g * v[ib]; adj[ib] += g * v[ia]; break;
      case Op::Div:
        adj[ia] += g / v[ib];
        adj[ib] -= g * v[i] / v[ib];
        break;
      case Op::Neg: adj[ia] -= g; break;
      case Op::Sin: adj[ia] += g * std::cos(v[ia]); break;
      case Op::Cos: adj[ia] -= g * std::sin(v[ia]); break;
      case Op::Sqrt:
        if (g != 0.0) {
          if (v[i] == 0.0) {
            throw EvaluationError(
                "derivative of square root at zero, node " + std::to_string(i),
                i);
          }
          adj[ia] += g * 0.5 / v[i];
        }
        break;
      case Op::Square: adj[ia] += 2.0 * g * v[ia]; break;
    }
  }
}

void FunctionTape::evaluate_with_jacobian(std::span<const double> x,
                                          std::span<double> out,
                                          std::span<double> jac,
                                          TapeWorkspace& ws) const {
  evaluate(x, out, ws);
  for (std::size_t r = 0; r < roots_.size(); ++r) {
    reverse(r, jac.subspan(row_start_[r], row_start_[r + 1] - row_start_[r]),
            ws);
  }
}

double FunctionTape::row_gradient(std::size_t r, std::span<const double> x,
                                  std::span<double> grad,
                                  TapeWorkspace& ws) const {
  forward({cone_nodes_.data() + cone_start_[r],
           cone_start_[r + 1] - cone_start_[r]},
          x, ws);
  reverse(r, grad, ws);
  return ws.values[roots_[r].index];
}

// ---------------------------------------------------------------------------

Expr Expr::lift(double value) const {
  return Expr(graph_, graph_->constant(value));
}

Expr operator+(const Expr& a, const Expr& b) {
  return Expr(a.graph_, a.graph_->build(Op::Add, a.ref_, b.ref_));
}
Expr operator-(const Expr& a, const Expr& b) {
  return Expr(a.graph_, a.graph_->build(Op::Sub, a.ref_, b.ref_));
}
Expr operator*(const Expr& a, const Expr& b) {
  return Expr(a.graph_, a.graph_->build(Op::Mul, a.ref_, b.ref_));
}
Expr operator/(const Expr& a, const Expr& b) {
  return Expr(a.graph_, a.graph_->build(Op::Div, a.ref_, b.ref_));
}
Expr operator-(const Expr& a) {
  return Expr(a.graph_, a.graph_->build(Op::Neg, a.ref_));
}

Expr operator+(const Expr& a, double b) { return a + a.lift(b); }
Expr operator+(double a, const Expr& b) { return b.lift(a) + b; }
Expr operator-(const Expr& a, double b) { return a - a.lift(b); }
Expr operator-(double a, const Expr& b) { return b.lift(a) - b; }
Expr operator*(const Expr& a, double b) { return a * a.lift(b); }
Expr operator*(double a, const Expr& b) { return b.lift(a) * b; }
Expr operator/(const Expr& a, double b) { return a / a.lift(b); }

Expr sin(const Expr& a) {
  return Expr(a.graph_, a.graph_->build(Op::Sin, a.ref_));
}
Expr cos(const Expr& a) {
  return Expr(a.graph_, a.graph_->build(Op::Cos, a.ref_));
}
Expr sqrt(const Expr& a) {
  return Expr(a.graph_, a.graph_->build(Op::Sqrt, a.ref_));
}
Expr square(const Expr& a) {
  return Expr(a.graph_, a.graph_->build(Op::Square, a.ref_));
}

Expr sum(ExpressionGraph& graph, std::span<const Expr> terms) {
  if (terms.empty()) {
    return Expr(&graph, graph.constant(0.0));
  }
  std::vector<Expr> level(terms.begin(), terms.end());
  while (level.size() > 1) {
    std::vector<Expr> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      next.push_back(level[i] + level[i + 1]);
    }
    if (level.size() % 2 == 1) {
      next.push_back(level.back());
    }
    level = std::move(next);
  }
  return level.front();
}

}  // namespace phaseopt
