#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "phaseopt/expr_graph.hpp"
#include "test_support.hpp"

namespace phaseopt {
namespace {

std::vector<double> eval1(const ExpressionGraph& g, ExprRef r, std::vector<double> x) {
  const ExprRef roots[] = {r};
  return g.evaluate(roots, x);
}

TEST(ExprGraph, VariablesAreDense) {
  ExpressionGraph g;
  const ExprRef a = g.new_variable();
  const ExprRef b = g.new_variable();
  EXPECT_EQ(g.node(a).op, Op::Var);
  EXPECT_EQ(g.node(a).payload, 0.0);
  EXPECT_EQ(g.node(b).payload, 1.0);
  for (int k = 0; k < 7; ++k) g.new_variable();
  EXPECT_EQ(g.variable_count(), 9u);
}

TEST(ExprGraph, BasicEvaluation) {
  ExpressionGraph g;
  const ExprRef x = g.new_variable();
  const ExprRef y = g.new_variable();
  const ExprRef five = g.build(Op::Add, g.constant(2.0), g.constant(3.0));
  EXPECT_EQ(eval1(g, five, {0, 0})[0], 5.0);
  EXPECT_EQ(eval1(g, g.build(Op::Square, x), {3, 0})[0], 9.0);
  EXPECT_EQ(eval1(g, g.build(Op::Sin, x), {0, 0})[0], 0.0);
  EXPECT_EQ(eval1(g, g.build(Op::Mul, x, y), {2, 3.5})[0], 7.0);
}

TEST(ExprGraph, DomainErrorsAreDeferredToEvaluation) {
  ExpressionGraph g;
  const ExprRef x = g.new_variable();
  const ExprRef inv = g.build(Op::Div, g.constant(1.0), x);
  EXPECT_THROW(eval1(g, inv, {0.0}), EvaluationError);
  try {
    eval1(g, inv, {0.0});
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.node_index(), inv.index);
  }
  const ExprRef root = g.build(Op::Sqrt, x);
  EXPECT_THROW(eval1(g, root, {-1.0}), EvaluationError);
  EXPECT_EQ(eval1(g, root, {4.0})[0], 2.0);
}

TEST(ExprGraph, ArityIsChecked) {
  ExpressionGraph g;
  const ExprRef x = g.new_variable();
  const ExprRef one[] = {x};
  const ExprRef two[] = {x, x};
  EXPECT_THROW(g.build(Op::Add, one), ConstructionError);
  EXPECT_THROW(g.build(Op::Sin, two), ConstructionError);
  EXPECT_THROW(g.build(Op::Var, one), ConstructionError);
  EXPECT_THROW(g.build(Op::Add, x, ExprRef{999}), ConstructionError);
}

TEST(ExprGraph, OperandsPrecedeNodes) {
  ExpressionGraph g;
  Expr x(&g, g.new_variable());
  Expr y(&g, g.new_variable());
  const Expr f = sin(x * y) / (1.0 + square(y)) - sqrt(square(x) + 2.0);
  (void)f;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Node& n = g.nodes()[i];
    for (int k = 0; k < arity(n.op); ++k) EXPECT_LT(n.operands[k].index, i);
  }
}

TEST(ExprGraph, SimpleDerivatives) {
  ExpressionGraph g;
  const ExprRef x = g.new_variable();
  const ExprRef s[] = {g.build(Op::Sin, x)};
  EXPECT_DOUBLE_EQ(g.jacobian(s, std::vector<double>{0.0})(0, 0), 1.0);
  const ExprRef sq[] = {g.build(Op::Square, x)};
  EXPECT_DOUBLE_EQ(g.jacobian(sq, std::vector<double>{3.0})(0, 0), 6.0);
}

TEST(ExprGraph, PlanarArmJacobian) {
  // x = cos q1 + cos(q1 + q2), y = sin q1 + sin(q1 + q2)
  ExpressionGraph g;
  Expr q1(&g, g.new_variable());
  Expr q2(&g, g.new_variable());
  const Expr px = cos(q1) + cos(q1 + q2);
  const Expr py = sin(q1) + sin(q1 + q2);
  const std::vector<ExprRef> roots = {px.ref(), py.ref()};
  EXPECT_DOUBLE_EQ(g.evaluate(roots, std::vector<double>{0, 0})[0], 2.0);
  const Eigen::MatrixXd j =
      g.jacobian(roots, std::vector<double>{0.0, std::numbers::pi / 2});
  EXPECT_NEAR(j(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(j(0, 1), -1.0, 1e-15);
  EXPECT_NEAR(j(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(j(1, 1), 0.0, 1e-15);
}

TEST(ExprGraph, SparseAndTapeAgreeWithDense) {
  ExpressionGraph g;
  Expr a(&g, g.new_variable());
  Expr b(&g, g.new_variable());
  Expr c(&g, g.new_variable());
  const std::vector<ExprRef> roots = {(a * b).ref(), (sin(c) + a).ref(), (b / c).ref()};
  const std::vector<double> x = {0.3, -1.2, 0.7};
  const Eigen::MatrixXd dense = g.jacobian(roots, x);
  const Eigen::MatrixXd sparse = Eigen::MatrixXd(g.sparse_jacobian(roots, x));
  EXPECT_EQ((dense - sparse).norm(), 0.0);

  FunctionTape tape(g, roots);
  auto ws = tape.make_workspace();
  std::vector<double> vals(3), jac(tape.nonzeros());
  tape.evaluate_with_jacobian(x, vals, jac, ws);
  const auto off = tape.row_offsets();
  const auto col = tape.column_indices();
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) {
      EXPECT_EQ(jac[e], dense(static_cast<Eigen::Index>(r), col[e]));
    }
  }
  EXPECT_EQ(tape.nonzeros(), 6u);
}

TEST(ExprGraph, HashConsingSharesIdenticalNodes) {
  ExpressionGraph g;
  const ExprRef x = g.new_variable();
  const ExprRef s1 = g.build(Op::Sin, x);
  const ExprRef s2 = g.build(Op::Sin, x);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(g.constant(1.5), g.constant(1.5));
}

TEST(ExprGraphProperty, RandomGraphsMatchCentralDifferences) {
  std::mt19937 rng(20240611);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ExpressionGraph g;
    const int nvars = std::uniform_int_distribution<int>(1, 4)(rng);
    std::vector<ExprRef> vars;
    std::vector<double> x;
    for (int v = 0; v < nvars; ++v) {
      vars.push_back(g.new_variable());
      x.push_back(std::uniform_real_distribution<double>(-1.5, 1.5)(rng));
    }
    testing::RandomExpression gen(g, vars, x, rng);
    const std::vector<ExprRef> roots = {gen.build(8), gen.build(8)};
    const Eigen::MatrixXd exact = g.jacobian(roots, x);
    const Eigen::MatrixXd fd = testing::central_difference(g, roots, x, 1e-6);
    for (Eigen::Index r = 0; r < exact.rows(); ++r) {
      for (Eigen::Index c = 0; c < exact.cols(); ++c) {
        EXPECT_TRUE(testing::derivative_matches(exact(r, c), fd(r, c)))
            << "trial " << trial << " exact " << exact(r, c) << " fd " << fd(r, c);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 2000);
}

TEST(ExprGraphProperty, EvaluationIsBitwiseRepeatable) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    ExpressionGraph g;
    std::vector<ExprRef> vars = {g.new_variable(), g.new_variable()};
    std::vector<double> x = {0.4, -0.9};
    testing::RandomExpression gen(g, vars, x, rng);
    const std::vector<ExprRef> roots = {gen.build(6)};
    const auto a = g.evaluate(roots, x);
    const auto b = g.evaluate(roots, x);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double)), 0);
    const Eigen::MatrixXd ja = g.jacobian(roots, x);
    const Eigen::MatrixXd jb = g.jacobian(roots, x);
    EXPECT_TRUE(ja == jb);
  }
}

TEST(ExprGraphProperty, JacobianIsLinear) {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    ExpressionGraph g;
    std::vector<ExprRef> vars = {g.new_variable(), g.new_variable(), g.new_variable()};
    std::vector<double> x = {coef(rng) / 3, coef(rng) / 3, coef(rng) / 3};
    testing::RandomExpression gen(g, vars, x, rng);
    const ExprRef f = gen.build(5);
    const ExprRef h = gen.build(5);
    const double a = coef(rng);
    const double b = coef(rng);
    const Expr combo = Expr(&g, f) * a + Expr(&g, h) * b;
    const std::vector<ExprRef> roots = {f, h, combo.ref()};
    const Eigen::MatrixXd j = g.jacobian(roots, x);
    const Eigen::RowVectorXd expected = a * j.row(0) + b * j.row(1);
    for (Eigen::Index c = 0; c < j.cols(); ++c) {
      EXPECT_NEAR(j(2, c), expected(c), 1e-12 * std::max(1.0, std::abs(expected(c))));
    }
  }
}

TEST(ExprGraph, TapeRejectsWrongSizes) {
  ExpressionGraph g;
  Expr x(&g, g.new_variable());
  const std::vector<ExprRef> roots = {(x * 2.0).ref()};
  FunctionTape tape(g, roots);
  auto ws = tape.make_workspace();
  std::vector<double> out(1);
  std::vector<double> wrong(2, 0.0);
  EXPECT_THROW(tape.evaluate(wrong, out, ws), std::invalid_argument);
}

}  // namespace
}  // namespace phaseopt
