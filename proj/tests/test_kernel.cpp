#include <gtest/gtest.h>

#include <cmath>

#include "gpmem/gpmem.hpp"
#include "oracles.hpp"

using namespace gpmem;

namespace {

HyperParams table(std::initializer_list<std::pair<const char*, double>> values) {
  HyperParams p;
  for (const auto& [k, v] : values) p.add(k, v, "hyper");
  return p;
}

}  // namespace

TEST(Kernel, LinearVanishesAtOrigin) {
  auto p = table({{"s", 1.0}});
  EXPECT_EQ(eval_kernel(lin("s"), p, 0.0, 5.0), 0.0);
}

TEST(Kernel, WhiteNoiseIsExactDelta) {
  auto p = table({{"s", 2.0}});
  EXPECT_EQ(eval_kernel(wn("s"), p, 1.3, 1.3), 4.0);
  EXPECT_EQ(eval_kernel(wn("s"), p, 1.3, 1.4), 0.0);
  EXPECT_EQ(eval_kernel(wn("s"), p, 1.3, std::nextafter(1.3, 2.0)), 0.0);
}

TEST(Kernel, SquaredExponentialMatchesFormula) {
  auto p = table({{"sf", 0.4}, {"l", 6.3}});
  EXPECT_NEAR(eval_kernel(se("sf", "l"), p, 0.0, 6.3), oracle::se(0.4, 6.3, 0.0, 6.3), 1e-15);
  EXPECT_NEAR(eval_kernel(se("sf", "l"), p, 0.0, 6.3), 0.16 * std::exp(-0.5), 1e-15);
}

TEST(Kernel, EveryBaseKindMatchesItsFormula) {
  auto p = table({{"a", 1.3}, {"b", 2.1}, {"c", 0.7}});
  oracle::KernelGen gen(3);
  for (int i = 0; i < 100; ++i) {
    const double x = gen.uniform(-5, 5), y = gen.uniform(-5, 5);
    EXPECT_NEAR(eval_kernel(se("a", "b"), p, x, y), oracle::se(1.3, 2.1, x, y), 1e-14);
    EXPECT_NEAR(eval_kernel(lin("a"), p, x, y), oracle::lin(1.3, x, y), 1e-13);
    EXPECT_NEAR(eval_kernel(per("a", "b", "c"), p, x, y), oracle::per(1.3, 2.1, 0.7, x, y), 1e-13);
    EXPECT_NEAR(eval_kernel(rq("a", "b", "c"), p, x, y), oracle::rq(1.3, 2.1, 0.7, x, y), 1e-13);
    EXPECT_NEAR(eval_kernel(constant("a"), p, x, y), 1.69, 1e-14);
  }
}

TEST(Kernel, PeriodicIsBoundedByItsVariance) {
  auto p = table({{"a", 1.5}, {"p", 3.0}, {"l", 0.5}});
  for (double d = 0.0; d < 20.0; d += 0.37) {
    const double k = eval_kernel(per("a", "p", "l"), p, 0.0, d);
    EXPECT_LE(k, 2.25 + 1e-12);
    EXPECT_GT(k, 0.0);
  }
  EXPECT_NEAR(eval_kernel(per("a", "p", "l"), p, 1.0, 7.0), 2.25, 1e-12);  // two full periods
}

TEST(Kernel, SumAndProductCompose) {
  auto p = table({{"s1", 1.2}, {"s2", 0.8}, {"p", 2.5}, {"l", 1.1}});
  const auto k_sum = add_funcs(lin("s1"), per("s2", "p", "l"));
  const auto k_prod = mult_funcs(lin("s1"), per("s2", "p", "l"));
  for (double x : {-1.0, 0.3, 2.2})
    for (double y : {-0.4, 1.7}) {
      const double a = oracle::lin(1.2, x, y), b = oracle::per(0.8, 2.5, 1.1, x, y);
      EXPECT_NEAR(eval_kernel(k_sum, p, x, y), a + b, 1e-13);
      EXPECT_NEAR(eval_kernel(k_prod, p, x, y), a * b, 1e-13);
    }
}

TEST(Kernel, AdditionCommutes) {
  oracle::KernelGen gen(11);
  HyperParams p;
  const auto a = gen.expr(p, 3, {BaseKind::Lin, BaseKind::Per, BaseKind::SE, BaseKind::WN});
  const auto b = gen.expr(p, 2, {BaseKind::Lin, BaseKind::Per, BaseKind::SE, BaseKind::WN});
  for (int i = 0; i < 100; ++i) {
    const double x = gen.uniform(-3, 3), y = gen.uniform(-3, 3);
    EXPECT_EQ(eval_kernel(add_funcs(a, b), p, x, y), eval_kernel(add_funcs(b, a), p, x, y));
  }
}

TEST(Kernel, SymmetricForRandomCompositions) {
  oracle::KernelGen gen(5);
  const std::vector<BaseKind> kinds(kAllBaseKinds.begin(), kAllBaseKinds.end());
  for (int t = 0; t < 50; ++t) {
    HyperParams p;
    const auto k = gen.expr(p, gen.integer(1, 5), kinds);
    const double x = gen.uniform(-4, 4), y = gen.uniform(-4, 4);
    EXPECT_NEAR(eval_kernel(k, p, x, y), eval_kernel(k, p, y, x), 1e-12 * (1 + std::abs(eval_kernel(k, p, x, y))));
  }
}

TEST(Kernel, UnresolvedParameterIsConfigError) {
  auto p = table({{"sf", 1.0}});
  EXPECT_THROW(eval_kernel(se("sf", "missing"), p, 0, 1), ConfigError);
}

TEST(Kernel, NonFiniteValueIsNumericError) {
  auto p = table({{"s", 1e200}});
  EXPECT_THROW(eval_kernel(constant("s"), p, 0, 1), NumericError);
}

TEST(Kernel, WrongArityRejected) {
  EXPECT_THROW(KernelExpr::base(BaseKind::SE, {"a"}), ConfigError);
}

TEST(GramMatrix, ConstantKernel) {
  auto p = table({{"c", 3.0}});
  const std::vector<double> xs{0.0, 1.0};
  const Matrix K = gram_matrix(constant("c"), p, xs, xs);
  EXPECT_TRUE(K.isApprox(Matrix::Constant(2, 2, 9.0)));
}

TEST(GramMatrix, SingletonMatchesScalar) {
  auto p = table({{"sf", 1.1}, {"l", 0.6}});
  const std::vector<double> a{0.3}, b{-1.2};
  const Matrix K = gram_matrix(se("sf", "l"), p, a, b);
  ASSERT_EQ(K.rows(), 1);
  EXPECT_EQ(K(0, 0), eval_kernel(se("sf", "l"), p, 0.3, -1.2));
}

TEST(GramMatrix, ElementwiseSquaredExponential) {
  auto p = table({{"sf", 1.0}, {"l", 1.0}});
  const std::vector<double> xs{0.0, 1.0, 2.0};
  const Matrix K = gram_matrix(se("sf", "l"), p, xs, xs);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(K(i, j), oracle::se(1.0, 1.0, xs[i], xs[j]), 1e-15);
}

TEST(GramMatrix, SymmetricVersionIsExactlySymmetric) {
  oracle::KernelGen gen(8);
  HyperParams p;
  const auto k = gen.expr(p, 4, {BaseKind::Lin, BaseKind::Per, BaseKind::SE, BaseKind::RQ});
  const auto xs = gen.points(7, -3, 3);
  const Matrix K = gram_matrix(BoundKernel(k, p), xs);
  EXPECT_TRUE(K == K.transpose());
}

TEST(GramMatrix, EmptyInputsRejected) {
  auto p = table({{"c", 1.0}});
  const std::vector<double> none;
  const std::vector<double> one{1.0};
  EXPECT_THROW(gram_matrix(constant("c"), p, none, one), ConfigError);
}

TEST(GramMatrix, RandomCompositionsAdmitCholeskyWithJitter) {
  oracle::KernelGen gen(21);
  for (int t = 0; t < 40; ++t) {
    HyperParams p;
    const auto k = gen.expr(p, gen.integer(1, 4), {BaseKind::Lin, BaseKind::Per, BaseKind::SE, BaseKind::WN});
    const auto xs = gen.points(8, -3, 3);
    EXPECT_NO_THROW(factor_with_jitter(gram_matrix(BoundKernel(k, p), xs)));
  }
}

TEST(KernelText, RoundTrip) {
  const auto k = parse_kernel("LIN(a) + PER(b, p, l) * (SE(c, m) + WN(s))");
  EXPECT_EQ(to_string(k), "LIN(a) + PER(b,p,l) * (SE(c,m) + WN(s))");
  EXPECT_TRUE(parse_kernel(to_string(k)) == k);
}

TEST(KernelText, AcceptsConstAndRq) {
  const auto k = parse_kernel("CONST(c) * RQ(sf, a, l)");
  EXPECT_EQ(k.left().leaf().kind, BaseKind::Const);
  EXPECT_EQ(k.right().leaf().kind, BaseKind::RQ);
}

TEST(KernelText, ErrorsCarryPosition) {
  try {
    parse_kernel("SE(a,b) + FOO(c)");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 10u);
  }
  EXPECT_THROW(parse_kernel("SE(a)"), ParseError);
  EXPECT_THROW(parse_kernel("SE(a,b) +"), ParseError);
  EXPECT_THROW(parse_kernel("(LIN(a)"), ParseError);
}

TEST(KernelText, ProductBindsTighterThanSum) {
  const auto k = parse_kernel("LIN(a) + SE(b,c) * WN(d)");
  EXPECT_EQ(k.op(), KernelExpr::Op::Sum);
  EXPECT_EQ(k.right().op(), KernelExpr::Op::Product);
}
