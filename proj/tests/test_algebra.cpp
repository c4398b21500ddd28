#include <gtest/gtest.h>

#include <cmath>

#include "gpmem/gpmem.hpp"
#include "oracles.hpp"

using namespace gpmem;

namespace {

const std::vector<BaseKind> kFoldable{BaseKind::Const, BaseKind::Lin, BaseKind::Per, BaseKind::SE, BaseKind::WN};

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Compares an expression against a sum of products at distinct and repeated
// inputs (WN only contributes on the diagonal).
void expect_equivalent(const KernelExpr& k, const HyperParams& p, const SumOfProducts& sop, oracle::KernelGen& gen,
                       int points, double tol) {
  for (int i = 0; i < points; ++i) {
    const double x = gen.uniform(-4, 4);
    const double y = (i % 4 == 0) ? x : gen.uniform(-4, 4);
    ASSERT_LE(rel(sop.eval(x, y), eval_kernel(k, p, x, y)), tol) << to_string(k) << " at " << x << "," << y;
  }
}

}  // namespace

TEST(Algebra, DistributionPreservesValues) {
  oracle::KernelGen gen(101);
  for (int t = 0; t < 60; ++t) {
    HyperParams p;
    const auto k = gen.expr(p, gen.integer(1, 5), std::vector<BaseKind>(kAllBaseKinds.begin(), kAllBaseKinds.end()));
    expect_equivalent(k, p, parse_to_sum_of_products(k, p), gen, 100, 1e-10);
  }
}

TEST(Algebra, SimplificationPreservesValues) {
  oracle::KernelGen gen(202);
  for (int t = 0; t < 60; ++t) {
    HyperParams p;
    const auto k = gen.expr(p, gen.integer(1, 5), kFoldable);
    expect_equivalent(k, p, simplify(parse_to_sum_of_products(k, p)), gen, 100, 1e-10);
  }
}

TEST(Algebra, SimplifiedHasNoProductOfSums) {
  oracle::KernelGen gen(5);
  HyperParams p;
  const auto k = mult_funcs(add_funcs(gen.leaf(p, {BaseKind::Lin}), gen.leaf(p, {BaseKind::Per})),
                            add_funcs(gen.leaf(p, {BaseKind::SE}), gen.leaf(p, {BaseKind::Lin})));
  const auto sop = parse_to_sum_of_products(k, p);
  EXPECT_EQ(sop.terms.size(), 4u);
  for (const auto& t : sop.terms) EXPECT_EQ(t.size(), 2u);
}

TEST(Algebra, RebuiltKernelMatches) {
  oracle::KernelGen gen(303);
  for (int t = 0; t < 30; ++t) {
    HyperParams p;
    const auto k = gen.expr(p, gen.integer(1, 4), kFoldable);
    const auto snapshot = p.snapshot();
    const auto [k2, p2] = to_kernel(simplify(parse_to_sum_of_products(k, p)));
    EXPECT_EQ(p.snapshot(), snapshot);
    for (int i = 0; i < 20; ++i) {
      const double x = gen.uniform(-3, 3), y = i % 3 ? gen.uniform(-3, 3) : x;
      EXPECT_LE(rel(eval_kernel(k2, p2, x, y), eval_kernel(k, p, x, y)), 1e-10);
    }
  }
}

TEST(Algebra, SimplifyIsIdempotent) {
  oracle::KernelGen gen(404);
  for (int t = 0; t < 40; ++t) {
    HyperParams p;
    const auto k = gen.expr(p, gen.integer(1, 5), kFoldable);
    const auto once = simplify(parse_to_sum_of_products(k, p));
    const auto twice = simplify(once);
    ASSERT_EQ(once.terms.size(), twice.terms.size());
    for (std::size_t i = 0; i < once.terms.size(); ++i) {
      ASSERT_EQ(once.terms[i].size(), twice.terms[i].size());
      for (std::size_t j = 0; j < once.terms[i].size(); ++j) {
        EXPECT_EQ(once.terms[i][j].kind, twice.terms[i][j].kind);
        for (std::size_t q = 0; q < once.terms[i][j].values.size(); ++q)
          EXPECT_NEAR(once.terms[i][j].values[q], twice.terms[i][j].values[q], 1e-12);
      }
    }
  }
}

// The four folding identities, each checked pointwise.
TEST(Folding, ProductOfSquaredExponentials) {
  const SumOfProducts s{{{Factor{BaseKind::SE, {1.5, 2.0}}, Factor{BaseKind::SE, {0.7, 3.0}}}}};
  const auto f = simplify(s);
  ASSERT_EQ(f.terms.size(), 1u);
  ASSERT_EQ(f.terms[0].size(), 1u);
  EXPECT_NEAR(f.terms[0][0].values[0], 1.05, 1e-14);
  EXPECT_NEAR(f.terms[0][0].values[1], 1.0 / std::sqrt(0.25 + 1.0 / 9.0), 1e-14);
  for (double d : {0.0, 0.4, 1.7, 5.0}) EXPECT_NEAR(f.eval(0.0, d), s.eval(0.0, d), 1e-12);
}

TEST(Folding, WhiteNoiseAbsorbsStationaryFactors) {
  for (auto kind : {BaseKind::SE, BaseKind::Per, BaseKind::Const, BaseKind::WN}) {
    Factor other{kind, std::vector<double>(arity(kind), 1.3)};
    if (kind == BaseKind::Per) other.values[1] = 2.0;
    const SumOfProducts s{{{other, Factor{BaseKind::WN, {0.6}}}}};
    const auto f = simplify(s);
    ASSERT_EQ(f.terms[0].size(), 1u);
    EXPECT_EQ(f.terms[0][0].kind, BaseKind::WN);
    EXPECT_NEAR(f.eval(1.0, 1.0), s.eval(1.0, 1.0), 1e-12);
    EXPECT_EQ(f.eval(1.0, 1.5), 0.0);
  }
}

TEST(Folding, LinearTimesWhiteNoiseIsKept) {
  const SumOfProducts s{{{Factor{BaseKind::Lin, {1.0}}, Factor{BaseKind::WN, {1.0}}}}};
  EXPECT_EQ(simplify(s).terms[0].size(), 2u);
}

TEST(Folding, ConstantScalesNeighbour) {
  const SumOfProducts s{{{Factor{BaseKind::Per, {1.2, 2.5, 0.9}}, Factor{BaseKind::Const, {2.0}}}}};
  const auto f = simplify(s);
  ASSERT_EQ(f.terms[0].size(), 1u);
  EXPECT_EQ(f.terms[0][0].kind, BaseKind::Per);
  EXPECT_NEAR(f.terms[0][0].values[0], 2.4, 1e-14);
  for (double d : {0.0, 0.8, 3.3}) EXPECT_NEAR(f.eval(0.1, d), s.eval(0.1, d), 1e-12);
}

TEST(Folding, SumOfLinearKernels) {
  const SumOfProducts s{{{Factor{BaseKind::Lin, {3.0}}}, {Factor{BaseKind::Lin, {4.0}}}}};
  const auto f = simplify(s);
  ASSERT_EQ(f.terms.size(), 1u);
  EXPECT_NEAR(f.terms[0][0].values[0], 5.0, 1e-14);
  for (double x : {-2.0, 0.5}) EXPECT_NEAR(f.eval(x, 1.5), s.eval(x, 1.5), 1e-12);
}

TEST(Structure, CanonicalRendering) {
  EXPECT_EQ(StructExpr::parse("WN + PER + LIN").to_string(), "LIN + PER + WN");
  EXPECT_EQ(StructExpr::parse("SE*PER").to_string(), "PER*SE");
  EXPECT_EQ(StructExpr::parse("PER*WN").to_string(), "WN");
  EXPECT_EQ(StructExpr::parse("SE*SE + LIN + LIN").to_string(), "LIN + SE");
  EXPECT_EQ(StructExpr::parse("lin*wn").to_string(), "LIN*WN");
}

TEST(Structure, MatchesKernelStructure) {
  const auto k = parse_kernel("LIN(a) * (PER(b,p,l) + WN(s))");
  EXPECT_EQ(struct_of(k).to_string(), "LIN*PER + LIN*WN");
}

TEST(Structure, ParseErrors) {
  EXPECT_THROW(StructExpr::parse("LIN +"), ParseError);
  EXPECT_THROW(StructExpr::parse("FOO"), ParseError);
  EXPECT_THROW(StructExpr::parse(""), ParseError);
}

TEST(Structure, FunctionalFormShowsValues) {
  const SumOfProducts s{{{Factor{BaseKind::Lin, {2.7}}}, {Factor{BaseKind::Per, {5.6, 3.7, 6.4}}}}};
  EXPECT_EQ(to_string(s), "LIN(2.7) + PER(5.6,3.7,6.4)");
}
