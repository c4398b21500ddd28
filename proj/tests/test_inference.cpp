#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gpmem/gpmem.hpp"
#include "oracles.hpp"

using namespace gpmem;

namespace {

// Gamma(5, 1) cdf via the Erlang series.
double erlang5_cdf(double x) {
  if (x <= 0) return 0.0;
  double term = 1.0, sum = 1.0;
  for (int i = 1; i < 5; ++i) {
    term *= x / i;
    sum += term;
  }
  return 1.0 - std::exp(-x) * sum;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / v.size();
}

const auto kFlat = [](const HyperParams&) { return 0.0; };

// value = -(a - 3)^2 - (b + 1)^2
struct Quadratic {
  double value(const HyperParams& p) const {
    const double a = p["a"] - 3, b = p["b"] + 1;
    return -a * a - b * b;
  }
  std::vector<double> gradient(const HyperParams& p, const std::vector<std::string>& names) const {
    std::vector<double> g;
    for (const auto& n : names) g.push_back(n == "a" ? -2 * (p["a"] - 3) : -2 * (p["b"] + 1));
    return g;
  }
};

struct NanGradient {
  double value(const HyperParams&) const { return 0.0; }
  std::vector<double> gradient(const HyperParams&, const std::vector<std::string>& names) const {
    return std::vector<double>(names.size(), std::nan(""));
  }
};

}  // namespace

TEST(Mh, PriorProposalsRecoverGammaPrior) {
  HyperParams p;
  p.add("t", 5.0, "hyper", PriorSpec::gamma(5.0, 1.0));
  Rng rng(1);
  std::vector<double> draws;
  for (int i = 0; i < 50000; ++i) {
    mh(p, "hyper", 1, kFlat, rng);
    draws.push_back(p["t"]);
  }
  EXPECT_LT(oracle::ks_statistic(draws, erlang5_cdf), 0.02);
}

TEST(Mh, HierarchicalParentKeepsItsMarginal) {
  HyperParams p;
  p.add("alpha", 5.0, "hyperhyper", PriorSpec::gamma(5.0, 1.0));
  p.add("x", 1.0, "hyper", PriorSpec::gamma(std::string("alpha"), 1.0));
  Rng rng(2);
  std::vector<double> draws;
  for (int i = 0; i < 60000; ++i) {
    mh(p, "hyperhyper", 1, kFlat, rng);
    mh(p, "hyper", 1, kFlat, rng);
    draws.push_back(p["alpha"]);
  }
  EXPECT_LT(oracle::ks_statistic(draws, erlang5_cdf), 0.03);
}

TEST(Mh, UniformPriorAcceptsEverythingWithFlatLikelihood) {
  HyperParams p;
  p.add("u", 1.0, "hyper", PriorSpec::uniform(0.0, 3.0));
  Rng rng(3);
  MhStats stats;
  std::vector<double> draws;
  for (int i = 0; i < 20000; ++i) {
    mh(p, "hyper", 1, kFlat, rng, &stats);
    draws.push_back(p["u"]);
  }
  EXPECT_EQ(stats.accepted, stats.proposals);
  EXPECT_LT(oracle::ks_uniform(draws, 0.0, 3.0), 0.02);
}

TEST(Mh, PosteriorOfGaussianMean) {
  HyperParams p;
  p.add("m", 0.0, "hyper", PriorSpec::uniform(-5.0, 5.0));
  const auto ll = [](const HyperParams& q) { return -(q["m"] - 1.0) * (q["m"] - 1.0) / (2 * 0.25); };
  Rng rng(4);
  std::vector<double> draws;
  for (int i = 0; i < 60000; ++i) {
    mh_drift(p, "hyper", 1, 0.8, ll, rng);
    if (i >= 1000) draws.push_back(p["m"]);
  }
  EXPECT_LT(oracle::ks_statistic(draws, [](double x) { return oracle::normal_cdf((x - 1.0) / 0.5); }), 0.03);
}

TEST(Drift, StandardNormalTarget) {
  HyperParams p;
  p.add("x", 0.0, "hyper");
  const auto ll = [](const HyperParams& q) { return -0.5 * q["x"] * q["x"]; };
  Rng rng(5);
  std::vector<double> draws;
  for (int i = 0; i < 100000; ++i) {
    mh_drift(p, "hyper", 1, 1.0, ll, rng);
    draws.push_back(p["x"]);
  }
  EXPECT_LT(std::abs(mean_of(draws)), 0.05);
  EXPECT_GT(variance_of(draws), 0.9);
  EXPECT_LT(variance_of(draws), 1.1);
}

TEST(Drift, OutOfSupportProposalsAreRejected) {
  HyperParams p;
  p.add("t", 0.01, "hyper", PriorSpec::gamma(1.0, 1.0));
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    mh_drift(p, "hyper", 1, 5.0, kFlat, rng);
    ASSERT_GT(p["t"], 0.0);
  }
}

TEST(Drift, ZeroWidthNeverMoves) {
  HyperParams p;
  p.add("x", 0.3, "hyper");
  Rng rng(7);
  mh_drift(p, "hyper", 100, 0.0, [](const HyperParams&) { return 0.0; }, rng);
  EXPECT_EQ(p["x"], 0.3);
  EXPECT_THROW(mh_drift(p, "hyper", 1, -1.0, kFlat, rng), ConfigError);
}

TEST(Mh, ThrowingLikelihoodCountsAsRejection) {
  HyperParams p;
  p.add("t", 1.0, "hyper", PriorSpec::gamma(2.0, 1.0));
  Rng rng(8);
  MhStats stats;
  const auto ll = [](const HyperParams& q) -> double {
    if (q["t"] > 1.0) throw NumericError("boom");
    return 0.0;
  };
  for (int i = 0; i < 500; ++i) mh(p, "hyper", 1, ll, rng, &stats);
  EXPECT_GT(stats.numeric_rejections, 0u);
  EXPECT_LE(p["t"], 1.0);
}

TEST(Mh, UnknownScopeIsConfigError) {
  HyperParams p;
  p.add("t", 1.0, "hyper", PriorSpec::gamma(2.0, 1.0));
  Rng rng(9);
  EXPECT_THROW(mh(p, "nope", 1, kFlat, rng), ConfigError);
}

TEST(Mh, OnlyTheNamedScopeMoves) {
  HyperParams p;
  p.add("a", 1.0, "one", PriorSpec::gamma(2.0, 1.0));
  p.add("b", 1.0, "two", PriorSpec::gamma(2.0, 1.0));
  Rng rng(10);
  mh(p, "one", 200, kFlat, rng);
  EXPECT_NE(p["a"], 1.0);
  EXPECT_EQ(p["b"], 1.0);
}

TEST(Mh, SeededChainsAreIdentical) {
  auto run = [] {
    HyperParams p;
    p.add("a", 2.0, "hyperhyper", PriorSpec::gamma(5.0, 1.0));
    p.add("b", 1.0, "hyper", PriorSpec::gamma(std::string("a"), 1.0));
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
      mh(p, "hyperhyper", 2, kFlat, rng);
      mh_drift(p, "hyper", 1, 0.5, kFlat, rng);
    }
    return p.snapshot();
  };
  EXPECT_EQ(run(), run());
}

TEST(Gradient, QuadraticConverges) {
  HyperParams p;
  p.add("a", -2.0, "hyper");
  p.add("b", 4.0, "hyper");
  GradientStats stats;
  gradient_ascent(p, "hyper", 100, 0.4, Quadratic{}, &stats);
  EXPECT_NEAR(p["a"], 3.0, 1e-6);
  EXPECT_NEAR(p["b"], -1.0, 1e-6);
  EXPECT_EQ(stats.steps, 100u);
}

TEST(Gradient, OvershootingStepIsHalved) {
  HyperParams p;
  p.add("a", 0.0, "hyper");
  p.add("b", 0.0, "hyper");
  GradientStats stats;
  gradient_ascent(p, "hyper", 60, 5.0, Quadratic{}, &stats);
  EXPECT_GT(stats.halvings, 0u);
  EXPECT_NEAR(p["a"], 3.0, 1e-6);
}

TEST(Gradient, NeverDecreasesTarget) {
  oracle::KernelGen gen(12);
  const auto xs = gen.points(10, -3, 3);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(std::sin(x));
  GpTarget target(add_funcs(se("sf", "l"), wn("s")), xs, ys);
  HyperParams p;
  p.add("sf", 2.0, "hyper", PriorSpec::gamma(2.0, 1.0));
  p.add("l", 3.0, "hyper", PriorSpec::gamma(2.0, 1.0));
  p.add("s", 0.5, "hyper", PriorSpec::gamma(2.0, 1.0));
  double prev = target.value(p) + p.log_prior();
  for (int i = 0; i < 30; ++i) {
    gradient_ascent(p, "hyper", 1, 0.1, target);
    const double now = target.value(p) + p.log_prior();
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(Gradient, StaysInsideGammaSupport) {
  HyperParams p;
  p.add("a", 0.1, "hyper", PriorSpec::gamma(1.0, 1.0));
  p.add("b", -1.0, "other");
  struct Push {
    double value(const HyperParams& q) const { return -10.0 * q["a"]; }
    std::vector<double> gradient(const HyperParams&, const std::vector<std::string>& n) const {
      return std::vector<double>(n.size(), -10.0);
    }
  };
  gradient_ascent(p, "hyper", 5, 1.0, Push{});
  EXPECT_GT(p["a"], 0.0);
  EXPECT_LT(p["a"], 0.1);
}

TEST(Gradient, NonFiniteGradientNamesParameter) {
  HyperParams p;
  p.add("a", 1.0, "hyper");
  try {
    gradient_ascent(p, "hyper", 1, 0.1, NanGradient{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
  }
}

TEST(Gradient, BadStepSizeRejected) {
  HyperParams p;
  p.add("a", 1.0, "hyper");
  EXPECT_THROW(gradient_ascent(p, "hyper", 1, 0.0, Quadratic{}), ConfigError);
}
