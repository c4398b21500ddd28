#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpmem/gpmem.hpp"
#include "oracles.hpp"

using namespace gpmem;

namespace {

HyperParams se_params(double sf, double l, double s) {
  HyperParams p;
  p.add("sf", sf, "hyper");
  p.add("l", l, "hyper");
  p.add("s", s, "hyper");
  return p;
}

const KernelExpr kSeWn = add_funcs(se("sf", "l"), wn("s"));

}  // namespace

TEST(Memo, RepeatedProbeCallsSourceOnce) {
  int calls = 0;
  auto [probe, emu] = memoize([&](double x) { ++calls; return x * x; }, kSeWn, se_params(1, 1, 0.1));
  EXPECT_EQ(probe.compute(1.5), 2.25);
  EXPECT_EQ(probe.compute(1.5), 2.25);
  EXPECT_EQ(probe(1.5), 2.25);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(probe.invocations(), 1u);
  EXPECT_EQ(probe.table().size(), 1u);
  probe.compute(std::nextafter(1.5, 2.0));
  EXPECT_EQ(calls, 2);
}

TEST(Memo, ObservationDoesNotShortCircuitProbe) {
  int calls = 0;
  auto [probe, emu] = memoize([&](double x) { ++calls; return x; }, kSeWn, se_params(1, 1, 0.1));
  emu.observe(2.0, 5.0);
  EXPECT_EQ(probe.compute(2.0), 2.0);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(emu.table().size(), 2u);
}

TEST(Memo, ProbedAndObservedPointsConditionIdentically) {
  const auto f = [](double x) { return std::sin(x) + 0.1 * x; };
  auto [pa, ea] = memoize(f, kSeWn, se_params(1.2, 0.9, 0.2));
  auto [pb, eb] = memoize(f, kSeWn, se_params(1.2, 0.9, 0.2));
  for (double x : {-2.0, 0.3, 1.1, 4.0}) {
    pa.compute(x);
    eb.observe(x, f(x));
  }
  const std::vector<double> xq{-3.0, 0.0, 0.5, 2.5, 6.0};
  const auto a = ea.posterior(xq), b = eb.posterior(xq);
  EXPECT_LE((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(ea.log_likelihood(), eb.log_likelihood(), 1e-12);
}

TEST(Memo, ForgetRestoresPosterior) {
  auto [probe, emu] = memoize(tutorial_objective, kSeWn, se_params(4, 3, 0.3));
  probe.compute(-5.0);
  probe.compute(1.0);
  const std::vector<double> xq{-8.0, -2.0, 0.0, 3.0, 9.0};
  const auto before = emu.posterior(xq);
  emu.observe(0.5, 3.0, "extra");
  emu.observe(2.5, -1.0, "extra");
  emu.observe(7.0, 4.0, "other");
  EXPECT_EQ(emu.forget("extra"), 2u);
  EXPECT_EQ(emu.forget("other"), 1u);
  EXPECT_EQ(emu.forget("missing"), 0u);
  const auto after = emu.posterior(xq);
  EXPECT_LE((before.mean - after.mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((before.cov - after.cov).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(probe.table().size(), 2u);
}

TEST(Memo, ForgetKeepsProbedEntries) {
  auto [probe, emu] = memoize([](double x) { return x; }, kSeWn, se_params(1, 1, 0.1));
  probe.compute(1.0);
  emu.observe(2.0, 2.0, "a");
  emu.forget("a");
  ASSERT_EQ(emu.table().size(), 1u);
  EXPECT_EQ(emu.table().entries()[0].origin, Origin::Probed);
}

TEST(Memo, ProbingShrinksUncertainty) {
  HyperParams p;
  p.add("sf", 4.0, "hyper");
  p.add("l", 4.0, "hyper");
  p.add("s", 0.01, "hyper");
  auto [probe, emu] = memoize(tutorial_objective, kSeWn, p);
  emu.observe(-3.1, 2.60);
  emu.observe(7.8, -7.60);
  emu.observe(0.0, 10.19);
  const double prior_sd = std::sqrt(16.0 + 1e-4);
  const double before = std::sqrt(emu.predict(12.6).second);
  probe.compute(12.6);
  const double after = std::sqrt(emu.predict(12.6).second);
  EXPECT_GT(before, 0.1 * prior_sd);
  EXPECT_LT(after, 0.1 * prior_sd);
  EXPECT_NEAR(emu.predict(12.6).first, tutorial_objective(12.6), 1e-3);
}

TEST(Memo, IncrementalFitMatchesFreshFactorisation) {
  auto [probe, emu] = memoize(tutorial_objective, kSeWn, se_params(4, 3, 0.3));
  emu.fit();  // build the cache so later probes extend it
  oracle::KernelGen gen(31);
  for (double x : gen.points(12, -20, 20)) probe.compute(x);
  EXPECT_GT(emu.fit().incremental_updates(), 0u);
  const GpFit fresh(emu.model(), emu.table().xs(), emu.table().ys());
  const std::vector<double> xq{-15.0, -1.0, 4.0, 17.0};
  const auto a = emu.posterior(xq), b = fresh.posterior(xq);
  EXPECT_LE((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Memo, SourceFailureLeavesTableUntouched) {
  auto [probe, emu] = memoize(
      [](double x) -> double {
        if (x > 5) throw std::runtime_error("out of range");
        if (x < -5) return std::numeric_limits<double>::quiet_NaN();
        return x;
      },
      kSeWn, se_params(1, 1, 0.1));
  probe.compute(0.0);
  try {
    probe.compute(6.0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("x=6"), std::string::npos);
  }
  EXPECT_THROW(probe.compute(-6.0), DataError);
  EXPECT_EQ(probe.table().size(), 1u);
  EXPECT_THROW(emu.observe(1.0, std::numeric_limits<double>::infinity()), DataError);
}

TEST(Memo, UnresolvedKernelParameterRejected) {
  HyperParams p;
  p.add("sf", 1.0, "hyper");
  EXPECT_THROW(memoize([](double x) { return x; }, se("sf", "l"), p), ConfigError);
}

TEST(Memo, EmulateDrawsAreFreshButSeeded) {
  auto [probe, emu] = memoize(tutorial_objective, kSeWn, se_params(4, 3, 0.3));
  probe.compute(0.0);
  const std::vector<double> xq{-2.0, 3.0};
  Rng a(1), b(1);
  const Vector d1 = emu.emulate(xq, a), d2 = emu.emulate(xq, a);
  EXPECT_NE(d1, d2);
  EXPECT_EQ(d1, emu.emulate(xq, b));
  EXPECT_THROW(emu.emulate(std::vector<double>{}, a), ConfigError);
}

TEST(Memo, NewHyperparametersKeepTable) {
  auto [probe, emu] = memoize(tutorial_objective, kSeWn, se_params(4, 3, 0.3));
  probe.compute(1.0);
  probe.compute(2.0);
  const double ll = emu.log_likelihood();
  emu.set_param("l", 1.0);
  EXPECT_EQ(emu.table().size(), 2u);
  EXPECT_NE(emu.log_likelihood(), ll);
  EXPECT_EQ(probe.invocations(), 2u);
}

TEST(Memo, EmptyTableEmulatesPrior) {
  auto [probe, emu] = memoize(tutorial_objective, kSeWn, se_params(2, 3, 0.5));
  const auto [m, v] = emu.predict(1.0);
  EXPECT_EQ(m, 0.0);
  EXPECT_NEAR(v, 4.25, 1e-12);
}
