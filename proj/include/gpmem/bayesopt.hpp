#pragma once

// Thompson-sampling Bayesian optimisation on top of the memoizer: tau_update
// moves the SE hyperparameters, then an action is chosen by a Monte Carlo
// argmax over candidates or by the tau_search chain, then probed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gpmem/gp.hpp"
#include "gpmem/inference.hpp"
#include "gpmem/memo.hpp"

namespace gpmem {

// exp(-0.1|x-2|) * 10 cos(0.4x) + 0.2
inline double tutorial_objective(double x) { return std::exp(-0.1 * std::abs(x - 2.0)) * 10.0 * std::cos(0.4 * x) + 0.2; }

enum class SearchMode { UniformArgmax, DriftArgmax, TauSearch };

inline std::string to_string(SearchMode m) {
  switch (m) {
    case SearchMode::UniformArgmax: return "uniform";
    case SearchMode::DriftArgmax: return "drift";
    case SearchMode::TauSearch: return "tau-search";
  }
  return {};
}

inline SearchMode search_mode_from_string(const std::string& s) {
  if (s == "uniform") return SearchMode::UniformArgmax;
  if (s == "drift") return SearchMode::DriftArgmax;
  if (s == "tau-search" || s == "tau_search") return SearchMode::TauSearch;
  throw ConfigError("unknown search mode '" + s + "' (expected uniform, drift or tau-search)");
}

struct BayesOptConfig {
  double lo = -20.0;
  double hi = 20.0;
  std::size_t iterations = 15;
  std::size_t candidates = 20;
  double temperature = 1.0;  // s
  std::size_t navg = 10;
  double drift_width = 1.0;  // varsigma_prop
  std::size_t update_steps = 50;
  std::size_t search_steps = 30;
  SearchMode mode = SearchMode::UniformArgmax;
  std::size_t grid_points = 512;
  double prior_hi = 10.0;  // sigma, l ~ Uniform(0, prior_hi)
  std::optional<double> initial_action;

  void validate() const {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw ConfigError("bounds must satisfy lo < hi");
    if (candidates == 0) throw ConfigError("need at least one candidate");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (navg == 0) throw ConfigError("navg must be at least 1");
    if (!(drift_width > 0.0) || !std::isfinite(drift_width)) throw ConfigError("drift width must be positive");
    if (grid_points < 2) throw ConfigError("grid needs at least two points");
    if (!(prior_hi > 0.0)) throw ConfigError("prior upper bound must be positive");
    if (initial_action && !(*initial_action >= lo && *initial_action <= hi))
      throw ConfigError("initial action lies outside the bounds");
  }
};

struct BanditState {
  std::vector<double> actions;
  std::vector<double> rewards;
  double sigma = 1.0;
  double ell = 1.0;
};

// SE marginal log likelihood of the bandit history; 0 with no history.
inline double bandit_log_likelihood(std::span<const double> a, std::span<const double> r, double sigma, double ell) {
  if (a.empty()) return 0.0;
  HyperParams p;
  p.add("sf", sigma, "hyper");
  p.add("l", ell, "hyper");
  return GpFit(BoundKernel(se("sf", "l"), p), a, r).log_likelihood();
}

struct TauUpdateStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t numeric_rejections = 0;
};

// Alternating single-variable MH on (sigma, l): proposals from the
// Uniform(0, prior_hi) prior, accepted by the full marginal-likelihood ratio.
// `loglik(sigma, l)` may throw gpmem::Error, which rejects the proposal.
template <class LogLik>
void tau_update(double& sigma, double& ell, std::size_t steps, const LogLik& loglik, Rng& rng,
                double prior_hi = 10.0, TauUpdateStats* stats = nullptr) {
  auto eval = [&](double s, double l) {
    try {
      const double v = loglik(s, l);
      return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  if (steps == 0) return;
  double cur = eval(sigma, ell);
  for (std::size_t i = 0; i < steps; ++i) {
    double ns = sigma, nl = ell;
    double& target = (i % 2 == 0) ? ns : nl;
    target = 0.0;
    while (!(target > 0.0 && target < prior_hi)) target = uniform(rng, 0.0, prior_hi);
    if (stats) ++stats->proposals;
    const double next = eval(ns, nl);
    if (!std::isfinite(next)) {
      if (stats) ++stats->numeric_rejections;
      continue;
    }
    if (detail::accept(next - cur, rng)) {
      sigma = ns;
      ell = nl;
      cur = next;
      if (stats) ++stats->accepted;
    }
  }
}

inline void tau_update(BanditState& st, std::size_t steps, Rng& rng, double prior_hi = 10.0,
                       TauUpdateStats* stats = nullptr) {
  tau_update(
      st.sigma, st.ell, steps,
      [&](double s, double l) { return bandit_log_likelihood(st.actions, st.rewards, s, l); }, rng, prior_hi, stats);
}

// Average of navg independent single-point draws from `sample(x, rng)`.
template <class PointSampler>
double mu_tilde(const PointSampler& sample, double x, std::size_t navg, Rng& rng) {
  if (navg == 0) throw ConfigError("navg must be at least 1");
  double total = 0.0;
  for (std::size_t i = 0; i < navg; ++i) total += sample(x, rng);
  return total / static_cast<double>(navg);
}

struct TauSearchStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t out_of_bounds = 0;
  std::size_t failures = 0;
  // Estimated value drop of each accepted proposal (negative = it got worse).
  std::vector<double> accepted_gaps;
};

// MH-like walk over actions from x_current with N(x, width^2) proposals.
// `estimate(x, rng)` returns mu_tilde(x). Both points are re-estimated on every
// step; the proposal is accepted when log u < (mu(x') - mu(x)) / s.
template <class Estimator>
double tau_search(const Estimator& estimate, double x_current, std::size_t steps, double s, double width, double lo,
                  double hi, Rng& rng, TauSearchStats* stats = nullptr) {
  if (!(s > 0.0)) throw ConfigError("temperature must be positive");
  double x = x_current;
  for (std::size_t i = 0; i < steps; ++i) {
    const double xp = x + width * standard_normal(rng);
    if (stats) ++stats->proposals;
    if (!(xp >= lo && xp <= hi)) {
      if (stats) ++stats->out_of_bounds;
      continue;
    }
    double mp = 0.0, mc = 0.0;
    try {
      mp = estimate(xp, rng);
      mc = estimate(x, rng);
    } catch (const Error&) {
      if (stats) ++stats->failures;
      continue;
    }
    const double gap = mp - mc;
    if (std::log(uniform_open(rng)) < gap / s) {
      x = xp;
      if (stats) {
        ++stats->accepted;
        stats->accepted_gaps.push_back(gap);
      }
    }
  }
  return x;
}

// Candidate actions for one argmax: uniform over the bounds, or
// N(last, width^2) clamped to the bounds.
inline std::vector<double> draw_candidates(SearchMode mode, std::optional<double> last, const BayesOptConfig& cfg,
                                           Rng& rng) {
  std::vector<double> c(cfg.candidates);
  if (mode == SearchMode::DriftArgmax) {
    if (!last) throw ConfigError("drift candidates need a previous action");
    for (auto& v : c) v = std::clamp(*last + cfg.drift_width * standard_normal(rng), cfg.lo, cfg.hi);
  } else {
    for (auto& v : c) v = uniform(rng, cfg.lo, cfg.hi);
  }
  return c;
}

// One draw of the sampler per candidate; the first largest value wins.
template <class PointSampler>
double argmax_of_draws(const PointSampler& sample, const std::vector<double>& candidates, Rng& rng) {
  if (candidates.empty()) throw ConfigError("no candidates");
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = sample(candidates[i], rng);
    if (v > best_v || i == 0) {
      best_v = v;
      best = i;
    }
  }
  return candidates[best];
}

template <class PointSampler>
double mc_argmax(const PointSampler& sample, SearchMode mode, std::optional<double> last, const BayesOptConfig& cfg,
                 Rng& rng) {
  const auto candidates = draw_candidates(mode, last, cfg, rng);
  return argmax_of_draws(sample, candidates, rng);
}

struct TraceRecord {
  std::size_t iteration = 0;
  double action = 0.0;
  double reward = 0.0;
  double sigma = 0.0;
  double ell = 0.0;
  double best_action = 0.0;
  double best_reward = 0.0;
  double grid_argmax = 0.0;
};

struct BayesOptResult {
  std::vector<TraceRecord> trace;
  BanditState state;
  std::optional<std::string> failure;  // set when the objective failed
  std::size_t objective_calls = 0;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

// Runs config.iterations rounds of update, search and probe. An objective
// failure stops the run; the trace and state up to that point are kept.
inline BayesOptResult thompson_run(SourceFunction objective, const BayesOptConfig& cfg, Rng& rng,
                                   const std::function<void(const TraceRecord&)>& on_record = {}) {
  cfg.validate();
  BanditState st;
  st.sigma = uniform(rng, 0.0, cfg.prior_hi);
  st.ell = uniform(rng, 0.0, cfg.prior_hi);
  while (!(st.sigma > 0.0)) st.sigma = uniform(rng, 0.0, cfg.prior_hi);
  while (!(st.ell > 0.0)) st.ell = uniform(rng, 0.0, cfg.prior_hi);
  HyperParams params;
  params.add("sf", st.sigma, "hyper", PriorSpec::uniform(0.0, cfg.prior_hi));
  params.add("l", st.ell, "hyper", PriorSpec::uniform(0.0, cfg.prior_hi));
  auto memo = memoize(std::move(objective), se("sf", "l"), params);
  Prober& prober = memo.first;
  Emulator& emu = memo.second;

  BayesOptResult result;
  const auto grid = linspace(cfg.lo, cfg.hi, cfg.grid_points);
  auto sampler = [&emu](double x, Rng& r) { return emu.emulate_point(x, r); };
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    tau_update(st, cfg.update_steps, rng, cfg.prior_hi);
    params.set("sf", st.sigma);
    params.set("l", st.ell);
    emu.set_params(params);

    double x = 0.0;
    if (st.actions.empty()) {
      x = cfg.initial_action ? *cfg.initial_action : uniform(rng, cfg.lo, cfg.hi);
    } else if (cfg.mode == SearchMode::TauSearch) {
      auto estimator = [&](double q, Rng& r) { return mu_tilde(sampler, q, cfg.navg, r); };
      x = tau_search(estimator, st.actions.back(), cfg.search_steps, cfg.temperature, cfg.drift_width, cfg.lo, cfg.hi,
                     rng);
    } else {
      x = mc_argmax(sampler, cfg.mode, st.actions.back(), cfg, rng);
    }

    double y = 0.0;
    try {
      const std::size_t before = prober.invocations();
      y = prober.compute(x);
      result.objective_calls += prober.invocations() - before;
    } catch (const Error& e) {
      result.failure = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    st.actions.push_back(x);
    st.rewards.push_back(y);

    TraceRecord rec;
    rec.iteration = it;
    rec.action = x;
    rec.reward = y;
    rec.sigma = st.sigma;
    rec.ell = st.ell;
    const auto best = static_cast<std::size_t>(std::max_element(st.rewards.begin(), st.rewards.end()) -
                                               st.rewards.begin());
    rec.best_action = st.actions[best];
    rec.best_reward = st.rewards[best];
    const Vector mean = emu.fit().posterior_mean(grid);
    Eigen::Index gi = 0;
    mean.maxCoeff(&gi);
    rec.grid_argmax = grid[static_cast<std::size_t>(gi)];
    result.trace.push_back(rec);
    if (on_record) on_record(rec);
  }
  result.state = std::move(st);
  return result;
}

}  // namespace gpmem
