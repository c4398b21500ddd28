#pragma once

// Stochastic grammar over kernel compositions, MH over grammar choices and
// tabulation of the posterior over canonical structures.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gpmem/algebra.hpp"
#include "gpmem/gp.hpp"
#include "gpmem/inference.hpp"
#include "gpmem/schedule.hpp"

namespace gpmem {

inline const std::string kGrammarScope = "grammar";

struct BaseKernelSpec {
  BaseKind kind;
  std::vector<std::string> params;

  KernelExpr expr() const { return KernelExpr::base(kind, params); }
};

struct Grammar {
  std::vector<BaseKernelSpec> bk;
  double p_add = 0.5;  // probability that a join is a sum
  // Sigma of the white-noise kernel used when nothing is selected.
  std::string fallback_param;

  std::size_t size() const noexcept { return bk.size(); }

  void validate(const HyperParams& params) const {
    if (bk.empty()) throw ConfigError("base kernel set must not be empty");
    for (std::size_t i = 0; i < bk.size(); ++i) {
      if (bk[i].params.size() != arity(bk[i].kind))
        throw ConfigError("base kernel " + std::string(kind_name(bk[i].kind)) + " has the wrong parameter count");
      for (std::size_t j = 0; j < i; ++j)
        if (bk[j].kind == bk[i].kind) throw ConfigError("base kernel kinds must be distinct");
      for (const auto& p : bk[i].params)
        if (!params.contains(p)) throw ConfigError("unknown hyperparameter '" + p + "'");
    }
    if (!params.contains(fallback_param)) throw ConfigError("unknown fallback parameter '" + fallback_param + "'");
    if (!(p_add >= 0.0 && p_add <= 1.0)) throw ConfigError("operator probability must lie in [0,1]");
  }
};

// BK = [LIN, PER, SE, WN] wired to theta_1..theta_7, each Gamma(5,1) in scope
// "hyper-parameters"; values drawn from the prior.
inline std::pair<Grammar, HyperParams> default_grammar(Rng& rng, const std::string& scope = "hyper-parameters") {
  Grammar g;
  g.bk = {{BaseKind::Lin, {"theta_1"}},
          {BaseKind::Per, {"theta_2", "theta_3", "theta_4"}},
          {BaseKind::SE, {"theta_5", "theta_6"}},
          {BaseKind::WN, {"theta_7"}}};
  g.fallback_param = "theta_7";
  HyperParams params;
  const PriorSpec prior = PriorSpec::gamma(5.0, 1.0);
  for (int i = 1; i <= 7; ++i) params.add("theta_" + std::to_string(i), 1.0, scope, prior);
  for (int i = 1; i <= 7; ++i) {
    const std::string name = "theta_" + std::to_string(i);
    params.set(name, prior.sample(rng, params));
  }
  return {std::move(g), std::move(params)};
}

// One inclusion bit per base kernel, a permutation of all base kernels (the
// selected kernels are composed in the order it induces) and one operator bit
// per possible join. Only the first |S|-1 operator bits are active; the rest
// stay in the state so that every site has a fixed prior.
struct GrammarState {
  std::vector<bool> include;
  std::vector<std::size_t> order;
  std::vector<bool> ops;  // true = sum

  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> out;
    for (auto i : order)
      if (include[i]) out.push_back(i);
    return out;
  }

  std::vector<bool> active_ops() const {
    const auto n = selected().size();
    return std::vector<bool>(ops.begin(), ops.begin() + static_cast<std::ptrdiff_t>(n > 0 ? n - 1 : 0));
  }

  friend bool operator==(const GrammarState&, const GrammarState&) = default;
};

namespace detail {

inline std::vector<std::size_t> random_permutation(std::size_t m, Rng& rng) {
  std::vector<std::size_t> p(m);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = m; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

}  // namespace detail

inline GrammarState sample_grammar_state(const Grammar& g, Rng& rng) {
  const std::size_t m = g.size();
  GrammarState s;
  s.include.resize(m);
  for (std::size_t i = 0; i < m; ++i) s.include[i] = bernoulli(rng, 0.5);
  s.order = detail::random_permutation(m, rng);
  s.ops.resize(m > 0 ? m - 1 : 0);
  for (std::size_t i = 0; i + 1 < m; ++i) s.ops[i] = bernoulli(rng, g.p_add);
  return s;
}

// Right fold: k_1 op_1 (k_2 op_2 (... k_s)). Empty selection gives WN.
inline KernelExpr compose(const Grammar& g, const GrammarState& s) {
  const auto sel = s.selected();
  if (sel.empty()) return wn(g.fallback_param);
  KernelExpr acc = g.bk[sel.back()].expr();
  for (std::size_t i = sel.size() - 1; i-- > 0;) {
    const KernelExpr head = g.bk[sel[i]].expr();
    acc = s.ops[i] ? add_funcs(head, acc) : mult_funcs(head, acc);
  }
  return acc;
}

inline std::pair<GrammarState, KernelExpr> sample_grammar(const Grammar& g, Rng& rng) {
  GrammarState s = sample_grammar_state(g, rng);
  KernelExpr k = compose(g, s);
  return {std::move(s), std::move(k)};
}

enum class GrammarProposal { SingleSite, Independence };

// Number of single-site grammar choices: inclusion bits, the permutation and
// the operator bits.
inline std::size_t grammar_site_count(const Grammar& g) { return g.size() + 1 + (g.size() > 0 ? g.size() - 1 : 0); }

inline GrammarState propose_grammar(const Grammar& g, const GrammarState& s, GrammarProposal mode, Rng& rng) {
  if (mode == GrammarProposal::Independence) return sample_grammar_state(g, rng);
  GrammarState next = s;
  const std::size_t m = g.size();
  const std::size_t site = uniform_index(rng, grammar_site_count(g));
  if (site < m) {
    next.include[site] = bernoulli(rng, 0.5);
  } else if (site == m) {
    next.order = detail::random_permutation(m, rng);
  } else {
    next.ops[site - m - 1] = bernoulli(rng, g.p_add);
  }
  return next;
}

// Log marginal likelihood of the data under a kernel; -inf on numeric failure.
inline double kernel_log_likelihood(const KernelExpr& k, const HyperParams& params, std::span<const double> xs,
                                    std::span<const double> ys) {
  try {
    const double v = GpFit(BoundKernel(k, params), xs, ys).log_likelihood();
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Proposals come from the grammar prior, so acceptance is the likelihood
// ratio under the recomposed kernel.
inline void grammar_mh(const Grammar& g, GrammarState& state, const HyperParams& params, std::span<const double> xs,
                       std::span<const double> ys, std::size_t steps, Rng& rng, MhStats* stats = nullptr,
                       GrammarProposal mode = GrammarProposal::SingleSite) {
  if (xs.empty()) throw ConfigError("grammar inference needs at least one observation");
  if (steps == 0) return;
  double cur = kernel_log_likelihood(compose(g, state), params, xs, ys);
  for (std::size_t i = 0; i < steps; ++i) {
    GrammarState next = propose_grammar(g, state, mode, rng);
    if (stats) {
      ++stats->proposals;
      ++stats->transitions[kGrammarScope];
    }
    const double ll = kernel_log_likelihood(compose(g, next), params, xs, ys);
    if (!std::isfinite(ll)) {
      if (stats) ++stats->numeric_rejections;
      continue;
    }
    if (detail::accept(ll - cur, rng)) {
      state = std::move(next);
      cur = ll;
      if (stats) ++stats->accepted;
    }
  }
}

struct PosteriorSample {
  std::size_t chain = 0;
  std::size_t repetition = 0;
  StructExpr structure;
  std::optional<KernelExpr> kernel;
  std::map<std::string, double> theta;
  double log_likelihood = 0.0;
};

struct MarginalRow {
  StructExpr structure;
  std::size_t count = 0;
  double probability = 0.0;
  double mean_log_likelihood = 0.0;
};

class PosteriorSampleSet {
 public:
  PosteriorSampleSet() = default;
  explicit PosteriorSampleSet(std::vector<PosteriorSample> samples) : samples_(std::move(samples)) {}

  void add(PosteriorSample s) { samples_.push_back(std::move(s)); }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const std::vector<PosteriorSample>& samples() const noexcept { return samples_; }

  // Order-stable concatenation in the given order.
  static PosteriorSampleSet merge(const std::vector<PosteriorSampleSet>& sets) {
    PosteriorSampleSet out;
    for (const auto& s : sets) out.samples_.insert(out.samples_.end(), s.samples_.begin(), s.samples_.end());
    return out;
  }

  // Sorted by probability (descending), ties by structure.
  std::vector<MarginalRow> marginal() const {
    std::map<StructExpr, std::pair<std::size_t, double>> acc;
    for (const auto& s : samples_) {
      auto& a = acc[s.structure];
      ++a.first;
      a.second += s.log_likelihood;
    }
    std::vector<MarginalRow> rows;
    const double T = static_cast<double>(samples_.size());
    for (const auto& [st, a] : acc)
      rows.push_back({st, a.first, static_cast<double>(a.first) / T, a.second / static_cast<double>(a.first)});
    std::stable_sort(rows.begin(), rows.end(), [](const MarginalRow& a, const MarginalRow& b) {
      return a.count > b.count;
    });
    return rows;
  }

  MarginalRow mode() const {
    if (samples_.empty()) throw ConfigError("posterior sample set is empty");
    return marginal().front();
  }

  // Last sample carrying the given structure.
  const PosteriorSample* representative(const StructExpr& s) const {
    for (auto it = samples_.rbegin(); it != samples_.rend(); ++it)
      if (it->structure == s) return &*it;
    return nullptr;
  }

 private:
  std::vector<PosteriorSample> samples_;
};

inline nlohmann::ordered_json to_json(const PosteriorSample& s) {
  nlohmann::ordered_json j;
  j["chain"] = s.chain;
  j["rep"] = s.repetition;
  j["struct"] = s.structure.to_string();
  if (s.kernel) j["kernel"] = to_string(*s.kernel);
  j["log_likelihood"] = s.log_likelihood;
  nlohmann::ordered_json theta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.theta) theta[k] = v;
  j["theta"] = std::move(theta);
  return j;
}

inline PosteriorSample sample_from_json(const nlohmann::json& j) {
  PosteriorSample s;
  s.chain = j.value("chain", std::size_t{0});
  s.repetition = j.at("rep").get<std::size_t>();
  s.structure = StructExpr::parse(j.at("struct").get<std::string>());
  if (j.contains("kernel")) {
    s.kernel = parse_kernel(j.at("kernel").get<std::string>());
    if (!(struct_of(*s.kernel) == s.structure)) throw DataError("sample structure does not match its kernel");
  }
  s.log_likelihood = j.value("log_likelihood", 0.0);
  if (j.contains("theta"))
    for (const auto& [k, v] : j.at("theta").items()) s.theta[k] = v.get<double>();
  return s;
}

// One JSON header line (if given) followed by one record per sample.
inline void write_samples_jsonl(std::ostream& os, const PosteriorSampleSet& set,
                                const std::optional<nlohmann::ordered_json>& header = std::nullopt) {
  if (header) os << header->dump() << '\n';
  for (const auto& s : set.samples()) os << to_json(s).dump() << '\n';
}

// Header lines (objects carrying "schema") are skipped.
inline PosteriorSampleSet read_samples_jsonl(std::istream& is) {
  PosteriorSampleSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("schema")) continue;
      set.add(sample_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("sample log line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError("sample log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return set;
}

// Joint state of a structure-discovery chain; executes schedules whose
// "grammar" scope moves the grammar choices and whose other scopes move
// hyperparameters under the currently composed kernel.
class StructureChain {
 public:
  StructureChain(Grammar grammar, HyperParams params, std::vector<double> xs, std::vector<double> ys, Rng& rng,
                 GrammarProposal proposal = GrammarProposal::SingleSite)
      : grammar_(std::move(grammar)),
        params_(std::move(params)),
        xs_(std::move(xs)),
        ys_(std::move(ys)),
        rng_(rng),
        proposal_(proposal) {
    grammar_.validate(params_);
    if (xs_.empty() || xs_.size() != ys_.size()) throw ConfigError("structure discovery needs matching, non-empty data");
    state_ = sample_grammar_state(grammar_, rng_);
  }

  bool has_scope(const std::string& scope) const {
    return scope == kGrammarScope || !params_.members(scope).empty();
  }

  // Likelihood of the data under the currently composed kernel.
  GpTarget likelihood() const { return GpTarget(kernel(), xs_, ys_); }

  void mh(const std::string& scope, std::size_t steps) {
    if (scope == kGrammarScope) {
      grammar_mh(grammar_, state_, params_, xs_, ys_, steps, rng_, &stats_, proposal_);
      return;
    }
    gpmem::mh(params_, scope, steps, likelihood(), rng_, &stats_);
  }

  void drift(const std::string& scope, std::size_t steps, double width) {
    if (scope == kGrammarScope) throw ConfigError("drift proposals do not apply to grammar choices");
    gpmem::mh_drift(params_, scope, steps, width, likelihood(), rng_, &stats_);
  }

  void gradient(const std::string& scope, std::size_t steps, double step_size) {
    if (scope == kGrammarScope) throw ConfigError("gradient ascent does not apply to grammar choices");
    gpmem::gradient_ascent(params_, scope, steps, step_size, likelihood(), &grad_stats_);
  }

  KernelExpr kernel() const { return compose(grammar_, state_); }
  double log_likelihood() const { return kernel_log_likelihood(kernel(), params_, xs_, ys_); }

  PosteriorSample snapshot(std::size_t repetition, std::size_t chain = 0) const {
    const KernelExpr k = kernel();
    return PosteriorSample{chain, repetition, struct_of(k), k, params_.snapshot(), log_likelihood()};
  }

  const Grammar& grammar() const noexcept { return grammar_; }
  const GrammarState& state() const noexcept { return state_; }
  void set_state(GrammarState s) { state_ = std::move(s); }
  const HyperParams& params() const noexcept { return params_; }
  HyperParams& params() noexcept { return params_; }
  const MhStats& stats() const noexcept { return stats_; }

 private:
  Grammar grammar_;
  HyperParams params_;
  std::vector<double> xs_;
  std::vector<double> ys_;
  Rng& rng_;
  GrammarProposal proposal_;
  GrammarState state_;
  MhStats stats_;
  GradientStats grad_stats_;
};

inline ScheduleStep default_discovery_schedule(const std::string& hyper_scope = "hyper-parameters",
                                               std::size_t repetitions = 200) {
  return ScheduleStep::repeat(repetitions, {ScheduleStep::sequence({ScheduleStep::mh(kGrammarScope, 1),
                                                                    ScheduleStep::mh(hyper_scope, 2)})});
}

struct DiscoveryOptions {
  ScheduleStep schedule = default_discovery_schedule();
  double burn_in = 0.25;  // fraction of outer repetitions discarded
  GrammarProposal proposal = GrammarProposal::SingleSite;
  std::size_t chain = 0;
};

inline std::size_t outer_repetitions(const ScheduleStep& s) {
  return s.kind == ScheduleStep::Kind::Repeat ? s.count : 1;
}

// Runs the schedule and records one sample after every outer repetition,
// dropping the burn-in prefix.
inline PosteriorSampleSet run_structure_discovery(std::vector<double> xs, std::vector<double> ys, Grammar grammar,
                                                  HyperParams params, const DiscoveryOptions& opts, Rng& rng,
                                                  MhStats* stats = nullptr) {
  if (!(opts.burn_in >= 0.0 && opts.burn_in < 1.0)) throw ConfigError("burn-in fraction must lie in [0,1)");
  StructureChain chain(std::move(grammar), std::move(params), std::move(xs), std::move(ys), rng, opts.proposal);
  const std::size_t reps = outer_repetitions(opts.schedule);
  const auto burn = static_cast<std::size_t>(opts.burn_in * static_cast<double>(reps));
  PosteriorSampleSet out;
  run_schedule(opts.schedule, chain, [&](std::size_t rep) {
    if (rep >= burn) out.add(chain.snapshot(rep, opts.chain));
  });
  if (stats) *stats = chain.stats();
  return out;
}

}  // namespace gpmem
