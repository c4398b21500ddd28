#pragma once

// The four end-to-end workflows (regression, structure discovery, queries,
// Bayesian optimisation) plus their file outputs. Every output embeds a schema
// tag and the run configuration.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "gpmem/algebra.hpp"
#include "gpmem/bayesopt.hpp"
#include "gpmem/data.hpp"
#include "gpmem/gp.hpp"
#include "gpmem/inference.hpp"
#include "gpmem/query.hpp"
#include "gpmem/schedule.hpp"
#include "gpmem/structure.hpp"

namespace gpmem {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Everything that determines a run's outputs.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::string data;  // csv path or generator id
  std::size_t steps = 0;
  std::string schedule;
  std::string kernel;
  std::size_t chains = 1;
  std::string query;
  json extra = json::object();  // workflow-specific settings
};

inline json to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["data"] = c.data;
  j["steps"] = c.steps;
  j["schedule"] = c.schedule;
  j["kernel"] = c.kernel;
  j["chains"] = c.chains;
  if (!c.query.empty()) j["query"] = c.query;
  for (auto it = c.extra.begin(); it != c.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline json header(const std::string& kind, const RunConfig& c) {
  json j;
  j["schema"] = "gpmem." + kind + "/" + std::to_string(kSchemaVersion);
  j["config"] = to_json(c);
  return j;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  return out;
}

inline void write_csv_header(std::ostream& os, const std::string& kind, const RunConfig& c) {
  os << "# " << header(kind, c).dump() << '\n';
}

inline void write_json_file(const std::filesystem::path& p, const json& j) {
  auto out = open_output(p);
  out << j.dump(2) << '\n';
}

}  // namespace detail

inline json theta_json(const std::map<std::string, double>& theta) {
  json j = json::object();
  for (const auto& [k, v] : theta) j[k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Regression with hierarchical Gamma hyperpriors.

inline const std::string kDefaultRegressKernel = "SE(sf,l) + WN(sigma)";
inline const std::string kDefaultRegressSchedule = "repeat(100, do(mh(hyperhyper, 2), mh(hyper, 1)))";

// Each kernel parameter p ~ Gamma(alpha_p, beta_p) in scope "hyper", with
// alpha_p, beta_p ~ Gamma(5, 1) in scope "hyperhyper"; values drawn from the
// prior top-down.
inline HyperParams hierarchical_params(const KernelExpr& kernel, Rng& rng) {
  HyperParams p;
  const PriorSpec top = PriorSpec::gamma(5.0, 1.0);
  for (const auto& name : kernel.param_names()) {
    p.add("alpha_" + name, 1.0, "hyperhyper", top);
    p.add("beta_" + name, 1.0, "hyperhyper", top);
    p.set("alpha_" + name, top.sample(rng, p));
    p.set("beta_" + name, top.sample(rng, p));
    const PriorSpec child = PriorSpec::gamma("alpha_" + name, "beta_" + name);
    p.add(name, 1.0, "hyper", child);
    p.set(name, child.sample(rng, p));
  }
  return p;
}

struct RegressOptions {
  std::string kernel = kDefaultRegressKernel;
  std::string schedule = kDefaultRegressSchedule;
  std::size_t grid_points = 201;
  std::size_t paths = 5;
};

struct RegressRecord {
  std::size_t repetition = 0;
  double log_likelihood = 0.0;
  double log_target = 0.0;
  std::map<std::string, double> theta;
};

struct GridRow {
  double x, mean, lo, hi;
};

struct RegressResult {
  HyperParams initial;
  HyperParams final_params;
  std::vector<RegressRecord> records;
  std::vector<GridRow> grid;
  std::vector<std::vector<double>> paths;  // paths[k][i] at grid[i].x
  MhStats stats;
  double initial_log_target = 0.0;
  double final_log_target = 0.0;
};

inline std::vector<double> predictive_mean(const KernelExpr& kernel, const HyperParams& params, const Dataset& d,
                                           std::span<const double> xq) {
  const Vector m = GpFit(GPModel{kernel, params}, d.xs, d.ys).posterior_mean(xq);
  return {m.data(), m.data() + m.size()};
}

inline RegressResult run_regress(const Dataset& data, const RegressOptions& opts, std::uint64_t seed) {
  data.validate();
  if (opts.grid_points < 2) throw ConfigError("grid needs at least two points");
  const KernelExpr kernel = parse_kernel(opts.kernel);
  const ScheduleStep schedule = parse_schedule(opts.schedule);
  Rng rng(seed);
  HyperParams params = hierarchical_params(kernel, rng);
  const GpTarget target(kernel, data.xs, data.ys);
  auto log_target = [&](const HyperParams& p) {
    try {
      return target.value(p) + p.log_prior();
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  RegressResult res;
  res.initial = params;
  res.initial_log_target = log_target(params);
  HyperRunner<GpTarget> runner(params, target, rng);
  run_schedule(schedule, runner, [&](std::size_t rep) {
    RegressRecord r;
    r.repetition = rep;
    try {
      r.log_likelihood = target.value(params);
    } catch (const Error&) {
      r.log_likelihood = -std::numeric_limits<double>::infinity();
    }
    r.log_target = r.log_likelihood + params.log_prior();
    r.theta = params.snapshot();
    res.records.push_back(std::move(r));
  });
  res.stats = runner.stats();
  res.final_params = params;
  res.final_log_target = log_target(params);

  const auto [mn, mx] = std::minmax_element(data.xs.begin(), data.xs.end());
  const auto grid = linspace(*mn, *mx, opts.grid_points);
  const PosteriorGaussian post = GpFit(GPModel{kernel, params}, data.xs, data.ys).posterior(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double sd = std::sqrt(std::max(post.cov(ii, ii), 0.0));
    res.grid.push_back({grid[i], post.mean(ii), post.mean(ii) - 2.0 * sd, post.mean(ii) + 2.0 * sd});
  }
  for (std::size_t k = 0; k < opts.paths; ++k) {
    const Vector path = sample_joint(post, rng);
    res.paths.emplace_back(path.data(), path.data() + path.size());
  }
  return res;
}

inline void write_regress(const std::filesystem::path& dir, const RegressResult& r, const RunConfig& cfg) {
  {
    auto out = detail::open_output(dir / "samples.jsonl");
    out << header("regress-samples", cfg).dump() << '\n';
    for (const auto& rec : r.records) {
      json j;
      j["rep"] = rec.repetition;
      j["log_likelihood"] = rec.log_likelihood;
      j["log_target"] = rec.log_target;
      j["theta"] = theta_json(rec.theta);
      out << j.dump() << '\n';
    }
  }
  {
    auto out = detail::open_output(dir / "grid.csv");
    detail::write_csv_header(out, "regress-grid", cfg);
    out << "x,mean,lo,hi\n";
    for (const auto& g : r.grid)
      out << format_double(g.x) << ',' << format_double(g.mean) << ',' << format_double(g.lo) << ','
          << format_double(g.hi) << '\n';
  }
  {
    auto out = detail::open_output(dir / "paths.csv");
    detail::write_csv_header(out, "regress-paths", cfg);
    out << "x";
    for (std::size_t k = 0; k < r.paths.size(); ++k) out << ",path" << k;
    out << '\n';
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
      out << format_double(r.grid[i].x);
      for (const auto& p : r.paths) out << ',' << format_double(p[i]);
      out << '\n';
    }
  }
  json res = header("regress", cfg);
  res["initial_theta"] = theta_json(r.initial.snapshot());
  res["final_theta"] = theta_json(r.final_params.snapshot());
  res["initial_log_target"] = r.initial_log_target;
  res["final_log_target"] = r.final_log_target;
  res["proposals"] = r.stats.proposals;
  res["accepted"] = r.stats.accepted;
  res["numeric_rejections"] = r.stats.numeric_rejections;
  json tr = json::object();
  for (const auto& [scope, n] : r.stats.transitions) tr[scope] = n;
  res["transitions"] = tr;
  detail::write_json_file(dir / "result.json", res);
}

// ---------------------------------------------------------------------------
// Structure discovery.

struct DiscoverOptions {
  std::size_t repetitions = 200;
  std::optional<std::string> schedule;  // overrides the default schedule
  std::size_t chains = 1;
  double burn_in = 0.25;
  double p_add = 0.5;
};

struct DiscoverResult {
  PosteriorSampleSet samples;
  std::vector<MhStats> chain_stats;
  std::string schedule;
};

inline DiscoverResult run_discover(const Dataset& data, const DiscoverOptions& opts, std::uint64_t seed) {
  data.validate();
  if (opts.chains == 0) throw ConfigError("need at least one chain");
  DiscoveryOptions d;
  d.schedule = opts.schedule ? parse_schedule(*opts.schedule) : default_discovery_schedule("hyper-parameters", opts.repetitions);
  d.burn_in = opts.burn_in;
  {
    // Validate scopes before any thread starts.
    Rng probe(seed);
    const auto defaults = default_grammar(probe);
    for (const auto& scope : scopes_of(d.schedule))
      if (scope != kGrammarScope && defaults.second.members(scope).empty())
        throw ConfigError("schedule references undefined scope(s): " + scope);
  }
  std::vector<PosteriorSampleSet> per_chain(opts.chains);
  std::vector<MhStats> stats(opts.chains);
  std::vector<std::exception_ptr> errors(opts.chains);
  auto work = [&](std::size_t c) {
    try {
      Rng rng(opts.chains == 1 ? seed : derive_seed(seed, c));
      auto [grammar, params] = default_grammar(rng);
      grammar.p_add = opts.p_add;
      DiscoveryOptions local = d;
      local.chain = c;
      per_chain[c] = run_structure_discovery(data.xs, data.ys, grammar, params, local, rng, &stats[c]);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (opts.chains == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < opts.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  DiscoverResult r;
  r.samples = PosteriorSampleSet::merge(per_chain);
  r.chain_stats = std::move(stats);
  r.schedule = to_string(d.schedule);
  return r;
}

// Functional form of a sample's kernel after simplification, with values.
inline std::string functional_form(const PosteriorSample& s) {
  if (!s.kernel) return s.structure.to_string();
  HyperParams p;
  for (const auto& [k, v] : s.theta) p.add(k, v, "snapshot");
  return to_string(simplify(parse_to_sum_of_products(*s.kernel, p)), 3);
}

inline void write_discover(const std::filesystem::path& dir, const DiscoverResult& r, const RunConfig& cfg) {
  {
    auto out = detail::open_output(dir / "samples.jsonl");
    write_samples_jsonl(out, r.samples, header("samples", cfg));
  }
  const auto rows = r.samples.marginal();
  {
    auto out = detail::open_output(dir / "marginal.csv");
    detail::write_csv_header(out, "marginal", cfg);
    out << "structure,count,probability,mean_log_likelihood\n";
    for (const auto& row : rows)
      out << '"' << row.structure.to_string() << "\"," << row.count << ',' << format_double(row.probability) << ','
          << format_double(row.mean_log_likelihood) << '\n';
  }
  json res = header("discover", cfg);
  res["samples"] = r.samples.size();
  json table = json::array();
  for (const auto& row : rows) {
    json j;
    j["structure"] = row.structure.to_string();
    j["count"] = row.count;
    j["probability"] = row.probability;
    j["mean_log_likelihood"] = row.mean_log_likelihood;
    table.push_back(j);
  }
  res["marginal"] = table;
  if (!rows.empty()) {
    const PosteriorSample* rep = r.samples.representative(rows.front().structure);
    json peak;
    peak["structure"] = rows.front().structure.to_string();
    peak["probability"] = rows.front().probability;
    if (rep) {
      peak["kernel"] = rep->kernel ? to_string(*rep->kernel) : "";
      peak["functional_form"] = functional_form(*rep);
      json used = json::object();
      if (rep->kernel)
        for (const auto& name : rep->kernel->param_names()) used[name] = rep->theta.at(name);
      peak["theta"] = used;
    }
    res["peak"] = peak;
  }
  json chains = json::array();
  for (const auto& s : r.chain_stats) {
    json j;
    j["proposals"] = s.proposals;
    j["accepted"] = s.accepted;
    j["numeric_rejections"] = s.numeric_rejections;
    chains.push_back(j);
  }
  res["chains"] = chains;
  detail::write_json_file(dir / "result.json", res);
}

// ---------------------------------------------------------------------------
// Queries.

inline PosteriorSampleSet load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_samples_jsonl(in);
}

inline json to_json(const QueryResult& r) {
  json j;
  j["query"] = r.query;
  j["probability"] = r.probability;
  j["samples"] = r.samples;
  json terms = json::array();
  for (const auto& [t, p] : r.terms) {
    json e;
    e["term"] = t;
    e["probability"] = p;
    terms.push_back(e);
  }
  j["terms"] = terms;
  return j;
}

// ---------------------------------------------------------------------------
// Bayesian optimisation.

// Runs `program` once per probe with x on its standard input and parses the
// first token of its standard output as y.
inline SourceFunction command_objective(const std::string& program) {
  if (program.empty()) throw ConfigError("objective command is empty");
  return [program](double x) {
    const std::string cmd = "printf '%s\\n' " + format_double(x) + " | " + program;
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe) throw DataError("cannot start objective '" + program + "'");
    std::string out;
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe.get())) out += buf;
    const int status = pclose(pipe.release());
    if (status != 0) throw DataError("objective '" + program + "' exited with status " + std::to_string(status));
    std::istringstream is(out);
    std::string token;
    is >> token;
    double y = 0.0;
    if (!detail::parse_double(token, y)) throw DataError("objective printed '" + token + "', not a number");
    return y;
  };
}

inline SourceFunction make_objective(const std::string& spec) {
  if (spec == "demo") return tutorial_objective;
  if (spec.rfind("cmd:", 0) == 0) return command_objective(spec.substr(4));
  throw ConfigError("unknown objective '" + spec + "' (expected demo or cmd:<program>)");
}

inline json to_json(const TraceRecord& r) {
  json j;
  j["iteration"] = r.iteration;
  j["action"] = r.action;
  j["reward"] = r.reward;
  j["sigma"] = r.sigma;
  j["l"] = r.ell;
  j["best_action"] = r.best_action;
  j["best_reward"] = r.best_reward;
  j["grid_argmax"] = r.grid_argmax;
  return j;
}

inline json to_json(const BayesOptConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["lo"] = c.lo;
  j["hi"] = c.hi;
  j["iterations"] = c.iterations;
  j["candidates"] = c.candidates;
  j["temperature"] = c.temperature;
  j["navg"] = c.navg;
  j["drift_width"] = c.drift_width;
  j["update_steps"] = c.update_steps;
  j["search_steps"] = c.search_steps;
  j["grid_points"] = c.grid_points;
  if (c.initial_action) j["initial_action"] = *c.initial_action;
  return j;
}

// Streams the trace as it is produced so a failed run leaves a partial trace.
inline BayesOptResult run_and_write_optimize(const std::filesystem::path& dir, SourceFunction objective,
                                             const BayesOptConfig& bo, const RunConfig& cfg) {
  bo.validate();
  auto trace = detail::open_output(dir / "trace.jsonl");
  trace << header("trace", cfg).dump() << '\n';
  Rng rng(cfg.seed);
  BayesOptResult r = thompson_run(std::move(objective), bo, rng, [&](const TraceRecord& rec) {
    trace << to_json(rec).dump() << '\n';
    trace.flush();
  });
  {
    auto out = detail::open_output(dir / "best.csv");
    detail::write_csv_header(out, "best", cfg);
    out << "iteration,best_action,best_reward,grid_argmax\n";
    for (const auto& t : r.trace)
      out << t.iteration << ',' << format_double(t.best_action) << ',' << format_double(t.best_reward) << ','
          << format_double(t.grid_argmax) << '\n';
  }
  json res = header("optimize", cfg);
  res["iterations_completed"] = r.trace.size();
  res["objective_calls"] = r.objective_calls;
  if (!r.trace.empty()) {
    res["best_action"] = r.trace.back().best_action;
    res["best_reward"] = r.trace.back().best_reward;
  }
  res["sigma"] = r.state.sigma;
  res["l"] = r.state.ell;
  if (r.failure) res["failure"] = *r.failure;
  detail::write_json_file(dir / "result.json", res);
  return r;
}

// ---------------------------------------------------------------------------
// Data generation.

inline Dataset generate_dataset(const std::string& generator, std::size_t n, std::uint64_t seed) {
  if (generator == "neal") return gen_neal(n, seed);
  return gen_gp(generator, n, seed);
}

// A --data argument is a csv path, or "gen:<generator>[:n]".
inline Dataset resolve_dataset(const std::string& spec, std::uint64_t seed) {
  if (spec.rfind("gen:", 0) == 0) {
    std::string rest = spec.substr(4);
    std::size_t n = 100;
    if (const auto colon = rest.find(':'); colon != std::string::npos) {
      const std::string count = rest.substr(colon + 1);
      rest = rest.substr(0, colon);
      auto [p, ec] = std::from_chars(count.data(), count.data() + count.size(), n);
      if (ec != std::errc() || p != count.data() + count.size() || n == 0)
        throw ConfigError("bad dataset size in '" + spec + "'");
    }
    return generate_dataset(rest, n, seed);
  }
  return load_csv(spec);
}

}  // namespace gpmem
