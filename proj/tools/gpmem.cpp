// Command-line front end: regress, discover, query, optimize, gen-data.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gpmem/gpmem.hpp"

namespace {

using gpmem::json;

struct Common {
  std::uint64_t seed = 1;
  std::string data;
  std::string out = "out";
  std::optional<std::size_t> steps;
  std::string schedule;
  std::string kernel;
  std::size_t chains = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_data = true) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  if (with_data)
    cmd->add_option("--data", c.data, "CSV file with columns x,y, or gen:<generator>[:n]")->required();
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--steps", c.steps, "Outer repetitions of the default schedule");
  cmd->add_option("--schedule", c.schedule, "Inference schedule, e.g. repeat(100, do(mh(hyper, 1)))");
  cmd->add_option("--kernel", c.kernel, "Kernel expression, e.g. SE(sf,l) + WN(sigma)");
  cmd->add_option("--chains", c.chains, "Independent chains run concurrently")->capture_default_str();
}

gpmem::RunConfig base_config(const std::string& command, const Common& c) {
  gpmem::RunConfig cfg;
  cfg.command = command;
  cfg.seed = c.seed;
  cfg.data = c.data;
  cfg.steps = c.steps.value_or(0);
  cfg.schedule = c.schedule;
  cfg.kernel = c.kernel;
  cfg.chains = c.chains;
  return cfg;
}

int exit_code_for(const gpmem::Error& e) {
  if (dynamic_cast<const gpmem::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const gpmem::DataError*>(&e)) return 3;
  if (dynamic_cast<const gpmem::NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process memoization: regression, structure discovery, queries and optimisation"};
  app.require_subcommand(1);

  Common regress_opts;
  std::size_t grid_points = 201, paths = 5;
  auto* regress = app.add_subcommand("regress", "Hierarchical-hyperprior GP regression");
  add_common(regress, regress_opts);
  regress->add_option("--grid", grid_points, "Prediction grid size")->capture_default_str();
  regress->add_option("--paths", paths, "Number of emulator sample paths")->capture_default_str();

  Common discover_opts;
  double burn_in = 0.25, p_add = 0.5;
  auto* discover = app.add_subcommand("discover", "Posterior over kernel structures");
  add_common(discover, discover_opts);
  discover->add_option("--burn-in", burn_in, "Fraction of repetitions discarded")->capture_default_str();
  discover->add_option("--p-add", p_add, "Probability that a join is a sum")->capture_default_str();

  std::string samples_path, query_text;
  std::optional<std::string> query_out;
  auto* query = app.add_subcommand("query", "Probability of a Boolean structure query");
  query->add_option("samples", samples_path, "Sample log written by discover")->required();
  query->add_option("query", query_text, "Query, e.g. \"LIN AND PER AND (WN OR LIN*WN)\"")->required();
  query->add_option("--out", query_out, "Also write the result as JSON to this file");

  Common optimize_opts;
  gpmem::BayesOptConfig bo;
  std::string mode = "uniform", objective = "demo";
  std::optional<double> initial_action;
  auto* optimize = app.add_subcommand("optimize", "Thompson-sampling Bayesian optimisation");
  add_common(optimize, optimize_opts, false);
  optimize->add_option("--mode", mode, "uniform, drift or tau-search")->capture_default_str();
  optimize->add_option("--iterations", bo.iterations)->capture_default_str();
  optimize->add_option("--temperature", bo.temperature, "Temperature s of the action search")->capture_default_str();
  optimize->add_option("--navg", bo.navg, "Draws averaged per value estimate")->capture_default_str();
  optimize->add_option("--drift-width", bo.drift_width, "Proposal sd for drift and tau-search")->capture_default_str();
  optimize->add_option("--objective", objective, "demo or cmd:<program>")->capture_default_str();
  optimize->add_option("--lo", bo.lo, "Lower bound of the action space")->capture_default_str();
  optimize->add_option("--hi", bo.hi, "Upper bound of the action space")->capture_default_str();
  optimize->add_option("--update-steps", bo.update_steps, "Hyperparameter MH steps per iteration")->capture_default_str();
  optimize->add_option("--search-steps", bo.search_steps, "tau-search chain length")->capture_default_str();
  optimize->add_option("--initial-action", initial_action, "First action instead of a uniform draw");

  std::string generator = "neal", gen_out;
  std::size_t gen_n = 100;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  gen->add_option("--generator", generator, "neal, lin-per-wn or lin-x-per")->capture_default_str();
  gen->add_option("--n", gen_n, "Number of rows")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*regress) {
      const Common& c = regress_opts;
      if (c.chains != 1) throw gpmem::ConfigError("regress runs a single chain");
      gpmem::RegressOptions ro;
      if (!c.kernel.empty()) ro.kernel = c.kernel;
      if (!c.schedule.empty()) {
        ro.schedule = c.schedule;
      } else if (c.steps) {
        ro.schedule = "repeat(" + std::to_string(*c.steps) + ", do(mh(hyperhyper, 2), mh(hyper, 1)))";
      }
      ro.grid_points = grid_points;
      ro.paths = paths;
      auto cfg = base_config("regress", c);
      cfg.kernel = ro.kernel;
      cfg.schedule = ro.schedule;
      cfg.extra["grid"] = grid_points;
      cfg.extra["paths"] = paths;
      const auto data = gpmem::resolve_dataset(c.data, c.seed);
      const auto result = gpmem::run_regress(data, ro, c.seed);
      gpmem::write_regress(c.out, result, cfg);
      std::cout << "log target " << result.initial_log_target << " -> " << result.final_log_target << "\n"
                << "wrote " << c.out << "/{samples.jsonl,grid.csv,paths.csv,result.json}\n";
    } else if (*discover) {
      const Common& c = discover_opts;
      if (!c.kernel.empty()) throw gpmem::ConfigError("discover composes its own kernels; --kernel is not used");
      gpmem::DiscoverOptions dopt;
      dopt.repetitions = c.steps.value_or(200);
      if (!c.schedule.empty()) dopt.schedule = c.schedule;
      dopt.chains = c.chains;
      dopt.burn_in = burn_in;
      dopt.p_add = p_add;
      const auto data = gpmem::resolve_dataset(c.data, c.seed);
      const auto result = gpmem::run_discover(data, dopt, c.seed);
      auto cfg = base_config("discover", c);
      cfg.steps = dopt.repetitions;
      cfg.schedule = result.schedule;
      cfg.extra["burn_in"] = burn_in;
      cfg.extra["p_add"] = p_add;
      gpmem::write_discover(c.out, result, cfg);
      const auto rows = result.samples.marginal();
      for (std::size_t i = 0; i < rows.size() && i < 5; ++i)
        std::cout << rows[i].probability << "  " << rows[i].structure.to_string() << "\n";
      std::cout << "wrote " << c.out << "/{samples.jsonl,marginal.csv,result.json}\n";
    } else if (*query) {
      const auto samples = gpmem::load_samples(samples_path);
      const auto r = gpmem::evaluate_query(query_text, samples);
      json j = gpmem::to_json(r);
      std::cout << j.dump(2) << "\n";
      if (query_out) {
        std::filesystem::path p(*query_out);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(p);
        if (!out) throw gpmem::DataError("cannot write '" + *query_out + "'");
        out << j.dump(2) << "\n";
      }
    } else if (*optimize) {
      const Common& c = optimize_opts;
      if (!c.schedule.empty() || !c.kernel.empty() || c.steps)
        throw gpmem::ConfigError("optimize does not take --schedule, --kernel or --steps");
      if (c.chains != 1) throw gpmem::ConfigError("optimize runs a single sequential chain");
      bo.mode = gpmem::search_mode_from_string(mode);
      bo.initial_action = initial_action;
      auto cfg = base_config("optimize", c);
      cfg.data = objective;
      cfg.extra["bayesopt"] = gpmem::to_json(bo);
      auto r = gpmem::run_and_write_optimize(c.out, gpmem::make_objective(objective), bo, cfg);
      if (!r.trace.empty())
        std::cout << "best action " << r.trace.back().best_action << " reward " << r.trace.back().best_reward
                  << "\n";
      std::cout << "wrote " << c.out << "/{trace.jsonl,best.csv,result.json}\n";
      if (r.failure) {
        std::cerr << "error: objective failed at " << *r.failure << "\n";
        return 3;
      }
    } else if (*gen) {
      const auto d = gpmem::generate_dataset(generator, gen_n, gen_seed);
      gpmem::RunConfig cfg;
      cfg.command = "gen-data";
      cfg.seed = gen_seed;
      cfg.data = generator;
      cfg.extra["n"] = gen_n;
      std::filesystem::path p(gen_out);
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      gpmem::save_csv(gen_out, d, {gpmem::header("dataset", cfg).dump()});
      std::cout << "wrote " << d.size() << " rows to " << gen_out << "\n";
    }
  } catch (const gpmem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
