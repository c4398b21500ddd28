#pragma once

// Scope-tagged Metropolis-Hastings (prior and drift proposals) and gradient
// ascent over hyperparameters.
//
// A likelihood target is any callable `double(const HyperParams&)` returning
// the non-prior part of the log target; the prior terms come from the
// HyperParams table itself. A callable that throws gpmem::Error or returns a
// non-finite value makes the proposal a counted rejection.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gpmem/gp.hpp"
#include "gpmem/params.hpp"

namespace gpmem {

struct MhStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t numeric_rejections = 0;
  std::map<std::string, std::size_t> transitions;  // per scope

  double acceptance_rate() const {
    return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  }
};

inline std::vector<std::string> require_scope(const HyperParams& params, const std::string& scope) {
  auto members = params.members(scope);
  if (members.empty()) throw ConfigError("scope '" + scope + "' has no members");
  return members;
}

namespace detail {

template <class LogLik>
double safe_log_lik(const LogLik& loglik, const HyperParams& params, MhStats* stats) {
  double v = -std::numeric_limits<double>::infinity();
  try {
    v = loglik(params);
  } catch (const Error&) {
    if (stats) ++stats->numeric_rejections;
    return -std::numeric_limits<double>::infinity();
  }
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
    if (stats) ++stats->numeric_rejections;
    return -std::numeric_limits<double>::infinity();
  }
  return v;
}

inline bool accept(double log_alpha, Rng& rng) {
  if (std::isnan(log_alpha)) return false;
  if (log_alpha >= 0.0) return true;
  return std::log(uniform_open(rng)) < log_alpha;
}

}  // namespace detail

// Single-site MH with proposals from each member's prior (conditional on its
// current parents). Children of a proposed parent are not resampled; their
// prior densities enter the ratio through log_prior().
template <class LogLik>
void mh(HyperParams& params, const std::string& scope, std::size_t steps, const LogLik& loglik, Rng& rng,
        MhStats* stats = nullptr) {
  const auto members = require_scope(params, scope);
  if (steps == 0) return;
  double cur_ll = detail::safe_log_lik(loglik, params, nullptr);
  double cur_lp = params.log_prior();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::string& name = members[uniform_index(rng, members.size())];
    const auto& entry = params.entry(name);
    if (stats) {
      ++stats->proposals;
      ++stats->transitions[scope];
    }
    if (!entry.prior) throw ConfigError("mh with prior proposals needs a prior on '" + name + "'");
    const double old_v = entry.value;
    const double new_v = entry.prior->sample(rng, params);
    const double fwd = entry.prior->log_density(new_v, params);
    const double rev = entry.prior->log_density(old_v, params);
    params.set(name, new_v);
    const double new_ll = detail::safe_log_lik(loglik, params, stats);
    const double new_lp = params.log_prior();
    const double log_alpha = (new_ll + new_lp) - (cur_ll + cur_lp) + rev - fwd;
    if (std::isfinite(new_ll) && detail::accept(log_alpha, rng)) {
      cur_ll = new_ll;
      cur_lp = new_lp;
      if (stats) ++stats->accepted;
    } else {
      params.set(name, old_v);
    }
  }
}

// Symmetric Gaussian random-walk proposals of sd `width` on one uniformly
// chosen member per step; proposals outside the prior support are rejected.
template <class LogLik>
void mh_drift(HyperParams& params, const std::string& scope, std::size_t steps, double width, const LogLik& loglik,
              Rng& rng, MhStats* stats = nullptr) {
  if (!(width >= 0.0) || !std::isfinite(width)) throw ConfigError("drift width must be finite and >= 0");
  const auto members = require_scope(params, scope);
  if (steps == 0) return;
  double cur_ll = detail::safe_log_lik(loglik, params, nullptr);
  double cur_lp = params.log_prior();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::string& name = members[uniform_index(rng, members.size())];
    if (stats) {
      ++stats->proposals;
      ++stats->transitions[scope];
    }
    const auto& entry = params.entry(name);
    const double old_v = entry.value;
    const double new_v = old_v + width * standard_normal(rng);
    if (entry.prior && !entry.prior->in_support(new_v)) continue;
    if (!std::isfinite(new_v)) continue;
    params.set(name, new_v);
    const double new_ll = detail::safe_log_lik(loglik, params, stats);
    const double new_lp = params.log_prior();
    if (std::isfinite(new_ll) && detail::accept((new_ll + new_lp) - (cur_ll + cur_lp), rng)) {
      cur_ll = new_ll;
      cur_lp = new_lp;
      if (stats) ++stats->accepted;
    } else {
      params.set(name, old_v);
    }
  }
}

// A differentiable target: value() is the log-likelihood part and gradient()
// its partials for the named parameters.
template <class T>
concept DifferentiableTarget = requires(const T& t, const HyperParams& p, const std::vector<std::string>& names) {
  { t.value(p) } -> std::convertible_to<double>;
  { t.gradient(p, names) } -> std::convertible_to<std::vector<double>>;
};

// GP marginal likelihood of a fixed dataset under a kernel expression.
class GpTarget {
 public:
  GpTarget(KernelExpr kernel, std::vector<double> xs, std::vector<double> ys)
      : kernel_(std::move(kernel)), xs_(std::move(xs)), ys_(std::move(ys)) {}

  double value(const HyperParams& p) const { return GpFit(BoundKernel(kernel_, p), xs_, ys_).log_likelihood(); }
  double operator()(const HyperParams& p) const { return value(p); }

  std::vector<double> gradient(const HyperParams& p, const std::vector<std::string>& names) const {
    return log_likelihood_gradient(GPModel{kernel_, p}, xs_, ys_, names);
  }

  const KernelExpr& kernel() const noexcept { return kernel_; }
  const std::vector<double>& xs() const noexcept { return xs_; }
  const std::vector<double>& ys() const noexcept { return ys_; }

 private:
  KernelExpr kernel_;
  std::vector<double> xs_;
  std::vector<double> ys_;
};

struct GradientStats {
  std::size_t steps = 0;
  std::size_t accepted = 0;
  std::size_t halvings = 0;
};

// Gradient ascent on value + log prior over the scope's members. Each step
// starts from `step_size`, moves along the gradient, keeps every member inside
// its prior support (halfway to a violated boundary) and halves the step up to
// 20 times until the target does not decrease.
template <DifferentiableTarget Target>
void gradient_ascent(HyperParams& params, const std::string& scope, std::size_t steps, double step_size,
                     const Target& target, GradientStats* stats = nullptr) {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step size must be positive");
  const auto members = require_scope(params, scope);
  auto total = [&](const HyperParams& p) {
    try {
      const double v = target.value(p) + p.log_prior();
      return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  double current = total(params);
  for (std::size_t s = 0; s < steps; ++s) {
    if (stats) ++stats->steps;
    std::vector<double> grad = target.gradient(params, members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      grad[i] += params.dlog_prior(members[i]);
      if (!std::isfinite(grad[i]))
        throw NumericError("non-finite gradient for parameter '" + members[i] + "'");
    }
    double eta = step_size;
    for (int h = 0; h <= 20; ++h, eta *= 0.5) {
      HyperParams trial = params;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& e = params.entry(members[i]);
        double v = e.value + eta * grad[i];
        if (e.prior && !e.prior->in_support(v)) {
          if (e.prior->kind() == PriorSpec::Kind::Gamma) {
            v = 0.5 * e.value;
          } else if (e.prior->kind() == PriorSpec::Kind::Uniform) {
            const double lo = std::get<double>(e.prior->first()), hi = std::get<double>(e.prior->second());
            v = v <= lo ? 0.5 * (e.value + lo) : 0.5 * (e.value + hi);
          } else {
            v = e.value;
          }
        }
        trial.set(members[i], v);
      }
      const double next = total(trial);
      if (next >= current) {
        params = std::move(trial);
        current = next;
        if (stats) ++stats->accepted;
        break;
      }
      if (stats) ++stats->halvings;
    }
  }
}

}  // namespace gpmem
