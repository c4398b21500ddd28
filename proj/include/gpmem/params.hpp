#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gpmem/error.hpp"
#include "gpmem/random.hpp"

namespace gpmem {

class HyperParams;

// A prior argument is either a literal or the name of another (parent)
// hyperparameter, which is how hierarchical Gamma priors are wired.
using PriorArg = std::variant<double, std::string>;

class PriorSpec {
 public:
  enum class Kind { Gamma, Uniform, Bernoulli };

  static PriorSpec gamma(PriorArg shape, PriorArg rate) {
    PriorSpec p(Kind::Gamma);
    p.a_ = std::move(shape);
    p.b_ = std::move(rate);
    if (const double* s = std::get_if<double>(&p.a_); s && !(*s > 0.0))
      throw ConfigError("gamma prior shape must be positive");
    if (const double* r = std::get_if<double>(&p.b_); r && !(*r > 0.0))
      throw ConfigError("gamma prior rate must be positive");
    return p;
  }

  static PriorSpec uniform(double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("uniform prior requires lo < hi");
    PriorSpec p(Kind::Uniform);
    p.a_ = lo;
    p.b_ = hi;
    return p;
  }

  static PriorSpec bernoulli(double prob) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("bernoulli prior requires p in [0,1]");
    PriorSpec p(Kind::Bernoulli);
    p.a_ = prob;
    return p;
  }

  Kind kind() const noexcept { return kind_; }
  const PriorArg& first() const noexcept { return a_; }
  const PriorArg& second() const noexcept { return b_; }

  std::vector<std::string> parents() const {
    std::vector<std::string> out;
    if (auto s = std::get_if<std::string>(&a_)) out.push_back(*s);
    if (auto s = std::get_if<std::string>(&b_)) out.push_back(*s);
    return out;
  }

  bool in_support(double v) const {
    switch (kind_) {
      case Kind::Gamma: return v > 0.0 && std::isfinite(v);
      case Kind::Uniform: return v > std::get<double>(a_) && v < std::get<double>(b_);
      case Kind::Bernoulli: return v == 0.0 || v == 1.0;
    }
    return false;
  }

  inline double log_density(double v, const HyperParams& ctx) const;
  inline double sample(Rng& rng, const HyperParams& ctx) const;
  // d/dv log p(v).
  inline double dlog_density(double v, const HyperParams& ctx) const;
  // d/d(parent) log p(v) for a named parent.
  inline double dlog_density_parent(double v, const std::string& parent, const HyperParams& ctx) const;

  std::string describe() const {
    auto arg = [](const PriorArg& a) {
      if (auto d = std::get_if<double>(&a)) {
        std::string s = std::to_string(*d);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
      }
      return std::get<std::string>(a);
    };
    switch (kind_) {
      case Kind::Gamma: return "gamma(" + arg(a_) + "," + arg(b_) + ")";
      case Kind::Uniform: return "uniform(" + arg(a_) + "," + arg(b_) + ")";
      case Kind::Bernoulli: return "bernoulli(" + arg(a_) + ")";
    }
    return {};
  }

 private:
  explicit PriorSpec(Kind k) : kind_(k) {}
  inline double resolve(const PriorArg& a, const HyperParams& ctx) const;

  Kind kind_;
  PriorArg a_ = 0.0;
  PriorArg b_ = 0.0;
};

// Named hyperparameters with scope tags and optional priors. Names iterate in
// sorted order, which keeps every traversal deterministic.
class HyperParams {
 public:
  struct Entry {
    double value = 0.0;
    std::string scope;
    std::optional<PriorSpec> prior;
  };

  void add(const std::string& name, double value, std::string scope,
           std::optional<PriorSpec> prior = std::nullopt) {
    if (name.empty()) throw ConfigError("hyperparameter name must not be empty");
    if (scope.empty()) throw ConfigError("hyperparameter '" + name + "' needs a scope tag");
    if (entries_.count(name)) throw ConfigError("duplicate hyperparameter '" + name + "'");
    check_value(name, value, prior);
    entries_[name] = Entry{value, std::move(scope), std::move(prior)};
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }

  double value(const std::string& name) const { return entry(name).value; }
  double operator[](const std::string& name) const { return value(name); }

  void set(const std::string& name, double v) {
    auto& e = mutable_entry(name);
    check_value(name, v, e.prior);
    e.value = v;
  }

  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown hyperparameter '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  std::vector<std::string> members(const std::string& scope) const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_)
      if (e.scope == scope) out.push_back(name);
    return out;
  }

  std::set<std::string> scopes() const {
    std::set<std::string> out;
    for (const auto& [name, e] : entries_) out.insert(e.scope);
    return out;
  }

  // Parameters whose prior takes `name` as an argument.
  std::vector<std::string> children(const std::string& name) const {
    std::vector<std::string> out;
    for (const auto& [n, e] : entries_) {
      if (!e.prior) continue;
      for (const auto& p : e.prior->parents())
        if (p == name) {
          out.push_back(n);
          break;
        }
    }
    return out;
  }

  // Log prior of one parameter at value v, parents at their current values.
  double log_prior_of(const std::string& name, double v) const {
    const auto& e = entry(name);
    return e.prior ? e.prior->log_density(v, *this) : 0.0;
  }

  double log_prior() const {
    double total = 0.0;
    for (const auto& [name, e] : entries_)
      if (e.prior) total += e.prior->log_density(e.value, *this);
    return total;
  }

  // Gradient of log_prior() with respect to one parameter, including the
  // terms of its children in the hierarchy.
  double dlog_prior(const std::string& name) const {
    const auto& e = entry(name);
    double g = e.prior ? e.prior->dlog_density(e.value, *this) : 0.0;
    for (const auto& c : children(name)) {
      const auto& ce = entry(c);
      g += ce.prior->dlog_density_parent(ce.value, name, *this);
    }
    return g;
  }

  std::map<std::string, double> snapshot() const {
    std::map<std::string, double> out;
    for (const auto& [name, e] : entries_) out[name] = e.value;
    return out;
  }

  void assign(const std::map<std::string, double>& values) {
    for (const auto& [name, v] : values) set(name, v);
  }

  friend bool operator==(const HyperParams& a, const HyperParams& b) {
    return a.snapshot() == b.snapshot();
  }

 private:
  Entry& mutable_entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown hyperparameter '" + name + "'");
    return it->second;
  }

  static void check_value(const std::string& name, double v, const std::optional<PriorSpec>& prior) {
    if (!std::isfinite(v)) throw ConfigError("hyperparameter '" + name + "' must be finite");
    if (prior && !prior->in_support(v))
      throw ConfigError("hyperparameter '" + name + "' value " + std::to_string(v) +
                        " outside its prior support");
  }

  std::map<std::string, Entry> entries_;
};

inline double PriorSpec::resolve(const PriorArg& a, const HyperParams& ctx) const {
  if (auto d = std::get_if<double>(&a)) return *d;
  return ctx.value(std::get<std::string>(a));
}

inline double PriorSpec::log_density(double v, const HyperParams& ctx) const {
  switch (kind_) {
    case Kind::Gamma: return gamma_log_pdf(v, resolve(a_, ctx), resolve(b_, ctx));
    case Kind::Uniform: {
      const double lo = std::get<double>(a_), hi = std::get<double>(b_);
      return in_support(v) ? -std::log(hi - lo) : -std::numeric_limits<double>::infinity();
    }
    case Kind::Bernoulli: {
      const double p = std::get<double>(a_);
      if (v == 1.0) return std::log(p);
      if (v == 0.0) return std::log1p(-p);
      return -std::numeric_limits<double>::infinity();
    }
  }
  return -std::numeric_limits<double>::infinity();
}

inline double PriorSpec::sample(Rng& rng, const HyperParams& ctx) const {
  switch (kind_) {
    case Kind::Gamma: {
      const double shape = resolve(a_, ctx), rate = resolve(b_, ctx);
      double v = 0.0;
      // A draw can underflow to 0 for tiny shapes; keep it in the support.
      while (!(v > 0.0)) v = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
      return v;
    }
    case Kind::Uniform: {
      const double lo = std::get<double>(a_), hi = std::get<double>(b_);
      double v = lo;
      while (!in_support(v)) v = gpmem::uniform(rng, lo, hi);
      return v;
    }
    case Kind::Bernoulli: return gpmem::bernoulli(rng, std::get<double>(a_)) ? 1.0 : 0.0;
  }
  return 0.0;
}

inline double PriorSpec::dlog_density(double v, const HyperParams& ctx) const {
  if (kind_ == Kind::Gamma) return (resolve(a_, ctx) - 1.0) / v - resolve(b_, ctx);
  return 0.0;
}

inline double PriorSpec::dlog_density_parent(double v, const std::string& parent,
                                             const HyperParams& ctx) const {
  if (kind_ != Kind::Gamma) return 0.0;
  const double shape = resolve(a_, ctx), rate = resolve(b_, ctx);
  double g = 0.0;
  if (auto s = std::get_if<std::string>(&a_); s && *s == parent)
    g += std::log(rate) - digamma(shape) + std::log(v);
  if (auto s = std::get_if<std::string>(&b_); s && *s == parent) g += shape / rate - v;
  return g;
}

}  // namespace gpmem
