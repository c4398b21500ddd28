#pragma once

// The statistical memoizer: a source function plus a kernel become a linked
// prober (memoized exact evaluation) and emulator (GP conditioned on the memo
// table).

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gpmem/gp.hpp"

namespace gpmem {

using SourceFunction = std::function<double(double)>;

enum class Origin { Probed, Observed };

struct MemoEntry {
  std::size_t id = 0;
  double x = 0.0;
  double y = 0.0;
  Origin origin = Origin::Probed;
  std::optional<std::string> label;
};

class MemoTable {
 public:
  const std::vector<MemoEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  // Probed lookup uses exact input equality.
  const MemoEntry* find_probed(double x) const {
    for (const auto& e : entries_)
      if (e.origin == Origin::Probed && e.x == x) return &e;
    return nullptr;
  }

  std::vector<double> xs() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.x);
    return out;
  }

  std::vector<double> ys() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.y);
    return out;
  }

  std::size_t append(double x, double y, Origin origin, std::optional<std::string> label) {
    entries_.push_back(MemoEntry{next_id_, x, y, origin, std::move(label)});
    return next_id_++;
  }

  std::size_t remove_observed(const std::string& label) {
    const auto before = entries_.size();
    std::erase_if(entries_, [&](const MemoEntry& e) {
      return e.origin == Origin::Observed && e.label && *e.label == label;
    });
    return before - entries_.size();
  }

 private:
  std::vector<MemoEntry> entries_;
  std::size_t next_id_ = 0;
};

namespace detail {

struct MemoState {
  SourceFunction source;
  MemoTable table;
  GPModel model;
  std::optional<GpFit> fit;  // cached factorisation of the current table
  std::size_t invocations = 0;

  void extend_fit(double x, double y) {
    if (fit) fit->append(x, y);
  }

  const GpFit& current_fit() {
    if (!fit) fit.emplace(model, table.xs(), table.ys());
    return *fit;
  }
};

}  // namespace detail

// Memoizing prober over the source function.
class Prober {
 public:
  double compute(double x) const {
    if (const MemoEntry* e = state_->table.find_probed(x)) return e->y;
    double y = 0.0;
    ++state_->invocations;
    try {
      y = state_->source(x);
    } catch (const std::exception& ex) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "source function failed at x=" << x << ": " << ex.what();
      throw DataError(msg.str());
    }
    if (!std::isfinite(y)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "source function returned a non-finite value at x=" << x;
      throw DataError(msg.str());
    }
    state_->table.append(x, y, Origin::Probed, std::nullopt);
    state_->extend_fit(x, y);
    return y;
  }

  double operator()(double x) const { return compute(x); }

  // Number of times the source function has actually been called.
  std::size_t invocations() const noexcept { return state_->invocations; }
  const MemoTable& table() const noexcept { return state_->table; }

 private:
  friend std::pair<Prober, class Emulator> memoize(SourceFunction, KernelExpr, HyperParams);
  explicit Prober(std::shared_ptr<detail::MemoState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::MemoState> state_;
};

// Online GP emulator conditioned on the shared memo table.
class Emulator {
 public:
  std::size_t observe(double x, double y, std::optional<std::string> label = std::nullopt) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw DataError("observations must be finite");
    const std::size_t id = state_->table.append(x, y, Origin::Observed, std::move(label));
    state_->extend_fit(x, y);
    return id;
  }

  // Removes all Observed entries carrying the label. Probed entries stay.
  std::size_t forget(const std::string& label) {
    const std::size_t removed = state_->table.remove_observed(label);
    if (removed) state_->fit.reset();
    return removed;
  }

  // One joint posterior draw at xq; fresh randomness on every call.
  Vector emulate(std::span<const double> xq, Rng& rng) const {
    if (xq.empty()) throw ConfigError("emulate needs at least one query point");
    return sample_joint(state_->current_fit().posterior(xq), rng);
  }

  double emulate_point(double x, Rng& rng) const {
    const auto [mean, var] = state_->current_fit().predict(x);
    return mean + std::sqrt(std::max(var, 0.0)) * standard_normal(rng);
  }

  PosteriorGaussian posterior(std::span<const double> xq) const { return state_->current_fit().posterior(xq); }
  std::pair<double, double> predict(double x) const { return state_->current_fit().predict(x); }
  double log_likelihood() const { return state_->current_fit().log_likelihood(); }

  const MemoTable& table() const noexcept { return state_->table; }
  const GPModel& model() const noexcept { return state_->model; }
  const HyperParams& params() const noexcept { return state_->model.params; }

  // New hyperparameters invalidate the cached factorisation, never the table.
  void set_params(HyperParams params) {
    state_->model.params = std::move(params);
    state_->fit.reset();
  }
  void set_param(const std::string& name, double v) {
    state_->model.params.set(name, v);
    state_->fit.reset();
  }

  // Access to the cached factorisation (built on demand).
  const GpFit& fit() const { return state_->current_fit(); }

 private:
  friend std::pair<Prober, Emulator> memoize(SourceFunction, KernelExpr, HyperParams);
  explicit Emulator(std::shared_ptr<detail::MemoState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::MemoState> state_;
};

// f -> (f_compute, f_emu), sharing one memo table.
inline std::pair<Prober, Emulator> memoize(SourceFunction f, KernelExpr kernel, HyperParams params) {
  BoundKernel check(kernel, params);  // every parameter must resolve
  (void)check;
  auto state = std::make_shared<detail::MemoState>(
      detail::MemoState{std::move(f), MemoTable{}, GPModel{std::move(kernel), std::move(params)}, std::nullopt, 0});
  return {Prober(state), Emulator(state)};
}

}  // namespace gpmem
