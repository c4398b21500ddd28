#pragma once

// Nested inference schedules, e.g.
//   repeat(100, do(mh(hyperhyper, 2), mh(hyper, 1)))
//   repeat(10, grad(scope="hyper", steps=1, step_size=0.01))
// Arguments are positional or keyword; scope names may be quoted.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpmem/error.hpp"
#include "gpmem/inference.hpp"

namespace gpmem {

struct ScheduleStep {
  enum class Kind { Repeat, Do, Mh, Drift, Gradient };

  Kind kind = Kind::Do;
  std::size_t count = 0;  // repetitions for Repeat, transitions otherwise
  std::string scope;
  double real = 0.0;  // drift width or gradient step size
  std::vector<ScheduleStep> body;

  static ScheduleStep repeat(std::size_t n, std::vector<ScheduleStep> body) {
    return {Kind::Repeat, n, {}, 0.0, std::move(body)};
  }
  static ScheduleStep sequence(std::vector<ScheduleStep> body) { return {Kind::Do, 0, {}, 0.0, std::move(body)}; }
  static ScheduleStep mh(std::string scope, std::size_t steps) { return {Kind::Mh, steps, std::move(scope), 0.0, {}}; }
  static ScheduleStep drift(std::string scope, std::size_t steps, double width) {
    return {Kind::Drift, steps, std::move(scope), width, {}};
  }
  static ScheduleStep gradient(std::string scope, std::size_t steps, double step_size = 1e-2) {
    return {Kind::Gradient, steps, std::move(scope), step_size, {}};
  }
};

inline void collect_scopes(const ScheduleStep& s, std::set<std::string>& out) {
  if (!s.scope.empty()) out.insert(s.scope);
  for (const auto& b : s.body) collect_scopes(b, out);
}

inline std::set<std::string> scopes_of(const ScheduleStep& s) {
  std::set<std::string> out;
  collect_scopes(s, out);
  return out;
}

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace detail

inline std::string to_string(const ScheduleStep& s) {
  auto join = [](const std::vector<ScheduleStep>& body) {
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (i) out += ", ";
      out += to_string(body[i]);
    }
    return out;
  };
  switch (s.kind) {
    case ScheduleStep::Kind::Repeat: return "repeat(" + std::to_string(s.count) + ", " + join(s.body) + ")";
    case ScheduleStep::Kind::Do: return "do(" + join(s.body) + ")";
    case ScheduleStep::Kind::Mh: return "mh(" + s.scope + ", " + std::to_string(s.count) + ")";
    case ScheduleStep::Kind::Drift:
      return "drift(" + s.scope + ", " + std::to_string(s.count) + ", " + detail::format_real(s.real) + ")";
    case ScheduleStep::Kind::Gradient:
      return "grad(" + s.scope + ", " + std::to_string(s.count) + ", " + detail::format_real(s.real) + ")";
  }
  return {};
}

namespace detail {

class ScheduleParser {
 public:
  explicit ScheduleParser(std::string_view s) : s_(s) {}

  ScheduleStep parse() {
    ScheduleStep step = parse_step();
    ws();
    if (pos_ != s_.size()) throw ParseError("trailing input in schedule", pos_);
    return step;
  }

 private:
  struct Arg {
    std::string key;  // empty for positional
    std::size_t pos = 0;
    std::string atom;  // number or scope name
    std::optional<ScheduleStep> step;
  };

  ScheduleStep parse_step() {
    ws();
    const std::size_t at = pos_;
    std::string name = ident();
    if (name.empty()) throw ParseError("expected a schedule step", at);
    for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    ws();
    if (!eat('(')) throw ParseError("expected '(' after '" + name + "'", pos_);
    std::vector<Arg> args;
    ws();
    if (!eat(')')) {
      do {
        args.push_back(parse_arg());
        ws();
      } while (eat(','));
      if (!eat(')')) throw ParseError("expected ')' or ','", pos_);
    }
    return build(name, at, args);
  }

  Arg parse_arg() {
    ws();
    Arg a;
    a.pos = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'')) {
      a.atom = quoted();
      return a;
    }
    const std::size_t save = pos_;
    std::string word = ident();
    ws();
    if (!word.empty() && eat('=')) {
      a.key = word;
      ws();
      a.pos = pos_;
      if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'')) {
        a.atom = quoted();
        return a;
      }
      const std::size_t vstart = pos_;
      std::string v = ident();
      ws();
      if (!v.empty() && pos_ < s_.size() && s_[pos_] == '(') {
        pos_ = vstart;
        a.step = parse_step();
      } else {
        a.atom = v;
      }
      if (a.atom.empty() && !a.step) throw ParseError("missing value for '" + a.key + "'", vstart);
      return a;
    }
    if (!word.empty() && pos_ < s_.size() && s_[pos_] == '(') {
      pos_ = save;
      a.step = parse_step();
      return a;
    }
    if (word.empty()) throw ParseError("expected an argument", save);
    a.atom = word;
    return a;
  }

  static bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '+';
  }

  std::string ident() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && is_word_char(s_[pos_])) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string quoted() {
    const char q = s_[pos_++];
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != q) ++pos_;
    if (pos_ >= s_.size()) throw ParseError("unterminated string", start - 1);
    std::string out(s_.substr(start, pos_ - start));
    ++pos_;
    if (out.empty()) throw ParseError("empty scope name", start - 1);
    return out;
  }

  void ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static std::size_t to_count(const Arg& a) {
    std::size_t v = 0;
    const char* b = a.atom.data();
    const char* e = b + a.atom.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ParseError("expected a non-negative integer, got '" + a.atom + "'", a.pos);
    return v;
  }

  static double to_real(const Arg& a) {
    double v = 0.0;
    const char* b = a.atom.data();
    const char* e = b + a.atom.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e || !std::isfinite(v))
      throw ParseError("expected a number, got '" + a.atom + "'", a.pos);
    return v;
  }

  // Matches positional and keyword arguments against a parameter list.
  static std::vector<const Arg*> bind(const std::string& name, std::size_t at, const std::vector<Arg>& args,
                                      const std::vector<std::vector<std::string>>& params, std::size_t required) {
    std::vector<const Arg*> bound(params.size(), nullptr);
    std::size_t next = 0;
    bool keyword_seen = false;
    for (const auto& a : args) {
      if (a.step) throw ParseError("'" + name + "' does not take a nested step", a.pos);
      std::size_t slot = params.size();
      if (a.key.empty()) {
        if (keyword_seen) throw ParseError("positional argument after keyword argument", a.pos);
        slot = next++;
        if (slot >= params.size()) throw ParseError("too many arguments to '" + name + "'", a.pos);
      } else {
        keyword_seen = true;
        for (std::size_t i = 0; i < params.size(); ++i)
          if (std::find(params[i].begin(), params[i].end(), a.key) != params[i].end()) slot = i;
        if (slot == params.size()) throw ParseError("unknown argument '" + a.key + "' to '" + name + "'", a.pos);
      }
      if (bound[slot]) throw ParseError("argument '" + params[slot][0] + "' given twice", a.pos);
      bound[slot] = &a;
    }
    for (std::size_t i = 0; i < required; ++i)
      if (!bound[i]) throw ParseError("'" + name + "' is missing argument '" + params[i][0] + "'", at);
    return bound;
  }

  static ScheduleStep build(const std::string& name, std::size_t at, const std::vector<Arg>& args) {
    if (name == "repeat") {
      if (args.size() < 2) throw ParseError("repeat needs a count and at least one step", at);
      if (args[0].step || (!args[0].key.empty() && args[0].key != "n" && args[0].key != "times"))
        throw ParseError("repeat count must come first", args[0].pos);
      std::vector<ScheduleStep> body;
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (!args[i].step) throw ParseError("repeat body must be schedule steps", args[i].pos);
        body.push_back(*args[i].step);
      }
      return ScheduleStep::repeat(to_count(args[0]), std::move(body));
    }
    if (name == "do") {
      std::vector<ScheduleStep> body;
      for (const auto& a : args) {
        if (!a.step) throw ParseError("do takes schedule steps only", a.pos);
        body.push_back(*a.step);
      }
      return ScheduleStep::sequence(std::move(body));
    }
    if (name == "mh") {
      auto b = bind(name, at, args, {{"scope"}, {"steps"}}, 2);
      return ScheduleStep::mh(b[0]->atom, to_count(*b[1]));
    }
    if (name == "drift" || name == "mh_drift" || name == "mh-drift") {
      auto b = bind(name, at, args, {{"scope"}, {"steps"}, {"width", "sd"}}, 2);
      const double width = b[2] ? to_real(*b[2]) : 1.0;
      if (width < 0.0) throw ParseError("drift width must be >= 0", b[2]->pos);
      return ScheduleStep::drift(b[0]->atom, to_count(*b[1]), width);
    }
    if (name == "grad" || name == "gradient" || name == "gradient-ascent" || name == "gradient_ascent") {
      auto b = bind(name, at, args, {{"scope"}, {"steps"}, {"step_size", "step", "rate"}}, 2);
      const double eta = b[2] ? to_real(*b[2]) : 1e-2;
      if (!(eta > 0.0)) throw ParseError("gradient step size must be positive", b[2]->pos);
      return ScheduleStep::gradient(b[0]->atom, to_count(*b[1]), eta);
    }
    throw ParseError("unknown schedule step '" + name + "'", at);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ScheduleStep parse_schedule(std::string_view text) { return detail::ScheduleParser(text).parse(); }

// Interface a schedule executes against.
template <class R>
concept ScheduleRunner = requires(R& r, const std::string& scope, std::size_t n, double v) {
  { r.has_scope(scope) } -> std::convertible_to<bool>;
  r.mh(scope, n);
  r.drift(scope, n, v);
  r.gradient(scope, n, v);
};

namespace detail {

template <ScheduleRunner R>
void execute(const ScheduleStep& s, R& runner) {
  switch (s.kind) {
    case ScheduleStep::Kind::Repeat:
      for (std::size_t i = 0; i < s.count; ++i)
        for (const auto& b : s.body) execute(b, runner);
      break;
    case ScheduleStep::Kind::Do:
      for (const auto& b : s.body) execute(b, runner);
      break;
    case ScheduleStep::Kind::Mh: runner.mh(s.scope, s.count); break;
    case ScheduleStep::Kind::Drift: runner.drift(s.scope, s.count, s.real); break;
    case ScheduleStep::Kind::Gradient: runner.gradient(s.scope, s.count, s.real); break;
  }
}

}  // namespace detail

// Validates every scope up front, then executes. `after_repetition` is called
// after each iteration of a top-level repeat (or once when the top level is
// not a repeat).
template <ScheduleRunner R>
void run_schedule(const ScheduleStep& schedule, R& runner,
                  const std::function<void(std::size_t)>& after_repetition = {}) {
  std::string missing;
  for (const auto& scope : scopes_of(schedule))
    if (!runner.has_scope(scope)) missing += (missing.empty() ? "" : ", ") + scope;
  if (!missing.empty()) throw ConfigError("schedule references undefined scope(s): " + missing);
  if (schedule.kind == ScheduleStep::Kind::Repeat) {
    for (std::size_t i = 0; i < schedule.count; ++i) {
      for (const auto& b : schedule.body) detail::execute(b, runner);
      if (after_repetition) after_repetition(i);
    }
    return;
  }
  detail::execute(schedule, runner);
  if (after_repetition) after_repetition(0);
}

// Runs schedules over a HyperParams table and a likelihood target.
template <class Target>
class HyperRunner {
 public:
  HyperRunner(HyperParams& params, const Target& target, Rng& rng) : params_(params), target_(target), rng_(rng) {}

  bool has_scope(const std::string& scope) const { return !params_.members(scope).empty(); }

  void mh(const std::string& scope, std::size_t steps) {
    gpmem::mh(params_, scope, steps, target_, rng_, &stats_);
  }

  void drift(const std::string& scope, std::size_t steps, double width) {
    gpmem::mh_drift(params_, scope, steps, width, target_, rng_, &stats_);
  }

  void gradient(const std::string& scope, std::size_t steps, double step_size) {
    if constexpr (DifferentiableTarget<Target>) {
      gpmem::gradient_ascent(params_, scope, steps, step_size, target_, &grad_stats_);
    } else {
      throw ConfigError("this target does not provide gradients");
    }
  }

  const MhStats& stats() const noexcept { return stats_; }
  const GradientStats& gradient_stats() const noexcept { return grad_stats_; }

 private:
  HyperParams& params_;
  const Target& target_;
  Rng& rng_;
  MhStats stats_;
  GradientStats grad_stats_;
};

}  // namespace gpmem
