#pragma once

// Datasets: two-column CSV I/O and the synthetic generators.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gpmem/gp.hpp"
#include "gpmem/random.hpp"

namespace gpmem {

struct Dataset {
  std::vector<double> xs;
  std::vector<double> ys;
  std::string source;

  std::size_t size() const noexcept { return xs.size(); }

  void validate() const {
    if (xs.empty()) throw DataError("dataset is empty");
    if (xs.size() != ys.size()) throw DataError("dataset columns differ in length");
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
        throw DataError("dataset row " + std::to_string(i + 1) + " is not finite");
  }
};

// Shortest round-trip decimal text.
inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

// Two columns x,y. An optional "x,y" header, blank lines and lines starting
// with '#' are skipped. Row order is preserved.
inline Dataset read_csv(std::istream& is, const std::string& source = "<stream>") {
  Dataset d;
  d.source = source;
  std::string line;
  std::size_t lineno = 0;
  bool seen_row = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto comma = t.find(',');
    if (comma == std::string_view::npos || t.find(',', comma + 1) != std::string_view::npos)
      throw DataError(source + ":" + std::to_string(lineno) + ": expected two comma-separated columns");
    const auto a = detail::trim(t.substr(0, comma));
    const auto b = detail::trim(t.substr(comma + 1));
    double x = 0.0, y = 0.0;
    if (!detail::parse_double(a, x) || !detail::parse_double(b, y)) {
      if (!seen_row && a == "x" && b == "y") {
        seen_row = true;
        continue;
      }
      throw DataError(source + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (!std::isfinite(x) || !std::isfinite(y))
      throw DataError(source + ":" + std::to_string(lineno) + ": non-finite value");
    seen_row = true;
    d.xs.push_back(x);
    d.ys.push_back(y);
  }
  if (d.xs.empty()) throw DataError(source + ": no data rows");
  return d;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, path);
}

inline void write_csv(std::ostream& os, const Dataset& d, const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "x,y\n";
  for (std::size_t i = 0; i < d.xs.size(); ++i) os << format_double(d.xs[i]) << ',' << format_double(d.ys[i]) << '\n';
}

inline void save_csv(const std::string& path, const Dataset& d, const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(out, d, comments);
  if (!out) throw DataError("failed writing '" + path + "'");
}

// 0.3 + 0.4x + 0.5 sin(2.7x) + 1.1 / (1 + x^2)
inline double neal_f_true(double x) { return 0.3 + 0.4 * x + 0.5 * std::sin(2.7 * x) + 1.1 / (1.0 + x * x); }

// x ~ U[-2, 2]; noise sd 0.1 with probability 0.95, otherwise 1.0.
inline Dataset gen_neal(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  Rng rng(seed);
  Dataset d;
  d.source = "neal";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = uniform(rng, -2.0, 2.0);
    const double sd = bernoulli(rng, 0.95) ? 0.1 : 1.0;
    d.xs.push_back(x);
    d.ys.push_back(neal_f_true(x) + sd * standard_normal(rng));
  }
  return d;
}

struct GpPreset {
  std::string name;
  std::string kernel;  // text form
  std::vector<std::pair<std::string, double>> params;
  double lo = 0.0;
  double hi = 1.0;
  std::string structure;  // expected canonical structure
};

inline std::vector<GpPreset> gp_presets() {
  return {
      {"lin-per-wn", "LIN(a) + PER(b,p,l) + WN(s)", {{"a", 0.5}, {"b", 4.0}, {"p", 4.0}, {"l", 1.5}, {"s", 1.0}},
       -10.0, 10.0, "LIN + PER + WN"},
      {"lin-x-per", "LIN(a) * PER(b,p,l) + WN(s)", {{"a", 0.5}, {"b", 2.0}, {"p", 4.0}, {"l", 1.5}, {"s", 1.0}},
       -10.0, 10.0, "LIN*PER + WN"},
  };
}

inline const GpPreset& find_preset(const std::string& name) {
  static const auto presets = gp_presets();
  for (const auto& p : presets)
    if (p.name == name) return p;
  throw ConfigError("unknown generator '" + name + "'");
}

// n evenly spaced inputs over the preset's range; y is one joint draw from
// the GP prior with the preset kernel.
inline Dataset gen_gp(const std::string& preset, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  const GpPreset& p = find_preset(preset);
  HyperParams params;
  for (const auto& [k, v] : p.params) params.add(k, v, "generator");
  Dataset d;
  d.source = p.name;
  for (std::size_t i = 0; i < n; ++i)
    d.xs.push_back(n == 1 ? p.lo : p.lo + (p.hi - p.lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  Rng rng(seed);
  const GpFit prior(BoundKernel(parse_kernel(p.kernel), params), {}, {});
  const Vector y = sample_joint(prior.posterior(d.xs), rng);
  d.ys.assign(y.data(), y.data() + y.size());
  return d;
}

}  // namespace gpmem
