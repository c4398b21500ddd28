#pragma once

// Symbolic kernel algebra: distribution into a sum of products, the
// simplification rules with parameter folding, and canonical structures.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpmem/kernel.hpp"

namespace gpmem {

struct Factor {
  BaseKind kind = BaseKind::SE;
  std::vector<double> values;  // in arity() order, sigma first

  double eval(double x, double x2) const { return base_value(kind, values.data(), x, x2); }

  friend bool operator<(const Factor& a, const Factor& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.values < b.values;
  }
  friend bool operator==(const Factor&, const Factor&) = default;
};

using Term = std::vector<Factor>;

// A flat sum of products of base kernels with concrete parameter values.
struct SumOfProducts {
  std::vector<Term> terms;

  double eval(double x, double x2) const {
    double total = 0.0;
    for (const auto& t : terms) {
      double p = 1.0;
      for (const auto& f : t) p *= f.eval(x, x2);
      total += p;
    }
    return total;
  }

  std::size_t factor_count() const {
    std::size_t n = 0;
    for (const auto& t : terms) n += t.size();
    return n;
  }
};

namespace detail {

inline SumOfProducts distribute(const KernelExpr& e, const HyperParams* params) {
  if (e.is_base()) {
    Factor f{e.leaf().kind, {}};
    for (const auto& name : e.leaf().params) f.values.push_back(params ? params->value(name) : 1.0);
    return SumOfProducts{{Term{f}}};
  }
  SumOfProducts a = distribute(e.left(), params);
  SumOfProducts b = distribute(e.right(), params);
  if (e.op() == KernelExpr::Op::Sum) {
    a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
    return a;
  }
  SumOfProducts out;
  out.terms.reserve(a.terms.size() * b.terms.size());
  for (const auto& ta : a.terms)
    for (const auto& tb : b.terms) {
      Term t = ta;
      t.insert(t.end(), tb.begin(), tb.end());
      out.terms.push_back(std::move(t));
    }
  return out;
}

inline bool absorbed_by_white_noise(BaseKind k) {
  return k == BaseKind::SE || k == BaseKind::Per || k == BaseKind::Const || k == BaseKind::WN;
}

// One rewrite inside a product term. Returns false at the fixpoint.
inline bool simplify_term_once(Term& t) {
  // K x CONST -> K with sigma scaled by the constant's sigma.
  for (std::size_t i = 0; i < t.size() && t.size() > 1; ++i) {
    if (t[i].kind != BaseKind::Const) continue;
    std::size_t target = t.size();
    for (std::size_t j = 0; j < t.size(); ++j)
      if (j != i && t[j].kind != BaseKind::Const) {
        target = j;
        break;
      }
    if (target == t.size()) target = (i == 0) ? 1 : 0;
    t[target].values[0] *= t[i].values[0];
    t.erase(t.begin() + static_cast<std::ptrdiff_t>(i));
    return true;
  }
  // SE_a x SE_b -> SE_c, sigma_c = sigma_a sigma_b, 1/l_c^2 = 1/l_a^2 + 1/l_b^2.
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].kind != BaseKind::SE) continue;
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      if (t[j].kind != BaseKind::SE) continue;
      const double la = t[i].values[1], lb = t[j].values[1];
      t[i].values[0] *= t[j].values[0];
      t[i].values[1] = 1.0 / std::sqrt(1.0 / (la * la) + 1.0 / (lb * lb));
      t.erase(t.begin() + static_cast<std::ptrdiff_t>(j));
      return true;
    }
  }
  // {SE,PER,C,WN} x WN -> WN, sigma = sigma_a sigma_b.
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].kind != BaseKind::WN) continue;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (j == i || !absorbed_by_white_noise(t[j].kind)) continue;
      t[i].values[0] *= t[j].values[0];
      t.erase(t.begin() + static_cast<std::ptrdiff_t>(j));
      return true;
    }
  }
  return false;
}

inline bool is_single_lin(const Term& t) { return t.size() == 1 && t[0].kind == BaseKind::Lin; }

}  // namespace detail

// Fully distributes products over sums. Numerically equal to the input.
inline SumOfProducts parse_to_sum_of_products(const KernelExpr& expr, const HyperParams& params) {
  return detail::distribute(expr, &params);
}

// Applies the four simplification rules to a fixpoint and sorts the result
// canonically. Numerically equal to the input.
inline SumOfProducts simplify(SumOfProducts sop) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& t : sop.terms)
      while (detail::simplify_term_once(t)) changed = true;
    // LIN_a + LIN_b -> LIN_c, sigma_c^2 = sigma_a^2 + sigma_b^2.
    std::size_t first = sop.terms.size();
    for (std::size_t i = 0; i < sop.terms.size(); ++i) {
      if (!detail::is_single_lin(sop.terms[i])) continue;
      if (first == sop.terms.size()) {
        first = i;
        continue;
      }
      double& sa = sop.terms[first][0].values[0];
      const double sb = sop.terms[i][0].values[0];
      sa = std::sqrt(sa * sa + sb * sb);
      sop.terms.erase(sop.terms.begin() + static_cast<std::ptrdiff_t>(i));
      changed = true;
      break;
    }
  }
  for (auto& t : sop.terms) std::sort(t.begin(), t.end());
  std::sort(sop.terms.begin(), sop.terms.end());
  return sop;
}

// Rebuilds an expression from a (simplified) sum of products with a fresh
// parameter table; the source table is never touched.
inline std::pair<KernelExpr, HyperParams> to_kernel(const SumOfProducts& sop, const std::string& scope = "derived") {
  auto suffix = [](BaseKind k, std::size_t i) -> std::string {
    switch (k) {
      case BaseKind::Per: return std::array<const char*, 3>{"sf", "p", "l"}[i];
      case BaseKind::RQ: return std::array<const char*, 3>{"sf", "a", "l"}[i];
      case BaseKind::SE: return i == 0 ? "sf" : "l";
      default: return "sf";
    }
  };
  HyperParams table;
  std::optional<KernelExpr> sum;
  for (std::size_t ti = 0; ti < sop.terms.size(); ++ti) {
    std::optional<KernelExpr> prod;
    for (std::size_t fi = 0; fi < sop.terms[ti].size(); ++fi) {
      const Factor& f = sop.terms[ti][fi];
      std::vector<std::string> names;
      for (std::size_t k = 0; k < f.values.size(); ++k) {
        std::string name = "t" + std::to_string(ti) + "f" + std::to_string(fi) + "_" + suffix(f.kind, k);
        table.add(name, f.values[k], scope);
        names.push_back(std::move(name));
      }
      KernelExpr leaf = KernelExpr::base(f.kind, std::move(names));
      prod = prod ? mult_funcs(*prod, leaf) : leaf;
    }
    if (prod) sum = sum ? add_funcs(*sum, *prod) : *prod;
  }
  if (!sum) throw ConfigError("cannot build a kernel from an empty sum of products");
  return {*sum, std::move(table)};
}

// Functional form with parameter values, e.g. "LIN(2.7) + PER(5.6,3.7,6.4)".
inline std::string to_string(const SumOfProducts& sop, int precision = 4) {
  std::string out;
  char buf[64];
  for (std::size_t ti = 0; ti < sop.terms.size(); ++ti) {
    if (ti) out += " + ";
    for (std::size_t fi = 0; fi < sop.terms[ti].size(); ++fi) {
      if (fi) out += "*";
      const Factor& f = sop.terms[ti][fi];
      out += kind_name(f.kind);
      out += '(';
      for (std::size_t k = 0; k < f.values.size(); ++k) {
        if (k) out += ',';
        std::snprintf(buf, sizeof buf, "%.*g", precision, f.values[k]);
        out += buf;
      }
      out += ')';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical symbolic structure.

using ProductTerm = std::vector<BaseKind>;  // sorted

inline std::string to_string(const ProductTerm& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += '*';
    s += kind_name(t[i]);
  }
  return s;
}

class StructExpr {
 public:
  StructExpr() = default;

  // Terms are canonicalised: factors sorted, terms sorted.
  explicit StructExpr(std::vector<ProductTerm> terms) : terms_(std::move(terms)) {
    for (auto& t : terms_) std::sort(t.begin(), t.end());
    std::sort(terms_.begin(), terms_.end());
  }

  const std::vector<ProductTerm>& terms() const noexcept { return terms_; }

  bool has_term(const ProductTerm& t) const {
    return std::binary_search(terms_.begin(), terms_.end(), t);
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (i) s += " + ";
      s += gpmem::to_string(terms_[i]);
    }
    return s;
  }

  inline static StructExpr parse(std::string_view text);

  friend bool operator==(const StructExpr&, const StructExpr&) = default;
  friend bool operator<(const StructExpr& a, const StructExpr& b) { return a.terms_ < b.terms_; }

 private:
  std::vector<ProductTerm> terms_;
};

inline StructExpr struct_of(const SumOfProducts& sop) {
  SumOfProducts s = simplify(sop);
  std::vector<ProductTerm> terms;
  for (const auto& t : s.terms) {
    ProductTerm pt;
    for (const auto& f : t) pt.push_back(f.kind);
    terms.push_back(std::move(pt));
  }
  return StructExpr(std::move(terms));
}

// Parameters do not influence which rules fire, so the structure is computed
// with placeholder values.
inline StructExpr struct_of(const KernelExpr& expr) { return struct_of(detail::distribute(expr, nullptr)); }

namespace detail {

// Symbols joined by '*' within a term and '+' between terms.
inline std::vector<ProductTerm> parse_struct_terms(std::string_view text, std::size_t offset = 0) {
  std::vector<ProductTerm> terms(1);
  std::size_t i = 0;
  bool want_symbol = true;
  auto ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  for (ws(); i < text.size(); ws()) {
    if (want_symbol) {
      const std::size_t start = i;
      while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
      if (start == i) throw ParseError("expected a kernel symbol", offset + start);
      auto kind = kind_from_name(text.substr(start, i - start));
      if (!kind)
        throw ParseError("unknown kernel symbol '" + std::string(text.substr(start, i - start)) + "'",
                         offset + start);
      terms.back().push_back(*kind);
      want_symbol = false;
    } else if (text[i] == '*') {
      ++i;
      want_symbol = true;
    } else if (text[i] == '+') {
      ++i;
      terms.emplace_back();
      want_symbol = true;
    } else {
      throw ParseError("unexpected '" + std::string(1, text[i]) + "' in structure", offset + i);
    }
  }
  if (want_symbol) throw ParseError("structure ends with an operator or is empty", offset + i);
  return terms;
}

}  // namespace detail

// Parses "LIN + SE*PER + WN" and canonicalises it through the same
// simplification rules as struct_of.
inline StructExpr StructExpr::parse(std::string_view text) {
  SumOfProducts sop;
  for (const auto& pt : detail::parse_struct_terms(text)) {
    Term t;
    for (auto k : pt) t.push_back(Factor{k, std::vector<double>(arity(k), 1.0)});
    sop.terms.push_back(std::move(t));
  }
  return struct_of(sop);
}

}  // namespace gpmem
