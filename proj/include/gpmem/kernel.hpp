#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpmem/error.hpp"
#include "gpmem/params.hpp"

namespace gpmem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Declaration order is the canonical factor order of symbolic structures.
enum class BaseKind : int { Const = 0, Lin = 1, Per = 2, SE = 3, WN = 4, RQ = 5 };

inline constexpr std::array<BaseKind, 6> kAllBaseKinds = {BaseKind::Const, BaseKind::Lin, BaseKind::Per,
                                                          BaseKind::SE,    BaseKind::WN,  BaseKind::RQ};

// SE(sf,l) LIN(sf) PER(sf,p,l) WN(s) CONST(c) RQ(sf,a,l)
inline std::size_t arity(BaseKind k) {
  switch (k) {
    case BaseKind::Const: return 1;
    case BaseKind::Lin: return 1;
    case BaseKind::Per: return 3;
    case BaseKind::SE: return 2;
    case BaseKind::WN: return 1;
    case BaseKind::RQ: return 3;
  }
  return 0;
}

inline std::string_view kind_name(BaseKind k) {
  switch (k) {
    case BaseKind::Const: return "CONST";
    case BaseKind::Lin: return "LIN";
    case BaseKind::Per: return "PER";
    case BaseKind::SE: return "SE";
    case BaseKind::WN: return "WN";
    case BaseKind::RQ: return "RQ";
  }
  return "?";
}

inline std::optional<BaseKind> kind_from_name(std::string_view s) {
  std::string up(s);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "C") return BaseKind::Const;
  for (auto k : kAllBaseKinds)
    if (kind_name(k) == up) return k;
  return std::nullopt;
}

// Stationary kinds depend on x - x' only.
inline bool is_stationary(BaseKind k) { return k != BaseKind::Lin; }

// Closed-form base covariance. `v` holds the kind's parameters in the order
// given by arity(); sigma is always first.
inline double base_value(BaseKind kind, const double* v, double x, double x2) {
  const double d = x - x2;
  switch (kind) {
    case BaseKind::SE: return v[0] * v[0] * std::exp(-d * d / (2.0 * v[1] * v[1]));
    case BaseKind::Lin: return v[0] * v[0] * x * x2;
    case BaseKind::Const: return v[0] * v[0];
    case BaseKind::WN: return x == x2 ? v[0] * v[0] : 0.0;
    case BaseKind::RQ: return v[0] * v[0] * std::pow(1.0 + d * d / (2.0 * v[1] * v[2] * v[2]), -v[1]);
    case BaseKind::Per: {
      const double s = std::sin(std::numbers::pi * d / v[1]);
      return v[0] * v[0] * std::exp(-2.0 * s * s / (v[2] * v[2]));
    }
  }
  return 0.0;
}

// Partial derivatives of base_value with respect to each parameter.
inline void base_gradient(BaseKind kind, const double* v, double x, double x2, double* out) {
  const double d = x - x2;
  const double k = base_value(kind, v, x, x2);
  switch (kind) {
    case BaseKind::SE:
      out[0] = 2.0 * k / v[0];
      out[1] = k * d * d / (v[1] * v[1] * v[1]);
      return;
    case BaseKind::Lin:
      out[0] = 2.0 * v[0] * x * x2;
      return;
    case BaseKind::Const:
      out[0] = 2.0 * v[0];
      return;
    case BaseKind::WN:
      out[0] = x == x2 ? 2.0 * v[0] : 0.0;
      return;
    case BaseKind::RQ: {
      const double a = v[1], l = v[2];
      const double b = 1.0 + d * d / (2.0 * a * l * l);
      out[0] = 2.0 * k / v[0];
      out[1] = k * (-std::log(b) + (b - 1.0) / b);
      out[2] = v[0] * v[0] * std::pow(b, -a - 1.0) * d * d / (l * l * l);
      return;
    }
    case BaseKind::Per: {
      const double p = v[1], l = v[2];
      const double arg = std::numbers::pi * d / p;
      const double s = std::sin(arg), c = std::cos(arg);
      out[0] = 2.0 * k / v[0];
      out[1] = k * 4.0 * std::numbers::pi * d * s * c / (l * l * p * p);
      out[2] = k * 4.0 * s * s / (l * l * l);
      return;
    }
  }
}

struct BaseKernel {
  BaseKind kind = BaseKind::SE;
  std::vector<std::string> params;
};

// Immutable expression tree of base kernels joined by sums and products.
class KernelExpr {
 public:
  enum class Op { Base, Sum, Product };

  static KernelExpr base(BaseKind kind, std::vector<std::string> params) {
    if (params.size() != arity(kind))
      throw ConfigError(std::string(kind_name(kind)) + " expects " + std::to_string(arity(kind)) +
                        " parameter(s), got " + std::to_string(params.size()));
    auto n = std::make_shared<Node>();
    n->op = Op::Base;
    n->leaf = BaseKernel{kind, std::move(params)};
    return KernelExpr(std::move(n));
  }

  static KernelExpr combine(Op op, KernelExpr a, KernelExpr b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->left = std::move(a.node_);
    n->right = std::move(b.node_);
    return KernelExpr(std::move(n));
  }

  Op op() const { return node_->op; }
  bool is_base() const { return node_->op == Op::Base; }
  const BaseKernel& leaf() const { return node_->leaf; }
  KernelExpr left() const { return KernelExpr(node_->left); }
  KernelExpr right() const { return KernelExpr(node_->right); }

  // Parameter names in first-appearance order, without duplicates.
  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    collect(*this, out);
    return out;
  }

  friend bool operator==(const KernelExpr& a, const KernelExpr& b) {
    if (a.node_ == b.node_) return true;
    if (a.op() != b.op()) return false;
    if (a.is_base()) return a.leaf().kind == b.leaf().kind && a.leaf().params == b.leaf().params;
    return a.left() == b.left() && a.right() == b.right();
  }

 private:
  struct Node {
    Op op = Op::Base;
    BaseKernel leaf;
    std::shared_ptr<const Node> left, right;
  };

  explicit KernelExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static void collect(const KernelExpr& e, std::vector<std::string>& out) {
    if (e.is_base()) {
      for (const auto& p : e.leaf().params)
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
      return;
    }
    collect(e.left(), out);
    collect(e.right(), out);
  }

  std::shared_ptr<const Node> node_;
};

inline KernelExpr add_funcs(KernelExpr a, KernelExpr b) {
  return KernelExpr::combine(KernelExpr::Op::Sum, std::move(a), std::move(b));
}
inline KernelExpr mult_funcs(KernelExpr a, KernelExpr b) {
  return KernelExpr::combine(KernelExpr::Op::Product, std::move(a), std::move(b));
}
inline KernelExpr operator+(KernelExpr a, KernelExpr b) { return add_funcs(std::move(a), std::move(b)); }
inline KernelExpr operator*(KernelExpr a, KernelExpr b) { return mult_funcs(std::move(a), std::move(b)); }

inline KernelExpr se(std::string sf, std::string l) { return KernelExpr::base(BaseKind::SE, {std::move(sf), std::move(l)}); }
inline KernelExpr lin(std::string sf) { return KernelExpr::base(BaseKind::Lin, {std::move(sf)}); }
inline KernelExpr per(std::string sf, std::string p, std::string l) {
  return KernelExpr::base(BaseKind::Per, {std::move(sf), std::move(p), std::move(l)});
}
inline KernelExpr wn(std::string s) { return KernelExpr::base(BaseKind::WN, {std::move(s)}); }
inline KernelExpr constant(std::string c) { return KernelExpr::base(BaseKind::Const, {std::move(c)}); }
inline KernelExpr rq(std::string sf, std::string a, std::string l) {
  return KernelExpr::base(BaseKind::RQ, {std::move(sf), std::move(a), std::move(l)});
}

// A kernel expression with parameter values resolved once, for fast repeated
// evaluation. Gradients are reported per distinct parameter name.
class BoundKernel {
 public:
  BoundKernel(const KernelExpr& expr, const HyperParams& params) : names_(expr.param_names()) {
    root_ = compile(expr, params);
  }

  double operator()(double x, double x2) const {
    const double v = eval(root_, x, x2);
    if (!std::isfinite(v)) throw NumericError("kernel evaluated to a non-finite value");
    return v;
  }

  const std::vector<std::string>& names() const noexcept { return names_; }

  // Returns k(x,x2) and writes dk/dtheta_j into grad (size names().size()).
  double eval_with_gradient(double x, double x2, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    return eval_grad(root_, x, x2, grad);
  }

 private:
  struct Node {
    KernelExpr::Op op;
    BaseKind kind;
    std::array<double, 3> v{};
    std::array<int, 3> idx{-1, -1, -1};
    int left = -1, right = -1;
  };

  int compile(const KernelExpr& e, const HyperParams& params) {
    Node n{e.op(), BaseKind::SE};
    if (e.is_base()) {
      n.kind = e.leaf().kind;
      for (std::size_t i = 0; i < e.leaf().params.size(); ++i) {
        const auto& name = e.leaf().params[i];
        if (!params.contains(name))
          throw ConfigError("kernel parameter '" + name + "' does not resolve");
        n.v[i] = params.value(name);
        n.idx[i] = static_cast<int>(std::find(names_.begin(), names_.end(), name) - names_.begin());
      }
    } else {
      n.left = compile(e.left(), params);
      n.right = compile(e.right(), params);
    }
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  double eval(int i, double x, double x2) const {
    const Node& n = nodes_[i];
    switch (n.op) {
      case KernelExpr::Op::Base: return base_value(n.kind, n.v.data(), x, x2);
      case KernelExpr::Op::Sum: return eval(n.left, x, x2) + eval(n.right, x, x2);
      case KernelExpr::Op::Product: return eval(n.left, x, x2) * eval(n.right, x, x2);
    }
    return 0.0;
  }

  double eval_grad(int i, double x, double x2, std::span<double> grad) const {
    const Node& n = nodes_[i];
    if (n.op == KernelExpr::Op::Base) {
      double g[3] = {0.0, 0.0, 0.0};
      base_gradient(n.kind, n.v.data(), x, x2, g);
      for (std::size_t j = 0; j < arity(n.kind); ++j) grad[n.idx[j]] += g[j];
      return base_value(n.kind, n.v.data(), x, x2);
    }
    std::vector<double> gl(grad.size(), 0.0), gr(grad.size(), 0.0);
    const double a = eval_grad(n.left, x, x2, gl);
    const double b = eval_grad(n.right, x, x2, gr);
    if (n.op == KernelExpr::Op::Sum) {
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += gl[j] + gr[j];
      return a + b;
    }
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += gl[j] * b + a * gr[j];
    return a * b;
  }

  std::vector<std::string> names_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

inline double eval_kernel(const KernelExpr& expr, const HyperParams& params, double x, double x2) {
  return BoundKernel(expr, params)(x, x2);
}

inline Matrix gram_matrix(const BoundKernel& k, std::span<const double> xs, std::span<const double> xs2) {
  Matrix K(xs.size(), xs2.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < xs2.size(); ++j) K(i, j) = k(xs[i], xs2[j]);
  return K;
}

// Symmetric gram matrix: the upper triangle is evaluated and mirrored, so the
// result is exactly symmetric.
inline Matrix gram_matrix(const BoundKernel& k, std::span<const double> xs) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) K(i, j) = K(j, i) = k(xs[i], xs[j]);
  return K;
}

inline Matrix gram_matrix(const KernelExpr& expr, const HyperParams& params, std::span<const double> xs,
                          std::span<const double> xs2) {
  if (xs.empty() || xs2.empty()) throw ConfigError("gram_matrix needs non-empty inputs");
  return gram_matrix(BoundKernel(expr, params), xs, xs2);
}

// ---------------------------------------------------------------------------
// Text form:  SE(sf,l) + LIN(s) * (PER(a,p,l) + WN(n))

namespace detail {

class KernelParser {
 public:
  explicit KernelParser(std::string_view text) : s_(text) {}

  KernelExpr parse() {
    KernelExpr e = sum();
    skip_ws();
    if (pos_ != s_.size()) throw ParseError("unexpected '" + std::string(1, s_[pos_]) + "' in kernel", pos_);
    return e;
  }

 private:
  KernelExpr sum() {
    KernelExpr e = product();
    while (accept('+')) e = add_funcs(e, product());
    return e;
  }

  KernelExpr product() {
    KernelExpr e = factor();
    while (accept('*')) e = mult_funcs(e, factor());
    return e;
  }

  KernelExpr factor() {
    skip_ws();
    if (accept('(')) {
      KernelExpr e = sum();
      expect(')');
      return e;
    }
    const std::size_t at = pos_;
    const std::string name = identifier();
    if (name.empty()) throw ParseError("expected a kernel", at);
    auto kind = kind_from_name(name);
    if (!kind) throw ParseError("unknown kernel symbol '" + name + "'", at);
    expect('(');
    std::vector<std::string> params;
    do {
      skip_ws();
      const std::size_t p_at = pos_;
      std::string p = identifier();
      if (p.empty()) throw ParseError("expected a parameter name", p_at);
      params.push_back(std::move(p));
    } while (accept(','));
    expect(')');
    if (params.size() != arity(*kind))
      throw ParseError(std::string(kind_name(*kind)) + " takes " + std::to_string(arity(*kind)) +
                           " parameter(s)",
                       at);
    return KernelExpr::base(*kind, std::move(params));
  }

  std::string identifier() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (start < pos_ && std::isdigit(static_cast<unsigned char>(s_[start])))
      throw ParseError("identifiers must not start with a digit", start);
    return std::string(s_.substr(start, pos_ - start));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline KernelExpr parse_kernel(std::string_view text) { return detail::KernelParser(text).parse(); }

inline std::string to_string(const KernelExpr& e) {
  if (e.is_base()) {
    std::string s(kind_name(e.leaf().kind));
    s += '(';
    for (std::size_t i = 0; i < e.leaf().params.size(); ++i) {
      if (i) s += ',';
      s += e.leaf().params[i];
    }
    return s + ')';
  }
  if (e.op() == KernelExpr::Op::Sum) return to_string(e.left()) + " + " + to_string(e.right());
  auto wrap = [](const KernelExpr& c) {
    return c.op() == KernelExpr::Op::Sum ? "(" + to_string(c) + ")" : to_string(c);
  };
  return wrap(e.left()) + " * " + wrap(e.right());
}

}  // namespace gpmem
