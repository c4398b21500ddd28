#pragma once

// Boolean queries over posterior structure samples, e.g.
//   "LIN AND PER AND Noise", "WN OR LIN*WN", "(SE*PER) OR PER".
// An atomic term holds iff it is one of a sample's additive terms.

#include <cctype>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpmem/algebra.hpp"
#include "gpmem/structure.hpp"

namespace gpmem {

// 1 iff `term` equals one of the sample's additive terms.
inline int cont(const ProductTerm& term, const StructExpr& sample) { return sample.has_term(term) ? 1 : 0; }

class Query {
 public:
  enum class Op { Term, And, Or };

  static Query term(ProductTerm t) {
    auto n = std::make_shared<Node>();
    n->op = Op::Term;
    std::sort(t.begin(), t.end());
    n->term = std::move(t);
    return Query(std::move(n));
  }
  static Query both(Query a, Query b) { return combine(Op::And, std::move(a), std::move(b)); }
  static Query either(Query a, Query b) { return combine(Op::Or, std::move(a), std::move(b)); }

  Op op() const { return node_->op; }
  const ProductTerm& atom() const { return node_->term; }
  Query left() const { return Query(node_->left); }
  Query right() const { return Query(node_->right); }

  bool holds(const StructExpr& s) const {
    switch (op()) {
      case Op::Term: return cont(atom(), s) == 1;
      case Op::And: return left().holds(s) && right().holds(s);
      case Op::Or: return left().holds(s) || right().holds(s);
    }
    return false;
  }

  // Distinct atomic terms in order of first appearance.
  std::vector<ProductTerm> atoms() const {
    std::vector<ProductTerm> out;
    collect(*this, out);
    return out;
  }

  std::string to_string() const {
    switch (op()) {
      case Op::Term: return gpmem::to_string(atom());
      case Op::And: return wrap(left(), Op::And) + " AND " + wrap(right(), Op::And);
      case Op::Or: return wrap(left(), Op::Or) + " OR " + wrap(right(), Op::Or);
    }
    return {};
  }

 private:
  struct Node {
    Op op = Op::Term;
    ProductTerm term;
    std::shared_ptr<const Node> left, right;
  };

  explicit Query(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static Query combine(Op op, Query a, Query b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->left = std::move(a.node_);
    n->right = std::move(b.node_);
    return Query(std::move(n));
  }

  static std::string wrap(const Query& q, Op parent) {
    return (q.op() != Op::Term && q.op() != parent) ? "(" + q.to_string() + ")" : q.to_string();
  }

  static void collect(const Query& q, std::vector<ProductTerm>& out) {
    if (q.op() == Op::Term) {
      if (std::find(out.begin(), out.end(), q.atom()) == out.end()) out.push_back(q.atom());
      return;
    }
    collect(q.left(), out);
    collect(q.right(), out);
  }

  std::shared_ptr<const Node> node_;
};

// P(Noise) = P(WN OR LIN*WN).
inline Query noise_query() {
  return Query::either(Query::term({BaseKind::WN}), Query::term({BaseKind::Lin, BaseKind::WN}));
}

namespace detail {

// expr   := and ('OR' and)*
// and    := atom ('AND' atom)*
// atom   := '(' expr ')' | 'Noise' | terms
// terms  := term ('+' term)*      (several terms mean all of them)
// term   := SYMBOL ('*' SYMBOL)*
class QueryParser {
 public:
  explicit QueryParser(std::string_view s) : s_(s) {}

  Query parse() {
    ws();
    if (pos_ == s_.size()) throw ParseError("empty query", 0);
    Query q = parse_or();
    ws();
    if (pos_ != s_.size()) throw ParseError("unexpected '" + std::string(1, s_[pos_]) + "' in query", pos_);
    return q;
  }

 private:
  Query parse_or() {
    Query q = parse_and();
    while (keyword("OR") || symbol('|')) q = Query::either(q, parse_and());
    return q;
  }

  Query parse_and() {
    Query q = parse_atom();
    while (keyword("AND") || symbol('&')) q = Query::both(q, parse_atom());
    return q;
  }

  Query parse_atom() {
    ws();
    if (symbol('(')) {
      Query q = parse_or();
      ws();
      if (!symbol(')')) throw ParseError("expected ')'", pos_);
      return q;
    }
    if (keyword("NOISE")) return noise_query();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '*' ||
                                s_[pos_] == '+' || s_[pos_] == ' ' || s_[pos_] == '\t')) {
      if (at_keyword("AND") || at_keyword("OR")) break;
      ++pos_;
    }
    std::string_view text = s_.substr(start, pos_ - start);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (text.empty()) {
      ws();
      throw ParseError(pos_ < s_.size() ? "expected a kernel term" : "query ends unexpectedly", pos_);
    }
    // Terms are canonicalised by the structure rules, so SE*SE means SE.
    auto raw = parse_struct_terms(text, start);
    std::optional<Query> q;
    for (const auto& t : raw) {
      SumOfProducts one;
      Term factors;
      for (auto k : t) factors.push_back(Factor{k, std::vector<double>(arity(k), 1.0)});
      one.terms.push_back(std::move(factors));
      const StructExpr canonical = struct_of(one);
      for (const auto& canon : canonical.terms()) {
        Query atom = Query::term(canon);
        q = q ? Query::both(*q, atom) : atom;
      }
    }
    return *q;
  }

  bool at_keyword(std::string_view kw) const {
    if (pos_ + kw.size() > s_.size()) return false;
    if (pos_ > 0 && std::isalnum(static_cast<unsigned char>(s_[pos_ - 1]))) return false;
    for (std::size_t i = 0; i < kw.size(); ++i)
      if (std::toupper(static_cast<unsigned char>(s_[pos_ + i])) != kw[i]) return false;
    const std::size_t end = pos_ + kw.size();
    return end == s_.size() || !std::isalnum(static_cast<unsigned char>(s_[end]));
  }

  bool keyword(std::string_view kw) {
    ws();
    if (!at_keyword(kw)) return false;
    pos_ += kw.size();
    return true;
  }

  bool symbol(char c) {
    ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Query parse_query(std::string_view text) { return detail::QueryParser(text).parse(); }

// Per-sample evaluation averaged over the sample set.
inline double query_prob(const Query& q, const PosteriorSampleSet& samples) {
  if (samples.empty()) throw ConfigError("query needs at least one posterior sample");
  std::size_t hits = 0;
  for (const auto& s : samples.samples()) hits += q.holds(s.structure) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// Same value with OR expanded by inclusion-exclusion.
inline double query_prob_inclusion_exclusion(const Query& q, const PosteriorSampleSet& samples) {
  if (q.op() == Query::Op::Or)
    return query_prob_inclusion_exclusion(q.left(), samples) + query_prob_inclusion_exclusion(q.right(), samples) -
           query_prob(Query::both(q.left(), q.right()), samples);
  return query_prob(q, samples);
}

struct QueryResult {
  std::string query;  // canonical text
  double probability = 0.0;
  std::vector<std::pair<std::string, double>> terms;  // atomic marginals
  std::size_t samples = 0;
};

inline QueryResult evaluate_query(std::string_view text, const PosteriorSampleSet& samples) {
  const Query q = parse_query(text);
  QueryResult r;
  r.query = q.to_string();
  r.probability = query_prob(q, samples);
  for (const auto& t : q.atoms()) r.terms.emplace_back(to_string(t), query_prob(Query::term(t), samples));
  r.samples = samples.size();
  return r;
}

}  // namespace gpmem
