#pragma once

// Test-side reference implementations. These deliberately avoid the library's
// code paths: explicit inverses and determinants, partitioned conditioning,
// direct scalar formulas, brute-force statistics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gpmem/gpmem.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double se(double sf, double l, double x, double x2) {
  return sf * sf * std::exp(-(x - x2) * (x - x2) / (2.0 * l * l));
}
inline double lin(double sf, double x, double x2) { return sf * sf * x * x2; }
inline double per(double sf, double p, double l, double x, double x2) {
  const double s = std::sin(std::numbers::pi * std::abs(x - x2) / p);
  return sf * sf * std::exp(-2.0 * s * s / (l * l));
}
inline double rq(double sf, double a, double l, double x, double x2) {
  return sf * sf * std::pow(1.0 + (x - x2) * (x - x2) / (2.0 * a * l * l), -a);
}
inline double wn(double s, double x, double x2) { return x == x2 ? s * s : 0.0; }

// -1/2 y^T K^-1 y - 1/2 log|K| - n/2 log 2pi with an explicit inverse.
inline double dense_log_likelihood(const Matrix& K, const Vector& y) {
  const Matrix Kinv = K.fullPivLu().inverse();
  const double det = K.fullPivLu().determinant();
  const double n = static_cast<double>(y.size());
  return -0.5 * y.dot(Kinv * y) - 0.5 * std::log(det) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct Conditioned {
  Vector mean;
  Matrix cov;
};

// Conditions the joint Gaussian over (train, query) on the first n
// coordinates: mean = S21 S11^-1 y, cov = S22 - S21 S11^-1 S12.
inline Conditioned partitioned_condition(const Matrix& joint, Eigen::Index n, const Vector& y) {
  const Eigen::Index m = joint.rows() - n;
  const Matrix S11 = joint.topLeftCorner(n, n);
  const Matrix S12 = joint.topRightCorner(n, m);
  const Matrix S21 = joint.bottomLeftCorner(m, n);
  const Matrix S22 = joint.bottomRightCorner(m, m);
  const Matrix inv = S11.fullPivLu().inverse();
  return {S21 * inv * y, S22 - S21 * inv * S12};
}

// Joint gram of the concatenated inputs through eval_kernel one entry at a time.
inline Matrix joint_gram(const gpmem::KernelExpr& k, const gpmem::HyperParams& p, const std::vector<double>& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = gpmem::eval_kernel(k, p, a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
  return K;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Kolmogorov-Smirnov statistic of samples against a continuous cdf.
template <class Cdf>
double ks_statistic(std::vector<double> xs, const Cdf& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double ks_uniform(const std::vector<double>& xs, double lo, double hi) {
  return ks_statistic(xs, [&](double x) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); });
}

// Total variation distance between two distributions over the same keys.
template <class Map>
double total_variation(const Map& p, const Map& q) {
  double tv = 0.0;
  for (const auto& [k, v] : p) tv += std::abs(v - (q.count(k) ? q.at(k) : 0.0));
  for (const auto& [k, v] : q)
    if (!p.count(k)) tv += std::abs(v);
  return 0.5 * tv;
}

// Hand-rolled generator of random kernel expressions and parameter tables.
class KernelGen {
 public:
  explicit KernelGen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  // Random tree with up to `leaves` base kernels from `kinds`; parameters are
  // added to `params` with fresh names.
  gpmem::KernelExpr expr(gpmem::HyperParams& params, int leaves, const std::vector<gpmem::BaseKind>& kinds) {
    if (leaves <= 1) return leaf(params, kinds);
    const int left = integer(1, leaves - 1);
    auto a = expr(params, left, kinds);
    auto b = expr(params, leaves - left, kinds);
    return integer(0, 1) ? gpmem::add_funcs(a, b) : gpmem::mult_funcs(a, b);
  }

  gpmem::KernelExpr leaf(gpmem::HyperParams& params, const std::vector<gpmem::BaseKind>& kinds) {
    const auto kind = kinds[static_cast<std::size_t>(integer(0, static_cast<int>(kinds.size()) - 1))];
    std::vector<std::string> names;
    for (std::size_t i = 0; i < gpmem::arity(kind); ++i) {
      std::string name = "p" + std::to_string(counter_++);
      double v = uniform(0.5, 2.0);
      if (kind == gpmem::BaseKind::Per && i == 1) v = uniform(1.0, 4.0);
      params.add(name, v, "hyper");
      names.push_back(std::move(name));
    }
    return gpmem::KernelExpr::base(kind, std::move(names));
  }

  std::vector<double> points(std::size_t n, double lo, double hi) {
    std::vector<double> xs(n);
    for (auto& x : xs) x = uniform(lo, hi);
    return xs;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  int counter_ = 0;
};

}  // namespace oracle
