#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gpmem/error.hpp"
#include "gpmem/kernel.hpp"
#include "gpmem/random.hpp"

namespace gpmem {

// Zero-mean GP prior: a kernel expression plus its hyperparameters.
struct GPModel {
  KernelExpr kernel;
  HyperParams params;
};

class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  // Returns std::nullopt on a non-positive pivot.
  static std::optional<CholeskyFactor> try_factor(const Matrix& K) {
    const Eigen::Index n = K.rows();
    Matrix L = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double d = K(j, j);
      for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
      if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
      L(j, j) = std::sqrt(d);
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double s = K(i, j);
        for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
        L(i, j) = s / L(j, j);
      }
    }
    CholeskyFactor f;
    f.L_ = std::move(L);
    return f;
  }

  static CholeskyFactor factor(const Matrix& K) {
    auto f = try_factor(K);
    if (!f) throw NumericError("matrix is not positive definite");
    return *f;
  }

  // Extends the factor by one row/column (Schur complement). `cross` holds
  // K(new, existing); `diag` is K(new, new). Leaves the factor untouched and
  // returns false when the extended matrix is not positive definite.
  bool append(const Vector& cross, double diag) {
    const Eigen::Index n = L_.rows();
    Vector l = n > 0 ? Vector(L_.triangularView<Eigen::Lower>().solve(cross)) : Vector();
    const double d = diag - (n > 0 ? l.squaredNorm() : 0.0);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    Matrix grown = Matrix::Zero(n + 1, n + 1);
    grown.topLeftCorner(n, n) = L_;
    if (n > 0) grown.block(n, 0, 1, n) = l.transpose();
    grown(n, n) = std::sqrt(d);
    L_ = std::move(grown);
    return true;
  }

  Eigen::Index size() const noexcept { return L_.rows(); }
  const Matrix& matrix_l() const noexcept { return L_; }

  Vector solve_lower(const Vector& b) const { return L_.triangularView<Eigen::Lower>().solve(b); }
  Matrix solve_lower(const Matrix& b) const { return L_.triangularView<Eigen::Lower>().solve(b); }

  // K^{-1} b via two triangular solves.
  Vector solve(const Vector& b) const {
    return L_.transpose().triangularView<Eigen::Upper>().solve(solve_lower(b));
  }
  Matrix solve(const Matrix& b) const {
    return L_.transpose().triangularView<Eigen::Upper>().solve(solve_lower(b));
  }

  double log_det() const { return 2.0 * L_.diagonal().array().log().sum(); }

 private:
  Matrix L_;
};

// Jitter escalation: first attempt without jitter, then
// 1e-8 * scale growing x10 up to 1e-2 * scale. scale defaults to mean(diag K)
// (or 1 when that is not positive).
struct JitterPolicy {
  double first = 1e-8;
  double last = 1e-2;
  double growth = 10.0;
};

struct JitteredFactor {
  CholeskyFactor chol;
  double jitter = 0.0;
};

inline JitteredFactor factor_with_jitter(const Matrix& K, std::optional<double> scale = std::nullopt,
                                         const JitterPolicy& policy = {}) {
  if (auto f = CholeskyFactor::try_factor(K)) return {std::move(*f), 0.0};
  double s = scale.value_or(K.rows() > 0 ? K.diagonal().mean() : 1.0);
  if (!(s > 0.0) || !std::isfinite(s)) s = 1.0;
  std::ostringstream tried;
  tried << "0";
  for (double rel = policy.first; rel <= policy.last * (1.0 + 1e-9); rel *= policy.growth) {
    const double jitter = rel * s;
    Matrix Kj = K;
    Kj.diagonal().array() += jitter;
    if (auto f = CholeskyFactor::try_factor(Kj)) return {std::move(*f), jitter};
    tried << ", " << jitter;
  }
  throw NumericError("Cholesky failed after jitter escalation (tried " + tried.str() + ")");
}

// Predictive Gaussian at query inputs.
struct PosteriorGaussian {
  Vector mean;
  Matrix cov;
  std::vector<double> inputs;
  // Jitter scale for sampling; the mean prior variance at the inputs.
  double prior_scale = 1.0;
};

// Exact conditioning state for one kernel binding and a training set; can be
// grown one observation at a time.
class GpFit {
 public:
  GpFit(BoundKernel kernel, std::span<const double> xs, std::span<const double> ys)
      : kernel_(std::move(kernel)), xs_(xs.begin(), xs.end()), y_(Vector::Zero(static_cast<Eigen::Index>(ys.size()))) {
    if (xs.size() != ys.size()) throw ConfigError("xs and ys differ in length");
    for (std::size_t i = 0; i < ys.size(); ++i) y_(static_cast<Eigen::Index>(i)) = ys[i];
    refactor();
  }

  GpFit(const GPModel& model, std::span<const double> xs, std::span<const double> ys)
      : GpFit(BoundKernel(model.kernel, model.params), xs, ys) {}

  // Adds one observation. Incremental O(n^2) extension; falls back to a full
  // refactorisation when the extension loses positive definiteness.
  void append(double x, double y) {
    const Eigen::Index n = static_cast<Eigen::Index>(xs_.size());
    Vector cross(n);
    for (Eigen::Index i = 0; i < n; ++i) cross(i) = kernel_(x, xs_[static_cast<std::size_t>(i)]);
    const double diag = kernel_(x, x) + jitter_;
    xs_.push_back(x);
    y_.conservativeResize(n + 1);
    y_(n) = y;
    if (chol_.append(cross, diag)) {
      alpha_ = chol_.solve(y_);
      ++incremental_updates_;
    } else {
      refactor();
    }
  }

  std::size_t size() const noexcept { return xs_.size(); }
  const std::vector<double>& xs() const noexcept { return xs_; }
  const Vector& ys() const noexcept { return y_; }
  double jitter() const noexcept { return jitter_; }
  const CholeskyFactor& cholesky() const noexcept { return chol_; }
  const BoundKernel& kernel() const noexcept { return kernel_; }
  std::size_t incremental_updates() const noexcept { return incremental_updates_; }

  // -1/2 y^T alpha - sum log L_ii - n/2 log 2 pi.
  double log_likelihood() const {
    const double n = static_cast<double>(xs_.size());
    if (xs_.empty()) return 0.0;
    return -0.5 * y_.dot(alpha_) - 0.5 * chol_.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
  }

  PosteriorGaussian posterior(std::span<const double> xq) const {
    if (xq.empty()) throw ConfigError("posterior needs at least one query point");
    PosteriorGaussian post;
    post.inputs.assign(xq.begin(), xq.end());
    Matrix Kqq = gram_matrix(kernel_, xq);
    post.prior_scale = Kqq.diagonal().mean();
    if (xs_.empty()) {
      post.mean = Vector::Zero(static_cast<Eigen::Index>(xq.size()));
      post.cov = std::move(Kqq);
      return post;
    }
    const Matrix Kxq = gram_matrix(kernel_, xs_, xq);
    post.mean = Kxq.transpose() * alpha_;
    const Matrix V = chol_.solve_lower(Kxq);
    Matrix cov = Kqq - V.transpose() * V;
    post.cov = 0.5 * (cov + cov.transpose());
    return post;
  }

  Vector posterior_mean(std::span<const double> xq) const {
    if (xs_.empty()) return Vector::Zero(static_cast<Eigen::Index>(xq.size()));
    return gram_matrix(kernel_, xs_, xq).transpose() * alpha_;
  }

  // Posterior mean and variance at a single input.
  std::pair<double, double> predict(double x) const {
    const double prior = kernel_(x, x);
    if (xs_.empty()) return {0.0, prior};
    const Eigen::Index n = static_cast<Eigen::Index>(xs_.size());
    Vector k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel_(xs_[static_cast<std::size_t>(i)], x);
    const Vector v = chol_.solve_lower(k);
    return {k.dot(alpha_), std::max(prior - v.squaredNorm(), 0.0)};
  }

  // d/dtheta_j log p(y | x, theta) for every distinct kernel parameter, in
  // kernel().names() order:
  //   1/2 alpha^T dK alpha - 1/2 tr(K^{-1} dK).
  std::vector<double> log_likelihood_gradient() const {
    const std::size_t p = kernel_.names().size();
    std::vector<double> grad(p, 0.0);
    const Eigen::Index n = static_cast<Eigen::Index>(xs_.size());
    if (n == 0) return grad;
    const Matrix Kinv = chol_.solve(Matrix(Matrix::Identity(n, n)));
    const Matrix W = alpha_ * alpha_.transpose() - Kinv;
    std::vector<double> g(p), diag_grad(p, 0.0);
    double diag_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double kij =
            kernel_.eval_with_gradient(xs_[static_cast<std::size_t>(i)], xs_[static_cast<std::size_t>(j)], g);
        const double w = (i == j ? 0.5 : 1.0) * W(i, j);
        for (std::size_t q = 0; q < p; ++q) grad[q] += w * g[q];
        if (i == j) {
          diag_sum += kij;
          for (std::size_t q = 0; q < p; ++q) diag_grad[q] += g[q];
        }
      }
    // Jitter is proportional to mean(diag K), so it moves with the parameters.
    if (jitter_ > 0.0 && diag_sum > 0.0) {
      const double ratio = jitter_ / diag_sum;
      for (std::size_t q = 0; q < p; ++q) grad[q] += 0.5 * W.trace() * ratio * diag_grad[q];
    }
    for (std::size_t q = 0; q < p; ++q)
      if (!std::isfinite(grad[q]))
        throw NumericError("non-finite likelihood gradient for parameter '" + kernel_.names()[q] + "'");
    return grad;
  }

 private:
  void refactor() {
    if (xs_.empty()) {
      chol_ = CholeskyFactor();
      jitter_ = 0.0;
      alpha_ = Vector();
      return;
    }
    auto jf = factor_with_jitter(gram_matrix(kernel_, xs_));
    chol_ = std::move(jf.chol);
    jitter_ = jf.jitter;
    alpha_ = chol_.solve(y_);
  }

  BoundKernel kernel_;
  std::vector<double> xs_;
  Vector y_;
  CholeskyFactor chol_;
  double jitter_ = 0.0;
  Vector alpha_;
  std::size_t incremental_updates_ = 0;
};

inline double log_likelihood(const GPModel& model, std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty()) throw ConfigError("log_likelihood needs at least one observation");
  return GpFit(model, xs, ys).log_likelihood();
}

inline PosteriorGaussian posterior(const GPModel& model, std::span<const double> xs, std::span<const double> ys,
                                   std::span<const double> xq) {
  return GpFit(model, xs, ys).posterior(xq);
}

// One joint draw mean + L z, L = chol(cov + jitter I).
inline Vector sample_joint(const PosteriorGaussian& post, Rng& rng) {
  const Eigen::Index n = post.mean.size();
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = standard_normal(rng);
  const double scale = post.prior_scale > 0.0 ? post.prior_scale : 1.0;
  const auto jf = factor_with_jitter(post.cov, scale);
  return post.mean + jf.chol.matrix_l() * z;
}

// Gradient of the log marginal likelihood with respect to named parameters.
inline std::vector<double> log_likelihood_gradient(const GPModel& model, std::span<const double> xs,
                                                   std::span<const double> ys,
                                                   const std::vector<std::string>& names) {
  GpFit fit(model, xs, ys);
  const auto full = fit.log_likelihood_gradient();
  const auto& kn = fit.kernel().names();
  std::vector<double> out;
  for (const auto& name : names) {
    auto it = std::find(kn.begin(), kn.end(), name);
    out.push_back(it == kn.end() ? 0.0 : full[static_cast<std::size_t>(it - kn.begin())]);
  }
  return out;
}

}  // namespace gpmem
