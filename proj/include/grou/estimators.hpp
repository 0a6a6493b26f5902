#pragma once

#include "grou/core.hpp"
#include "grou/graph.hpp"
#include "grou/linalg.hpp"
#include "grou/noise.hpp"
#include "grou/simulate.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace grou {

/// Per-component jump thresholds v^(j) = Delta_N^{beta_j}. `thresholds`, when
/// set, overrides the power law (used for unfiltered and rescaled runs).
struct FilterConfig {
  Vector beta;
  std::optional<Vector> thresholds;

  static FilterConfig uniform(Index d, double beta = 0.4999) { return {Vector::Constant(d, beta), std::nullopt}; }

  static FilterConfig unfiltered(Index d) {
    return {Vector::Constant(d, 0.4999), Vector::Constant(d, std::numeric_limits<double>::infinity())};
  }

  void validate(Index d) const {
    if (beta.size() != d) throw Error(ErrorCode::BadDimension, "need one beta per component");
    for (Index i = 0; i < d; ++i) {
      if (!(beta(i) > 0.0 && beta(i) < 0.5)) {
        throw Error(ErrorCode::ConfigError, "beta must lie in (0, 1/2), got " + std::to_string(beta(i)));
      }
    }
    if (thresholds && thresholds->size() != d) throw Error(ErrorCode::BadDimension, "need one threshold per component");
  }

  Vector threshold_values(double mesh) const {
    if (thresholds) return *thresholds;
    Vector v(beta.size());
    for (Index i = 0; i < v.size(); ++i) v(i) = std::pow(mesh, beta(i));
    return v;
  }
};

/// sum_k Y_k Y_k^T (t_{k+1} - t_k) over the N - 1 intervals.
inline Matrix k_matrix_unchecked(const SampledPath& path) {
  const Index n = path.grid.intervals();
  Matrix weighted(path.dim(), n);
  for (Index k = 0; k < n; ++k) weighted.col(k) = path.values.col(k) * std::sqrt(path.grid.spacing(k));
  return weighted * weighted.transpose();
}

inline constexpr double kMaxCondition = 1e12;

inline void check_k(const Matrix& k) {
  const double cond = symmetric_condition(k);
  if (!(cond <= kMaxCondition)) {
    throw Error(ErrorCode::SingularK, "K has condition number " + std::to_string(cond));
  }
}

inline Matrix k_matrix(const SampledPath& path) {
  path.validate();
  Matrix k = k_matrix_unchecked(path);
  check_k(k);
  return k;
}

struct FilteredA {
  /// Column-stacked vector A-tilde.
  Vector a;
  /// Share of increments that passed the filter, per component.
  Vector pass_fraction;
};

/// A-tilde with entry (j, i) of unvec equal to -sum_k Delta_k Y^(j) Y_k^(i)
/// I{|Delta_k Y^(j)| <= v^(j)}, so that unvec(A) K^{-1} estimates Q.
inline FilteredA a_filtered(const SampledPath& path, const FilterConfig& f) {
  path.validate();
  const Index d = path.dim();
  f.validate(d);
  const Vector v = f.threshold_values(path.grid.mesh());
  const Index n = path.grid.intervals();
  Matrix dy(d, n);
  Vector passed = Vector::Zero(d);
  for (Index k = 0; k < n; ++k) {
    for (Index j = 0; j < d; ++j) {
      const double inc = path.values(j, k + 1) - path.values(j, k);
      const bool keep = std::abs(inc) <= v(j);
      dy(j, k) = keep ? inc : 0.0;
      passed(j) += keep ? 1.0 : 0.0;
    }
  }
  const Matrix m = -dy * path.values.leftCols(n).transpose();
  return {vec(m), passed / static_cast<double>(n)};
}

/// A-bar from the stored continuous increments.
inline Vector a_unfiltered_oracle(const SampledPath& path) {
  path.validate();
  if (!path.oracle) throw Error(ErrorCode::MissingOracle, "path carries no continuous-part increments");
  const Index n = path.grid.intervals();
  return vec(-(*path.oracle) * path.values.leftCols(n).transpose());
}

/// unvec(a) K^{-1}, via K X = unvec(a)^T; the d^2 x d^2 Kronecker system is
/// never formed.
inline Matrix solve_psi(const Matrix& k, const Vector& a) {
  const Index d = k.rows();
  const Matrix am = unvec(a, d);
  return k.ldlt().solve(am.transpose()).transpose();
}

enum class EstimateKind { Theta, Psi, LeastSquares, AdaptiveLasso };

inline const char* to_string(EstimateKind k) {
  switch (k) {
    case EstimateKind::Theta: return "theta";
    case EstimateKind::Psi: return "psi";
    case EstimateKind::LeastSquares: return "ls";
    case EstimateKind::AdaptiveLasso: return "adaptive_lasso";
  }
  return "unknown";
}

struct EstimateDiagnostics {
  double horizon = 0.0;
  double mesh = 0.0;
  Index observations = 0;
  Vector beta;
  Vector pass_fraction;
};

/// Asymptotic covariance of sqrt(T)(psi-tilde - psi) as the pair
/// (Gamma^{-1}, Sigma) with Gamma = K/T, i.e. Gamma^{-1} (x) Sigma.
struct KroneckerCov {
  Matrix left;
  Matrix right;

  Matrix dense() const {
    Matrix out(left.rows() * right.rows(), left.cols() * right.cols());
    for (Index i = 0; i < left.rows(); ++i) {
      for (Index j = 0; j < left.cols(); ++j) {
        out.block(i * right.rows(), j * right.cols(), right.rows(), right.cols()) = left(i, j) * right;
      }
    }
    return out;
  }
};

struct EstimateReport {
  EstimateKind kind = EstimateKind::Psi;
  /// theta (2), psi (d^2, column-stacked) or vec of the LS transition matrix.
  Vector point;
  /// Full-matrix form of the estimate: Q-hat for theta/psi, E-hat for LS.
  Matrix matrix;
  /// Asymptotic covariance of sqrt(T)(theta-tilde - theta); empty for psi/LS.
  Matrix acov;
  std::optional<KroneckerCov> psi_acov;
  Matrix sigma_hat;
  EstimateDiagnostics diagnostics;

  /// acov / T: finite-sample standard errors of the point estimate (theta).
  Vector standard_errors() const {
    return (acov.diagonal() / diagnostics.horizon).cwiseMax(0.0).cwiseSqrt();
  }
};

/// Estimator settings beyond the filter. sigma, when set, replaces the
/// realised-variance plug-in for the asymptotic covariance.
struct EstimatorOptions {
  FilterConfig filter;
  std::optional<Matrix> sigma;
  /// L2 cutoff multiplier for the plug-in Sigma-hat; <= 0 means sqrt(d).
  double eta = 0.0;
  Quadrature quadrature = Quadrature::Trapezoid;
};

namespace detail {

inline Matrix plugin_sigma(const SampledPath& path, const Matrix& q_hat, const EstimatorOptions& opts) {
  if (opts.sigma) return *opts.sigma;
  const Index d = path.dim();
  const double eta = opts.eta > 0.0 ? opts.eta : std::sqrt(static_cast<double>(d));
  const double beta = opts.filter.beta.size() > 0 ? opts.filter.beta.mean() : 0.4999;
  const RecoveredIncrements inc = recover_increments(path, DynamicsMatrix{q_hat}, opts.quadrature);
  return decompose_noise(inc, eta, beta, DecomposeOptions{true, RvMethod::Threshold}).sigma_hat;
}

}  // namespace detail

inline EstimateReport psi_mle(const SampledPath& path, const EstimatorOptions& opts) {
  const Matrix k = k_matrix(path);
  const FilteredA fa = a_filtered(path, opts.filter);
  EstimateReport r;
  r.kind = EstimateKind::Psi;
  r.matrix = solve_psi(k, fa.a);
  r.point = vec(r.matrix);
  r.diagnostics = {path.grid.horizon(), path.grid.mesh(), path.size(), opts.filter.beta, fa.pass_fraction};
  r.sigma_hat = detail::plugin_sigma(path, r.matrix, opts);
  const Matrix gamma = k / path.grid.horizon();
  r.psi_acov = KroneckerCov{gamma.ldlt().solve(Matrix::Identity(k.rows(), k.cols())), r.sigma_hat};
  return r;
}

inline EstimateReport psi_mle(const SampledPath& path, const FilterConfig& f) {
  return psi_mle(path, EstimatorOptions{f, std::nullopt, 0.0, Quadrature::Trapezoid});
}

/// Contraction d^{-1} (rho vec(A)^T ; vec(I)^T) psi in matrix form.
inline Vector theta_from_q(const Matrix& q_hat, const NormalizedAdjacency& an) {
  const double d = static_cast<double>(an.dim());
  return Vector{{rho(an) * an.adjacency.matrix().cwiseProduct(q_hat).sum() / d, q_hat.trace() / d}};
}

/// G-tilde_ab = tr(X_a^T Sigma X_b Gamma^{-1}) / d^2 with X_1 = rho A, X_2 = I.
inline Matrix theta_acov(const NormalizedAdjacency& an, const Matrix& sigma, const Matrix& gamma_inv) {
  const Index d = an.dim();
  const Matrix x1 = rho(an) * an.adjacency.matrix();
  const Matrix x2 = Matrix::Identity(d, d);
  const Matrix* xs[2] = {&x1, &x2};
  Matrix g(2, 2);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) g(a, b) = (xs[a]->transpose() * sigma * *xs[b] * gamma_inv).trace();
  }
  return symmetrize(g / static_cast<double>(d * d));
}

inline EstimateReport theta_mle(const SampledPath& path, const NormalizedAdjacency& an, const EstimatorOptions& opts) {
  if (an.dim() != path.dim()) throw Error(ErrorCode::BadDimension, "graph and path dimensions differ");
  EstimateReport psi = psi_mle(path, opts);
  EstimateReport r = psi;
  r.kind = EstimateKind::Theta;
  r.point = theta_from_q(psi.matrix, an);
  r.acov = theta_acov(an, psi.sigma_hat, psi.psi_acov->left);
  r.psi_acov.reset();
  const double t1 = r.point(0);
  const double t2 = r.point(1);
  r.matrix = t2 * Matrix::Identity(an.dim(), an.dim()) + t1 * an.entries;
  return r;
}

inline EstimateReport theta_mle(const SampledPath& path, const NormalizedAdjacency& an, const FilterConfig& f) {
  return theta_mle(path, an, EstimatorOptions{f, std::nullopt, 0.0, Quadrature::Trapezoid});
}

/// Multivariate AR(1) least squares on a uniform grid.
inline EstimateReport ls_estimator(const SampledPath& path) {
  path.validate();
  if (!path.grid.is_uniform(1e-6)) throw Error(ErrorCode::NonUniformGrid, "least squares needs a uniform grid");
  const Index n = path.grid.intervals();
  const Matrix lag = path.values.leftCols(n);
  const Matrix lead = path.values.rightCols(n);
  const Matrix gram = lag * lag.transpose();
  check_k(gram);
  EstimateReport r;
  r.kind = EstimateKind::LeastSquares;
  r.matrix = gram.ldlt().solve(lag * lead.transpose()).transpose();
  r.point = vec(r.matrix);
  r.diagnostics = {path.grid.horizon(), path.grid.mesh(), path.size(), Vector(), Vector()};
  return r;
}

/// ||E - exp(-Q delta)||_F / ||exp(-Q delta)||_F for a transition estimate E.
inline double rem_transition(const Matrix& transition, const DynamicsMatrix& true_q, double delta) {
  if (transition.rows() != true_q.dim() || transition.cols() != true_q.dim()) {
    throw Error(ErrorCode::BadDimension, "REM operands differ in shape");
  }
  const Matrix truth = matrix_exp(-true_q.q * delta);
  return (transition - truth).norm() / truth.norm();
}

/// REM of a dynamics estimate X: compares exp(-X delta) with exp(-Q delta).
inline double rem(const Matrix& estimate_q, const DynamicsMatrix& true_q, double delta) {
  if (estimate_q.rows() != true_q.dim() || estimate_q.cols() != true_q.dim()) {
    throw Error(ErrorCode::BadDimension, "REM operands differ in shape");
  }
  return rem_transition(matrix_exp(-estimate_q * delta), true_q, delta);
}

}  // namespace grou
