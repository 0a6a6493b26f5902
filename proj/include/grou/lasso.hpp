#pragma once

#include "grou/core.hpp"
#include "grou/estimators.hpp"
#include "grou/graph.hpp"
#include "grou/linalg.hpp"
#include "grou/simulate.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace grou {

struct LassoConfig {
  /// Penalty level; std::nullopt selects lambda = c N^{-(2+gamma)/4} with c
  /// picked by BIC over c_grid.
  std::optional<double> lambda;
  double gamma = 1.0;
  /// Entries with |q| <= support_tol count as zero; default 1e-8 max|q|.
  std::optional<double> support_tol;
  int max_iters = 200000;
  double convergence_tol = 1e-7;
  bool accelerate = true;
  std::vector<double> c_grid;

  void validate() const {
    if (lambda && !(*lambda >= 0.0)) throw Error(ErrorCode::ConfigError, "lambda must be >= 0");
    if (!(gamma > 0.0)) throw Error(ErrorCode::ConfigError, "gamma must be > 0");
    if (support_tol && !(*support_tol > 0.0)) throw Error(ErrorCode::ConfigError, "support_tol must be > 0");
    if (max_iters < 1 || !(convergence_tol > 0.0)) throw Error(ErrorCode::ConfigError, "bad optimiser settings");
  }

  std::vector<double> effective_c_grid() const {
    if (!c_grid.empty()) return c_grid;
    std::vector<double> g;
    for (int e = -8; e <= 24; ++e) g.push_back(std::pow(10.0, 0.25 * e));
    return g;
  }
};

struct LassoPathPoint {
  double lambda = 0.0;
  Index support_size = 0;
  double bic = 0.0;
};

struct SparseFit {
  Matrix q_hat;
  std::vector<std::pair<Index, Index>> support;
  std::vector<LassoPathPoint> lasso_path;
  double lambda = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
};

/// Pieces of the quasi-likelihood: A = unvec(A-tilde), K, Sigma^{-1}.
struct LassoProblem {
  Matrix k;
  Matrix a;
  Matrix sigma_inv;
  Matrix weights;
  Index observations = 0;

  Index dim() const { return k.rows(); }
};

/// -l(Q) = -tr(Q^T S^{-1} A) + 1/2 tr(Q^T S^{-1} Q K), the negated
/// discretised log-likelihood, plus the weighted L1 penalty.
inline double neg_penalized_objective(const Matrix& q, const Matrix& k_bar, const Vector& a_tilde,
                                      const Matrix& sigma, const Matrix& weights, double lambda) {
  const Index d = q.rows();
  const Matrix a = unvec(a_tilde, d);
  const Matrix si = sigma.ldlt().solve(Matrix::Identity(d, d));
  const double smooth = -(q.transpose() * si * a).trace() + 0.5 * (q.transpose() * si * q * k_bar).trace();
  if (lambda == 0.0) return smooth;
  double pen = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    if (q(i) != 0.0) pen += weights(i) * std::abs(q(i));
  }
  return smooth + lambda * pen;
}

namespace detail {

inline double smooth_part(const LassoProblem& p, const Matrix& q) {
  return -(q.transpose() * p.sigma_inv * p.a).trace() + 0.5 * (q.transpose() * p.sigma_inv * q * p.k).trace();
}

inline Matrix smooth_gradient(const LassoProblem& p, const Matrix& q) { return p.sigma_inv * (q * p.k - p.a); }

inline double penalty(const LassoProblem& p, const Matrix& q) {
  double pen = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    if (q(i) != 0.0) pen += p.weights(i) * std::abs(q(i));
  }
  return pen;
}

inline Matrix soft_threshold(const Matrix& z, const Matrix& thresholds) {
  Matrix out(z.rows(), z.cols());
  for (Index i = 0; i < z.size(); ++i) {
    const double t = thresholds(i);
    out(i) = std::isinf(t) ? 0.0 : std::copysign(std::max(std::abs(z(i)) - t, 0.0), z(i));
  }
  return out;
}

}  // namespace detail

/// Largest violation of the lasso optimality conditions at q.
inline double kkt_residual(const LassoProblem& p, const Matrix& q, double lambda) {
  const Matrix g = detail::smooth_gradient(p, q);
  double worst = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    const double lw = lambda * p.weights(i);
    double r = 0.0;
    if (q(i) != 0.0) {
      r = std::abs(g(i) + lw * (q(i) > 0.0 ? 1.0 : -1.0));
    } else if (!std::isinf(lw)) {
      r = std::max(0.0, std::abs(g(i)) - lw);
    }
    worst = std::max(worst, r);
  }
  return worst;
}

/// Proximal gradient (FISTA with adaptive restart) on the penalised objective.
/// Converged once the KKT residual falls below cfg.convergence_tol times
/// max(1, max|S^{-1} A|).
inline SparseFit solve_lasso(const LassoProblem& p, double lambda, const LassoConfig& cfg,
                             std::optional<Matrix> warm_start = std::nullopt) {
  const Index d = p.dim();
  const double lk = Eigen::SelfAdjointEigenSolver<Matrix>(p.k, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double ls = Eigen::SelfAdjointEigenSolver<Matrix>(p.sigma_inv, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = 1.0 / (lk * ls);
  const Matrix thresholds = (lambda * step) * p.weights;
  // Relative to the gradient at zero, which grows with the horizon.
  const double tol = cfg.convergence_tol * std::max(1.0, (p.sigma_inv * p.a).cwiseAbs().maxCoeff());

  Matrix x = warm_start ? *warm_start : Matrix::Zero(d, d);
  Matrix y = x;
  double t = 1.0;
  double obj = detail::smooth_part(p, x) + lambda * detail::penalty(p, x);
  SparseFit fit;
  fit.lambda = lambda;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Matrix next = detail::soft_threshold(y - step * detail::smooth_gradient(p, y), thresholds);
    const double next_obj = detail::smooth_part(p, next) + lambda * detail::penalty(p, next);
    if (cfg.accelerate) {
      if (next_obj > obj && t > 1.0) {
        // Restart momentum when the objective goes up. A plain proximal step
        // from x is monotone, so rounding-level increases there are accepted.
        y = x;
        t = 1.0;
        continue;
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = next + ((t - 1.0) / t_next) * (next - x);
      t = t_next;
    } else {
      y = next;
    }
    x = next;
    obj = next_obj;
    fit.iterations = it;
    if (it % 10 == 0 || !cfg.accelerate) {
      const double res = kkt_residual(p, x, lambda);
      if (res < tol) {
        fit.kkt_residual = res;
        fit.q_hat = x;
        return fit;
      }
    }
  }
  fit.q_hat = x;
  fit.kkt_residual = kkt_residual(p, x, lambda);
  if (fit.kkt_residual < tol) return fit;
  throw Error(ErrorCode::NoConvergence, "adaptive lasso stopped after " + std::to_string(cfg.max_iters) +
                                            " iterations with KKT residual " + std::to_string(fit.kkt_residual));
}

inline std::vector<std::pair<Index, Index>> support_of(const Matrix& q, double tol) {
  std::vector<std::pair<Index, Index>> s;
  for (Index j = 0; j < q.cols(); ++j) {
    for (Index i = 0; i < q.rows(); ++i) {
      if (std::abs(q(i, j)) > tol) s.emplace_back(i, j);
    }
  }
  return s;
}

/// Builds the quasi-likelihood pieces and adaptive weights |Q-tilde|^{-gamma}.
inline LassoProblem make_lasso_problem(const SampledPath& path, const FilterConfig& f, const Matrix& sigma,
                                       double gamma) {
  const Matrix k = k_matrix(path);
  const FilteredA fa = a_filtered(path, f);
  const Index d = path.dim();
  if (sigma.rows() != d || sigma.cols() != d) throw Error(ErrorCode::BadDimension, "sigma has wrong shape");
  const Eigen::LDLT<Matrix> ldlt(sigma);
  if (ldlt.info() != Eigen::Success || !(symmetric_condition(sigma) < kMaxCondition)) {
    throw Error(ErrorCode::NotPSD, "sigma must be positive definite for the lasso");
  }
  LassoProblem p;
  p.k = k;
  p.a = unvec(fa.a, d);
  p.sigma_inv = symmetrize(ldlt.solve(Matrix::Identity(d, d)));
  p.observations = path.size();
  const Matrix pilot = solve_psi(k, fa.a);
  p.weights = pilot.cwiseAbs().array().pow(-gamma).matrix();
  return p;
}

inline double resolve_support_tol(const LassoConfig& cfg, const Matrix& q) {
  if (cfg.support_tol) return *cfg.support_tol;
  return 1e-8 * std::max(q.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
}

/// Fits at cfg.lambda, or scans lambda = c N^{-(2+gamma)/4} over the c grid and
/// keeps the fit minimising -2 l + |support| log N.
inline SparseFit fit_adaptive_lasso(const LassoProblem& p, const LassoConfig& cfg) {
  cfg.validate();
  if (cfg.lambda) {
    SparseFit fit = solve_lasso(p, *cfg.lambda, cfg);
    fit.support = support_of(fit.q_hat, resolve_support_tol(cfg, fit.q_hat));
    fit.lasso_path.push_back({fit.lambda, static_cast<Index>(fit.support.size()), 0.0});
    return fit;
  }
  const double n = static_cast<double>(p.observations);
  const double rate = std::pow(n, -(2.0 + cfg.gamma) / 4.0);
  std::optional<SparseFit> best;
  double best_bic = std::numeric_limits<double>::infinity();
  std::vector<LassoPathPoint> trace;
  std::optional<Matrix> warm;
  for (const double c : cfg.effective_c_grid()) {
    SparseFit fit = solve_lasso(p, c * rate, cfg, warm);
    warm = fit.q_hat;
    fit.support = support_of(fit.q_hat, resolve_support_tol(cfg, fit.q_hat));
    const double bic = 2.0 * detail::smooth_part(p, fit.q_hat) + static_cast<double>(fit.support.size()) * std::log(n);
    trace.push_back({fit.lambda, static_cast<Index>(fit.support.size()), bic});
    if (bic < best_bic) {
      best_bic = bic;
      best = std::move(fit);
    }
  }
  best->lasso_path = std::move(trace);
  return *best;
}

inline SparseFit fit_adaptive_lasso(const SampledPath& path, const FilterConfig& f, const LassoConfig& cfg,
                                    const Matrix& sigma) {
  cfg.validate();
  return fit_adaptive_lasso(make_lasso_problem(path, f, sigma, cfg.gamma), cfg);
}

struct SupportRecovery {
  /// Counts over all d^2 entries, diagonal included.
  Index tp = 0;
  Index fp = 0;
  Index fn = 0;
  Index tn = 0;
  /// The same counts restricted to off-diagonal entries.
  Index offdiag_tp = 0;
  Index offdiag_fp = 0;
  Index offdiag_fn = 0;
  bool exact_match = false;
};

inline SupportRecovery evaluate_support_recovery(const SparseFit& fit, const DynamicsMatrix& true_q, double tol) {
  const Index d = true_q.dim();
  if (fit.q_hat.rows() != d || fit.q_hat.cols() != d) throw Error(ErrorCode::BadDimension, "shape mismatch");
  std::vector<char> est(static_cast<std::size_t>(d * d), 0);
  for (const auto& [i, j] : fit.support) est[static_cast<std::size_t>(j * d + i)] = 1;
  SupportRecovery r;
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) {
      const bool truth = std::abs(true_q.q(i, j)) > tol;
      const bool got = est[static_cast<std::size_t>(j * d + i)] != 0;
      const bool off = i != j;
      if (truth && got) {
        ++r.tp;
        r.offdiag_tp += off;
      } else if (!truth && got) {
        ++r.fp;
        r.offdiag_fp += off;
      } else if (truth && !got) {
        ++r.fn;
        r.offdiag_fn += off;
      } else {
        ++r.tn;
      }
    }
  }
  r.exact_match = r.fp == 0 && r.fn == 0;
  return r;
}

/// Undirected graph with an edge wherever either direction is in the support.
inline AdjacencyMatrix support_to_adjacency(const SparseFit& fit) {
  const Index d = fit.q_hat.rows();
  std::vector<std::pair<Index, Index>> edges;
  for (const auto& [i, j] : fit.support) {
    if (i != j) edges.emplace_back(std::min(i, j), std::max(i, j));
  }
  return AdjacencyMatrix::from_edges(d, edges);
}

}  // namespace grou
