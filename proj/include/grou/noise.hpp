#pragma once

#include "grou/bessel.hpp"
#include "grou/core.hpp"
#include "grou/graph.hpp"
#include "grou/grid.hpp"
#include "grou/levy.hpp"
#include "grou/linalg.hpp"
#include "grou/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace grou {

/// Estimated noise increments Delta_k L-hat, column k over [t_k, t_{k+1}).
struct RecoveredIncrements {
  ObservationGrid grid;
  Matrix values;

  Index dim() const { return values.rows(); }
};

/// Quadrature for int_{t_k}^{t_{k+1}} Y ds. LeftPoint matches paths generated
/// by the Euler scheme at the observation mesh.
enum class Quadrature { Trapezoid, LeftPoint };

inline Quadrature parse_quadrature(const std::string& name) {
  if (name == "trapezoid") return Quadrature::Trapezoid;
  if (name == "left") return Quadrature::LeftPoint;
  throw Error(ErrorCode::ConfigError, "unknown quadrature '" + name + "'");
}

/// Delta_k L = Delta_k Y + Q * int Y ds with the integral replaced by a
/// quadrature rule (trapezoid by default).
inline RecoveredIncrements recover_increments(const SampledPath& path, const DynamicsMatrix& q_hat,
                                              Quadrature rule = Quadrature::Trapezoid) {
  path.validate();
  if (q_hat.dim() != path.dim()) throw Error(ErrorCode::BadDimension, "Q and path dimensions differ");
  const Index n = path.grid.intervals();
  Matrix dy(path.dim(), n);
  Matrix integral(path.dim(), n);
  for (Index k = 0; k < n; ++k) {
    dy.col(k) = path.values.col(k + 1) - path.values.col(k);
    integral.col(k) = rule == Quadrature::Trapezoid
                          ? Vector(0.5 * path.grid.spacing(k) * (path.values.col(k) + path.values.col(k + 1)))
                          : Vector(path.grid.spacing(k) * path.values.col(k));
  }
  return {path.grid, dy + q_hat.q * integral};
}

/// Threshold: RV^C keeps increments with L2 norm <= eta * Delta^beta.
/// Bipower: RV^C from adjacent-increment products (pi/2 scaling, off-diagonal
/// entries by polarisation); the jump count still uses the threshold.
enum class RvMethod { Threshold, Bipower };

struct DecomposeOptions {
  /// Signed products x_i x_j instead of |x_i| |x_j|.
  bool signed_products = false;
  RvMethod method = RvMethod::Threshold;
};

struct NoiseDecomposition {
  Matrix rv_total;
  Matrix rv_continuous;
  Matrix rv_jump;
  Matrix sigma_hat;
  double lambda_hat = 0.0;
  /// Empty when no increment exceeded the cutoff.
  Matrix sigma_jump_hat;
  bool no_jumps = true;
  std::int64_t jump_count = 0;
  double eta = 0.0;
  double beta = 0.0;
};

namespace detail {

inline Matrix products(const Vector& x, const Vector& y, bool signed_products) {
  if (signed_products) return x * y.transpose();
  return x.cwiseAbs() * y.cwiseAbs().transpose();
}

inline Matrix bipower(const Matrix& inc) {
  const Index d = inc.rows();
  const double scale = std::numbers::pi / 2.0;
  auto bv = [&](const Eigen::RowVectorXd& s) {
    double acc = 0.0;
    for (Index k = 1; k < s.size(); ++k) acc += std::abs(s(k)) * std::abs(s(k - 1));
    return scale * acc;
  };
  Matrix out(d, d);
  for (Index i = 0; i < d; ++i) {
    out(i, i) = bv(inc.row(i));
    for (Index j = 0; j < i; ++j) {
      out(i, j) = out(j, i) = 0.25 * (bv(inc.row(i) + inc.row(j)) - bv(inc.row(i) - inc.row(j)));
    }
  }
  return out;
}

}  // namespace detail

inline NoiseDecomposition decompose_noise(const RecoveredIncrements& inc, double eta, double beta,
                                          const DecomposeOptions& opts = {}) {
  if (inc.values.cols() < 1) throw Error(ErrorCode::TooShort, "no increments to decompose");
  if (!(eta >= 0.0)) throw Error(ErrorCode::ConfigError, "eta must be non-negative");
  if (!(beta > 0.0 && beta < 0.5)) throw Error(ErrorCode::ConfigError, "beta must lie in (0, 1/2)");
  const Index d = inc.dim();
  const double cutoff = eta * std::pow(inc.grid.mesh(), beta);
  const double horizon = inc.grid.horizon();

  NoiseDecomposition out;
  out.eta = eta;
  out.beta = beta;
  out.rv_total = Matrix::Zero(d, d);
  Matrix rv_c = Matrix::Zero(d, d);
  for (Index k = 0; k < inc.values.cols(); ++k) {
    const Vector x = inc.values.col(k);
    const Matrix p = detail::products(x, x, opts.signed_products);
    out.rv_total += p;
    if (x.norm() <= cutoff) {
      rv_c += p;
    } else {
      ++out.jump_count;
    }
  }
  out.rv_continuous = opts.method == RvMethod::Bipower ? detail::bipower(inc.values) : rv_c;
  out.rv_jump = out.rv_total - out.rv_continuous;
  out.sigma_hat = psd_project(out.rv_continuous / horizon);
  out.lambda_hat = static_cast<double>(out.jump_count) / horizon;
  out.no_jumps = out.jump_count == 0;
  if (!out.no_jumps) out.sigma_jump_hat = psd_project(out.rv_jump / (out.lambda_hat * horizon));
  return out;
}

struct EtaDiagnosticRow {
  double eta = 0.0;
  double jump_probability = 0.0;
  double continuous_coverage = 0.0;
  double jump_coverage = 0.0;
};

/// Per eta: share of increments flagged as jumps, and the average ratio of the
/// diagonals of Sigma-hat and lambda-hat * Sigma^J-hat to the diagonal of the
/// empirical increment covariance per unit time.
inline std::vector<EtaDiagnosticRow> eta_diagnostic(const RecoveredIncrements& inc, double beta,
                                                    const std::vector<double>& eta_grid,
                                                    const DecomposeOptions& opts = {}) {
  if (eta_grid.empty()) throw Error(ErrorCode::ConfigError, "eta grid is empty");
  const Index n = inc.values.cols();
  const Vector mean = inc.values.rowwise().mean();
  const Matrix centred = inc.values.colwise() - mean;
  const Vector empirical = (centred.rowwise().squaredNorm() / std::max<Index>(1, n - 1)) *
                           (static_cast<double>(n) / inc.grid.horizon());
  std::vector<EtaDiagnosticRow> rows;
  for (const double eta : eta_grid) {
    const NoiseDecomposition dec = decompose_noise(inc, eta, beta, opts);
    EtaDiagnosticRow r;
    r.eta = eta;
    r.jump_probability = static_cast<double>(dec.jump_count) / static_cast<double>(n);
    const Vector cont = dec.rv_continuous.diagonal() / inc.grid.horizon();
    const Vector jump = dec.rv_jump.diagonal() / inc.grid.horizon();
    r.continuous_coverage = cont.cwiseQuotient(empirical).mean();
    r.jump_coverage = jump.cwiseQuotient(empirical).mean();
    rows.push_back(r);
  }
  return rows;
}

/// Centred moving-average trend (2 x period average for even periods) with the
/// edge values held constant, then per-phase seasonal means, then de-meaning.
inline Matrix preprocess(const Matrix& series, Index period) {
  if (period < 1) throw Error(ErrorCode::ConfigError, "period must be >= 1");
  const Index n = series.cols();
  if (n <= 2 * period) {
    throw Error(ErrorCode::TooShort, "need more than 2*period = " + std::to_string(2 * period) + " observations");
  }
  const Index d = series.rows();
  Matrix trend(d, n);
  const Index half = period / 2;
  const bool even = period % 2 == 0;
  const Index first = half;
  const Index last = n - 1 - half;
  for (Index t = first; t <= last; ++t) {
    if (even) {
      trend.col(t) = (series.middleCols(t - half + 1, period - 1).rowwise().sum() +
                      0.5 * (series.col(t - half) + series.col(t + half))) /
                     static_cast<double>(period);
    } else {
      trend.col(t) = series.middleCols(t - half, period).rowwise().mean();
    }
  }
  for (Index t = 0; t < first; ++t) trend.col(t) = trend.col(first);
  for (Index t = last + 1; t < n; ++t) trend.col(t) = trend.col(last);

  Matrix detrended = series - trend;
  Matrix seasonal = Matrix::Zero(d, period);
  std::vector<Index> counts(static_cast<std::size_t>(period), 0);
  for (Index t = 0; t < n; ++t) {
    seasonal.col(t % period) += detrended.col(t);
    ++counts[static_cast<std::size_t>(t % period)];
  }
  for (Index p = 0; p < period; ++p) seasonal.col(p) /= static_cast<double>(counts[static_cast<std::size_t>(p)]);
  for (Index t = 0; t < n; ++t) detrended.col(t) -= seasonal.col(t % period);
  detrended.colwise() -= detrended.rowwise().mean();
  return detrended;
}

struct GhypFitOptions {
  bool restrict_symmetric = false;
  int max_iters = 5000;
  double tol = 1e-8;
  /// Mixing shape beyond which the data is reported as Gaussian.
  double gaussian_shape = 1e6;
};

struct GhypFit {
  /// Parameters of the increment law itself (mixing mean one).
  GhypParams params;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool near_gaussian = false;
};

namespace detail {

struct GigMoments {
  double mean = 1.0;
  double inv_mean = 1.0;
};

/// E[W] and E[1/W] for W ~ GIG(lambda, chi, psi).
inline GigMoments gig_moments(double lambda, double chi, double psi) {
  const double s = std::sqrt(chi * psi);
  const double lk = log_bessel_k(lambda, s);
  return {std::sqrt(chi / psi) * std::exp(log_bessel_k(lambda + 1.0, s) - lk),
          std::sqrt(psi / chi) * std::exp(log_bessel_k(lambda - 1.0, s) - lk)};
}

inline double nig_log_density(double quad, double skew, double gamma_quad, double log_det, double shape,
                              Index d) {
  const double lam = -0.5 * (1.0 + static_cast<double>(d));
  const double chi = shape + quad;
  const double psi = shape + gamma_quad;
  return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det +
         0.5 * std::log(shape / (2.0 * std::numbers::pi)) + shape + skew + std::log(2.0) +
         0.5 * lam * std::log(chi / psi) + log_bessel_k(lam, std::sqrt(chi * psi));
}

}  // namespace detail

/// Mean log-likelihood of the columns of x under the NIG mixture p.
inline double ghyp_mean_log_likelihood(const Matrix& x, const GhypParams& p) {
  const Eigen::LLT<Matrix> llt(p.scatter);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPSD, "scatter is not positive definite");
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Vector sg = llt.solve(p.gamma);
  const double gq = p.gamma.dot(sg);
  const Matrix sx = llt.solve(x);
  double acc = 0.0;
  for (Index k = 0; k < x.cols(); ++k) {
    acc += detail::nig_log_density(x.col(k).dot(sx.col(k)), x.col(k).dot(sg), gq, log_det, p.shape, x.rows());
  }
  return acc / static_cast<double>(x.cols());
}

/// EM for the normal inverse Gaussian mixture x = W gamma + sqrt(W) B z with
/// W ~ IG(1, shape). The E-step uses the GIG posterior of W.
inline GhypFit fit_ghyp(const RecoveredIncrements& inc, const GhypFitOptions& opts = {}) {
  const Matrix& x = inc.values;
  const Index d = x.rows();
  const Index n = x.cols();
  if (n <= 10 * d) {
    throw Error(ErrorCode::TooShort, "GHYP fit needs more than 10*d = " + std::to_string(10 * d) + " increments");
  }
  const Vector mean = x.rowwise().mean();
  const Matrix centred = x.colwise() - mean;
  const Matrix cov = centred * centred.transpose() / static_cast<double>(n - 1);
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues()(0) > 1e-12 * std::max(es.eigenvalues()(d - 1), 1e-300))) {
      throw Error(ErrorCode::DegenerateData, "sample covariance of the increments is rank deficient");
    }
  }

  GhypFit fit;
  GhypParams& p = fit.params;
  p.gamma = Vector::Zero(d);
  p.scatter = cov;
  p.shape = 1.0;
  double prev = ghyp_mean_log_likelihood(x, p);
  const auto nd = static_cast<double>(n);
  const double lam = -0.5 * (1.0 + static_cast<double>(d));

  for (int it = 1; it <= opts.max_iters; ++it) {
    fit.iterations = it;
    const Eigen::LLT<Matrix> llt(p.scatter);
    const Vector sg = llt.solve(p.gamma);
    const double gq = p.gamma.dot(sg);
    const Matrix sx = llt.solve(x);
    Vector eta(n);
    Vector delta(n);
    for (Index k = 0; k < n; ++k) {
      const auto m = detail::gig_moments(lam, p.shape + x.col(k).dot(sx.col(k)), p.shape + gq);
      eta(k) = m.mean;
      delta(k) = m.inv_mean;
    }
    if (!opts.restrict_symmetric) p.gamma = x.rowwise().sum() / eta.sum();
    Matrix s = x * delta.asDiagonal() * x.transpose();
    const Vector xs = x.rowwise().sum();
    s -= xs * p.gamma.transpose() + p.gamma * xs.transpose();
    s += eta.sum() * p.gamma * p.gamma.transpose();
    p.scatter = symmetrize(s / nd);
    const double excess = delta.sum() + eta.sum() - 2.0 * nd;
    p.shape = excess > 0.0 ? nd / excess : std::numeric_limits<double>::infinity();
    if (!(p.shape < opts.gaussian_shape)) {
      p.shape = opts.gaussian_shape;
      fit.near_gaussian = true;
      fit.log_likelihood = ghyp_mean_log_likelihood(x, p);
      return fit;
    }
    const double ll = ghyp_mean_log_likelihood(x, p);
    fit.log_likelihood = ll;
    if (std::abs(ll - prev) < opts.tol) return fit;
    prev = ll;
  }
  throw Error(ErrorCode::NoConvergence, "GHYP EM did not converge in " + std::to_string(opts.max_iters) +
                                            " iterations");
}

/// Converts parameters of the increment law over dt into those of the unit-time
/// Levy motion (gamma/dt, scatter/dt, shape/dt), the inverse of the sampler's
/// time scaling.
inline GhypParams ghyp_to_unit_time(const GhypParams& p, double dt) {
  return {p.gamma / dt, p.scatter / dt, p.shape / dt};
}

}  // namespace grou
