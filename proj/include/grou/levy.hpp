#pragma once

#include "grou/core.hpp"
#include "grou/grid.hpp"
#include "grou/linalg.hpp"
#include "grou/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace grou {

/// Normal mean-variance mixture J = W*gamma + sqrt(W)*B*Z with B*B^T = scatter
/// and W inverse Gaussian with unit mean and shape `shape` at unit time (the
/// NIG subfamily). shape = +inf degenerates to W = 1.
struct GhypParams {
  Vector gamma;
  Matrix scatter;
  double shape = 1.0;

  Index dim() const { return gamma.size(); }

  void validate() const {
    if (scatter.rows() != gamma.size() || scatter.cols() != gamma.size()) {
      throw Error(ErrorCode::BadDimension, "GHYP gamma/scatter dimensions differ");
    }
    if (!(shape > 0.0)) throw Error(ErrorCode::ConfigError, "GHYP mixing shape must be positive");
    if (!is_psd(scatter)) throw Error(ErrorCode::NotPSD, "GHYP scatter is not PSD");
  }
};

struct GaussianJumps {
  Matrix cov;
};

using JumpDist = std::variant<GaussianJumps, GhypParams>;

/// How compound-Poisson jump times are drawn.
///  PerComponent: independent Poisson(lambda*dt) counts per coordinate.
///  Shared: one Poisson clock; each event adds a full jump vector.
///  MedianCount: per-coordinate totals drawn on [0, T], the median total is
///    then used for every coordinate with uniform jump times.
enum class JumpClock { PerComponent, Shared, MedianCount };

struct CompoundPoisson {
  double intensity = 0.0;
  JumpDist heights;
  JumpClock clock = JumpClock::PerComponent;
};

struct GhypMotion {
  GhypParams params;
};

using JumpPart = std::variant<std::monostate, CompoundPoisson, GhypMotion>;

/// Driving noise L = W + J scaled by `multiplier`; the drift is always zero.
struct LevySpec {
  Matrix sigma;
  JumpPart jump;
  double multiplier = 1.0;

  Index dim() const { return sigma.rows(); }
  bool has_jumps() const { return !std::holds_alternative<std::monostate>(jump); }

  void validate() const {
    if (sigma.rows() != sigma.cols()) throw Error(ErrorCode::BadDimension, "sigma must be square");
    if (!is_psd(sigma)) throw Error(ErrorCode::NotPSD, "Brownian covariance is not PSD");
    if (!(multiplier >= 0.0)) throw Error(ErrorCode::ConfigError, "noise multiplier must be >= 0");
    if (const auto* cp = std::get_if<CompoundPoisson>(&jump)) {
      if (!(cp->intensity > 0.0)) throw Error(ErrorCode::ConfigError, "jump intensity must be positive");
      if (const auto* g = std::get_if<GaussianJumps>(&cp->heights)) {
        if (g->cov.rows() != dim() || !is_psd(g->cov)) {
          throw Error(ErrorCode::NotPSD, "jump covariance must be d x d PSD");
        }
      } else {
        const auto& gh = std::get<GhypParams>(cp->heights);
        gh.validate();
        if (gh.dim() != dim()) throw Error(ErrorCode::BadDimension, "GHYP jump dimension mismatch");
      }
    } else if (const auto* gm = std::get_if<GhypMotion>(&jump)) {
      gm->params.validate();
      if (gm->params.dim() != dim()) throw Error(ErrorCode::BadDimension, "GHYP motion dimension mismatch");
    }
  }
};

/// Inverse Gaussian draw, transformation with multiple roots
/// (Michael, Schucany & Haas). The root is evaluated in a cancellation-free
/// form so tiny shape/mean ratios stay accurate.
inline double sample_ig(double mean, double shape, Rng& rng) {
  if (!(mean > 0.0) || !(shape > 0.0)) {
    throw Error(ErrorCode::ConfigError, "inverse Gaussian needs positive mean and shape");
  }
  const double z = rng.gauss();
  const double u = rng.uniform();
  if (std::isinf(shape)) return mean;
  const double a = mean * z * z;
  if (a == 0.0) return mean;
  const double b = std::sqrt(4.0 * shape * a + a * a);
  const double root = mean * 4.0 * shape * a / ((a + b) * (a + b));
  if (!(root > 0.0)) return mean * mean / std::numeric_limits<double>::min();
  return u <= mean / (mean + root) ? root : mean * mean / root;
}

class BrownianSampler {
 public:
  BrownianSampler() = default;
  explicit BrownianSampler(const Matrix& sigma) : factor_(psd_factor(sigma)) {}

  Index dim() const { return factor_.rows(); }

  /// N(0, dt * sigma).
  Vector draw(double dt, Rng& rng) const {
    Vector z(factor_.cols());
    for (Index i = 0; i < z.size(); ++i) z(i) = rng.gauss();
    return std::sqrt(dt) * (factor_ * z);
  }

 private:
  Matrix factor_;
};

inline Vector sample_brownian(const Matrix& sigma, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  return BrownianSampler(sigma).draw(dt, rng);
}

/// Increment over dt of the GHYP Levy motion whose unit-time law is p: the
/// mixing variable is IG(dt, shape * dt^2), the time-dt marginal of the IG
/// subordinator, so E[W] = dt.
class GhypSampler {
 public:
  GhypSampler() = default;
  explicit GhypSampler(const GhypParams& p) : params_(p), factor_(psd_factor(p.scatter)) { p.validate(); }

  const GhypParams& params() const { return params_; }

  Vector draw(double dt, Rng& rng) const {
    const double w = std::isinf(params_.shape) ? dt : sample_ig(dt, params_.shape * dt * dt, rng);
    Vector z(factor_.cols());
    for (Index i = 0; i < z.size(); ++i) z(i) = rng.gauss();
    return w * params_.gamma + std::sqrt(w) * (factor_ * z);
  }

 private:
  GhypParams params_;
  Matrix factor_;
};

inline Vector sample_ghyp(const GhypParams& p, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  return GhypSampler(p).draw(dt, rng);
}

/// Noise increments on a grid; column k covers [t_k, t_{k+1}). The Brownian
/// and jump parts are kept separately and sum to `values` column by column.
struct IncrementMatrix {
  ObservationGrid grid;
  Matrix values;
  Matrix continuous;
  Matrix jumps;
  std::int64_t jump_count = 0;
};

/// Precomputed factors for repeated increment generation under one spec.
class IncrementGenerator {
 public:
  explicit IncrementGenerator(const LevySpec& spec) : spec_(spec), brownian_(spec.sigma) {
    spec.validate();
    if (const auto* cp = std::get_if<CompoundPoisson>(&spec.jump)) {
      if (const auto* g = std::get_if<GaussianJumps>(&cp->heights)) {
        gauss_jumps_ = BrownianSampler(g->cov);
      } else {
        ghyp_ = GhypSampler(std::get<GhypParams>(cp->heights));
      }
    } else if (const auto* gm = std::get_if<GhypMotion>(&spec.jump)) {
      ghyp_ = GhypSampler(gm->params);
    }
  }

  const LevySpec& spec() const { return spec_; }

  IncrementMatrix generate(const ObservationGrid& grid, Rng& rng) const {
    const Index d = spec_.dim();
    const Index n = grid.intervals();
    IncrementMatrix out{grid, Matrix::Zero(d, n), Matrix::Zero(d, n), Matrix::Zero(d, n), 0};

    const auto* cp = std::get_if<CompoundPoisson>(&spec_.jump);
    std::vector<std::vector<Index>> median_slots;
    if (cp != nullptr && cp->clock == JumpClock::MedianCount) median_slots = median_count_slots(*cp, grid, rng);

    for (Index k = 0; k < n; ++k) {
      const double dt = grid.spacing(k);
      out.continuous.col(k) = brownian_.draw(dt, rng);
      if (cp != nullptr) {
        switch (cp->clock) {
          case JumpClock::Shared: {
            const auto count = rng.poisson(cp->intensity * dt);
            for (std::int64_t c = 0; c < count; ++c) out.jumps.col(k) += jump_height(*cp, rng);
            out.jump_count += count;
            break;
          }
          case JumpClock::PerComponent:
            for (Index i = 0; i < d; ++i) {
              const auto count = rng.poisson(cp->intensity * dt);
              for (std::int64_t c = 0; c < count; ++c) out.jumps(i, k) += jump_height(*cp, rng)(i);
              out.jump_count += count;
            }
            break;
          case JumpClock::MedianCount:
            break;
        }
      } else if (std::holds_alternative<GhypMotion>(spec_.jump)) {
        out.jumps.col(k) = ghyp_.draw(dt, rng);
      }
    }
    if (!median_slots.empty()) {
      for (Index i = 0; i < d; ++i) {
        for (const Index slot : median_slots[static_cast<std::size_t>(i)]) {
          out.jumps(i, slot) += jump_height(*cp, rng)(i);
          ++out.jump_count;
        }
      }
    }
    out.continuous *= spec_.multiplier;
    out.jumps *= spec_.multiplier;
    out.values = out.continuous + out.jumps;
    return out;
  }

 private:
  Vector jump_height(const CompoundPoisson& cp, Rng& rng) const {
    if (std::holds_alternative<GaussianJumps>(cp.heights)) return gauss_jumps_.draw(1.0, rng);
    return ghyp_.draw(1.0, rng);
  }

  std::vector<std::vector<Index>> median_count_slots(const CompoundPoisson& cp, const ObservationGrid& grid,
                                                     Rng& rng) const {
    const Index d = spec_.dim();
    std::vector<std::int64_t> totals(static_cast<std::size_t>(d));
    for (auto& t : totals) t = rng.poisson(cp.intensity * grid.horizon());
    std::vector<std::int64_t> sorted = totals;
    std::sort(sorted.begin(), sorted.end());
    const std::int64_t median = sorted[sorted.size() / 2];
    std::vector<std::vector<Index>> slots(static_cast<std::size_t>(d));
    const auto& times = grid.times();
    for (Index i = 0; i < d; ++i) {
      for (std::int64_t c = 0; c < median; ++c) {
        const double t = times.front() + rng.uniform() * grid.horizon();
        auto it = std::upper_bound(times.begin(), times.end(), t);
        const auto slot = std::clamp<Index>(static_cast<Index>(it - times.begin()) - 1, 0, grid.intervals() - 1);
        slots[static_cast<std::size_t>(i)].push_back(slot);
      }
    }
    return slots;
  }

  LevySpec spec_;
  BrownianSampler brownian_;
  BrownianSampler gauss_jumps_;
  GhypSampler ghyp_;
};

inline IncrementMatrix generate_increments(const LevySpec& spec, const ObservationGrid& grid, Rng& rng) {
  return IncrementGenerator(spec).generate(grid, rng);
}

}  // namespace grou
