#pragma once

#include "grou/config.hpp"
#include "grou/core.hpp"
#include "grou/estimators.hpp"
#include "grou/graph.hpp"
#include "grou/json_io.hpp"
#include "grou/lasso.hpp"
#include "grou/noise.hpp"
#include "grou/parallel.hpp"
#include "grou/random.hpp"
#include "grou/simulate.hpp"
#include "grou/stats.hpp"
#include "grou/table.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace grou {

struct ExperimentResult {
  std::string experiment;
  ResultTable table;
  std::vector<std::pair<std::string, ResultTable>> extra_tables;
  Json summary = Json::object();
  Index n_paths = 0;
  Index succeeded = 0;
  Index excluded = 0;
  double runtime_seconds = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

namespace detail {

// Stream tags keep the random inputs of different roles apart.
inline constexpr std::uint64_t kTagPath = 0;
inline constexpr std::uint64_t kTagGrid = 1;
inline constexpr std::uint64_t kTagBootstrap = 2;
inline constexpr std::uint64_t kTagFresh = 3;

inline ObservationGrid make_grid(const ExperimentConfig& c, Index n, double delta, std::uint64_t index) {
  if (!c.simulation.jittered) return ObservationGrid::uniform(n, delta);
  Rng rng = Rng::stream(c.master_seed, index, kTagGrid);
  return ObservationGrid::jittered(n, delta, c.simulation.jitter, rng);
}

inline SampledPath simulate_on(const ExperimentConfig& c, const DynamicsMatrix& q, const LevySpec& noise,
                               const ObservationGrid& grid, std::uint64_t index, std::uint64_t tag) {
  Rng rng = Rng::stream(c.master_seed, index, tag);
  SimulationOptions opts{c.simulation.refinement, c.simulation.scheme, std::nullopt};
  if (c.simulation.y0) {
    opts.y0 = *c.simulation.y0;
  } else if (!c.simulation.stationary) {
    opts.y0 = Vector::Zero(q.dim());
  }
  return simulate_path(q, noise, grid, opts, rng);
}

inline SampledPath simulate_for(const ExperimentConfig& c, const DynamicsMatrix& q, const LevySpec& noise, Index n,
                                std::uint64_t index, std::uint64_t tag = kTagPath) {
  return simulate_on(c, q, noise, make_grid(c, n, c.delta, index), index, tag);
}

inline ThetaParams require_theta(const ExperimentConfig& c) {
  if (!c.theta) throw Error(ErrorCode::ConfigError, c.experiment + " needs true 'theta'");
  return *c.theta;
}

inline std::vector<GraphConfig> topologies_of(const ExperimentConfig& c) {
  return c.sweep.topologies.empty() ? std::vector<GraphConfig>{c.graph} : c.sweep.topologies;
}

inline std::string topology_label(const GraphConfig& g) {
  return g.kind == TopologyKind::File ? "file:" + g.path : to_string(g.kind);
}

template <class R>
std::vector<R> successes(const std::vector<Outcome<R>>& outcomes, Index& excluded, const std::string& label) {
  std::vector<R> ok;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].value) {
      ok.push_back(*outcomes[i].value);
    } else {
      ++excluded;
      std::cerr << "[" << label << "] path " << i << " excluded: " << outcomes[i].error << '\n';
    }
  }
  return ok;
}

/// Standard error of a sample median under approximate normality.
inline double median_se(const std::vector<double>& x) {
  if (x.size() < 2) return std::nan("");
  return 1.2533141373155 * stats::sd(x) / std::sqrt(static_cast<double>(x.size()));
}

inline std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t c) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

/// Symmetric inverse square root.
inline Matrix inverse_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  const Vector ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw Error(ErrorCode::NotPSD, "asymptotic covariance is not positive definite");
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

inline double jump_event_rate(const LevySpec& noise, Index d) {
  const auto* cp = std::get_if<CompoundPoisson>(&noise.jump);
  if (cp == nullptr) return 0.0;
  return cp->clock == JumpClock::Shared ? cp->intensity : cp->intensity * static_cast<double>(d);
}

inline Matrix jump_covariance(const LevySpec& noise) {
  const auto* cp = std::get_if<CompoundPoisson>(&noise.jump);
  if (cp == nullptr) return {};
  if (const auto* g = std::get_if<GaussianJumps>(&cp->heights)) return noise.multiplier * noise.multiplier * g->cov;
  const auto& p = std::get<GhypParams>(cp->heights);
  // Var of W gamma + sqrt(W) B z with E W = 1 and Var W = 1 / shape.
  return noise.multiplier * noise.multiplier * (p.scatter + p.gamma * p.gamma.transpose() / p.shape);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline ExperimentResult start_result(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  r.n_paths = c.n_paths;
  r.config_hash = config_hash(c.raw);
  r.seed = c.master_seed;
  return r;
}

}  // namespace detail

/// Theta estimates on prefixes of each path for every N in the ladder, plus
/// log-log regressions of |bias| and sd against N.
inline ExperimentResult run_bootstrap(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  const ThetaParams truth = detail::require_theta(c);
  const NormalizedAdjacency an = row_normalize(build_graph(c.graph, c.d));
  const DynamicsMatrix q = q_from_theta(truth, an);
  const std::vector<Index> ladder = c.ladder.empty() ? std::vector<Index>{500, 4500, 8500, 12500} : c.ladder;
  const Index n_max = std::max(c.n, *std::max_element(ladder.begin(), ladder.end()));
  const EstimatorOptions opts = c.estimator_options();

  // Per path: for each ladder entry (theta1, theta2, se1, se2).
  using PathRow = std::vector<std::vector<double>>;
  const auto outcomes = parallel_map<PathRow>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
    const SampledPath path = detail::simulate_for(c, q, c.noise, n_max, static_cast<std::uint64_t>(p));
    PathRow rows;
    for (const Index n : ladder) {
      const EstimateReport r = theta_mle(path.prefix(n), an, opts);
      const Vector se = r.standard_errors();
      rows.push_back({r.point(0), r.point(1), se(0), se(1)});
    }
    return rows;
  });
  const auto ok = detail::successes(outcomes, res.excluded, c.experiment);
  res.succeeded = static_cast<Index>(ok.size());

  ResultTable& t = res.table;
  t.columns = {"N",           "T_N",          "theta1_mean",     "theta1_sd",        "theta1_bias",
               "theta1_pct_bias", "theta2_mean", "theta2_sd",     "theta2_bias",      "theta2_pct_bias",
               "theta1_mean_se",  "theta2_mean_se", "succeeded",  "excluded",         "config_hash"};
  t.group_columns = {"N"};
  const double true_vals[2] = {truth.theta1, truth.theta2};
  std::vector<double> log_n;
  std::vector<std::vector<double>> log_bias(2);
  std::vector<std::vector<double>> log_sd(2);
  for (std::size_t l = 0; l < ladder.size(); ++l) {
    std::vector<std::vector<double>> vals;
    for (const auto& row : ok) vals.push_back(row[l]);
    std::vector<Cell> cells{count(ladder[l]), num(static_cast<double>(ladder[l] - 1) * c.delta)};
    for (int a = 0; a < 2; ++a) {
      const auto v = detail::column(vals, static_cast<std::size_t>(a));
      const double m = stats::mean(v);
      const double bias = m - true_vals[a];
      cells.push_back(num(m));
      cells.push_back(num(stats::sd(v)));
      cells.push_back(num(bias));
      cells.push_back(num(100.0 * bias / std::abs(true_vals[a])));
      log_bias[static_cast<std::size_t>(a)].push_back(std::log(std::abs(bias)));
      log_sd[static_cast<std::size_t>(a)].push_back(std::log(stats::sd(v)));
    }
    cells.push_back(num(stats::mean(detail::column(vals, 2))));
    cells.push_back(num(stats::mean(detail::column(vals, 3))));
    cells.push_back(count(res.succeeded));
    cells.push_back(count(res.excluded));
    cells.push_back(res.config_hash);
    t.add_row(std::move(cells));
    log_n.push_back(std::log(static_cast<double>(ladder[l])));
  }

  ResultTable rates;
  rates.columns = {"parameter", "bias_slope", "bias_slope_se", "sd_slope", "sd_slope_se", "config_hash"};
  rates.group_columns = {"parameter"};
  for (int a = 0; a < 2; ++a) {
    std::vector<Cell> cells{std::string(a == 0 ? "theta1" : "theta2")};
    if (ladder.size() >= 2 && res.succeeded >= 2) {
      const auto fb = stats::linear_regression(log_n, log_bias[static_cast<std::size_t>(a)]);
      const auto fs = stats::linear_regression(log_n, log_sd[static_cast<std::size_t>(a)]);
      cells.insert(cells.end(), {num(fb.slope), num(ladder.size() > 2 ? fb.slope_se : std::nan("")), num(fs.slope),
                                 num(ladder.size() > 2 ? fs.slope_se : std::nan(""))});
    } else {
      cells.insert(cells.end(), {Cell{}, Cell{}, Cell{}, Cell{}});
    }
    cells.push_back(res.config_hash);
    rates.add_row(std::move(cells));
  }
  res.extra_tables.emplace_back("rates", std::move(rates));
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Standardised theta errors sqrt(T) G^{-1/2} (theta-hat - theta) per noise
/// regime, tested against N(0, 1) marginals.
inline ExperimentResult run_normality(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  const ThetaParams truth = detail::require_theta(c);
  const NormalizedAdjacency an = row_normalize(build_graph(c.graph, c.d));
  const DynamicsMatrix q = q_from_theta(truth, an);
  const EstimatorOptions opts = c.estimator_options();
  const std::vector<NoiseRegime> regimes = c.regimes.empty() ? std::vector<NoiseRegime>{{"base", c.noise}} : c.regimes;
  const Vector true_theta{{truth.theta1, truth.theta2}};

  ResultTable& t = res.table;
  t.columns = {"regime", "component", "ks_statistic", "ks_p_value", "mean_z", "sd_z", "succeeded", "excluded",
               "config_hash"};
  t.group_columns = {"regime", "component"};
  ResultTable per_path;
  per_path.columns = {"regime", "path", "theta1", "theta2", "z1", "z2"};
  per_path.group_columns = {"regime", "path"};
  for (std::size_t g = 0; g < regimes.size(); ++g) {
    const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
      const SampledPath path =
          detail::simulate_for(c, q, regimes[g].noise, c.n, static_cast<std::uint64_t>(p), 100 + g);
      const EstimateReport r = theta_mle(path, an, opts);
      const Vector z = std::sqrt(r.diagnostics.horizon) * detail::inverse_sqrt(r.acov) * (r.point - true_theta);
      return std::vector<double>{r.point(0), r.point(1), z(0), z(1)};
    });
    Index excluded = 0;
    const auto ok = detail::successes(outcomes, excluded, c.experiment + "/" + regimes[g].name);
    res.succeeded += static_cast<Index>(ok.size());
    res.excluded += excluded;
    for (std::size_t p = 0; p < ok.size(); ++p) {
      per_path.add_row({regimes[g].name, count(static_cast<std::int64_t>(p)), num(ok[p][0]), num(ok[p][1]),
                        num(ok[p][2]), num(ok[p][3])});
    }
    for (int a = 0; a < 2; ++a) {
      const auto z = detail::column(ok, 2 + static_cast<std::size_t>(a));
      const auto ks = z.empty() ? stats::KsResult{std::nan(""), std::nan("")} : stats::ks_normal(z);
      t.add_row({regimes[g].name, std::string(a == 0 ? "z1" : "z2"), num(ks.statistic), num(ks.p_value),
                 num(stats::mean(z)), num(stats::sd(z)), count(static_cast<std::int64_t>(ok.size())), count(excluded),
                 res.config_hash});
    }
  }
  res.n_paths = c.n_paths * static_cast<Index>(regimes.size());
  res.extra_tables.emplace_back("paths", std::move(per_path));
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Median REM of the theta-MLE and of least squares per topology and noise
/// multiplier. Paths share random streams across multipliers.
inline ExperimentResult run_sigma_sweep(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  if (c.sweep.sigma.empty()) throw Error(ErrorCode::ConfigError, "sigma_sweep needs sweep.sigma");
  const ThetaParams truth = detail::require_theta(c);
  const EstimatorOptions opts = c.estimator_options();
  const auto topologies = detail::topologies_of(c);

  ResultTable& t = res.table;
  t.columns = {"topology",   "sigma",     "rem_mle_median", "rem_mle_se", "rem_ls_median",
               "rem_ls_se",  "succeeded", "excluded",       "config_hash"};
  t.group_columns = {"topology", "sigma"};
  for (const auto& g : topologies) {
    const NormalizedAdjacency an = row_normalize(build_graph(g, c.d));
    const DynamicsMatrix q = q_from_theta(truth, an);
    for (const double sigma : c.sweep.sigma) {
      LevySpec noise = c.noise;
      noise.multiplier = c.noise.multiplier * sigma;
      const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
        const SampledPath path = detail::simulate_for(c, q, noise, c.n, static_cast<std::uint64_t>(p));
        const EstimateReport mle = theta_mle(path, an, opts);
        const EstimateReport ls = ls_estimator(path);
        return std::vector<double>{rem(mle.matrix, q, c.delta), rem_transition(ls.matrix, q, c.delta)};
      });
      Index excluded = 0;
      const auto ok = detail::successes(outcomes, excluded, c.experiment);
      res.succeeded += static_cast<Index>(ok.size());
      res.excluded += excluded;
      const auto mle = detail::column(ok, 0);
      const auto ls = detail::column(ok, 1);
      t.add_row({detail::topology_label(g), num(sigma), num(stats::median(mle)), num(detail::median_se(mle)),
                 num(stats::median(ls)), num(detail::median_se(ls)), count(static_cast<std::int64_t>(ok.size())),
                 count(excluded), res.config_hash});
    }
  }
  res.n_paths = c.n_paths * static_cast<Index>(topologies.size() * c.sweep.sigma.size());
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Theta bias against the filter exponent beta, per topology; each path is
/// re-estimated at every beta.
inline ExperimentResult run_beta_sweep(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  if (c.sweep.beta.empty()) throw Error(ErrorCode::ConfigError, "beta_sweep needs sweep.beta");
  for (const double b : c.sweep.beta) {
    if (!(b > 0.0 && b < 0.5)) throw Error(ErrorCode::ConfigError, "beta grid must lie in (0, 1/2)");
  }
  const ThetaParams truth = detail::require_theta(c);
  const auto topologies = detail::topologies_of(c);

  ResultTable& t = res.table;
  t.columns = {"topology",  "beta",        "theta1_mean", "theta1_bias", "theta1_sd", "theta2_mean",
               "theta2_bias", "theta2_sd", "succeeded",   "excluded",    "config_hash"};
  t.group_columns = {"topology", "beta"};
  for (const auto& g : topologies) {
    const NormalizedAdjacency an = row_normalize(build_graph(g, c.d));
    const DynamicsMatrix q = q_from_theta(truth, an);
    const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
      const SampledPath path = detail::simulate_for(c, q, c.noise, c.n, static_cast<std::uint64_t>(p));
      std::vector<double> out;
      for (const double b : c.sweep.beta) {
        EstimatorOptions opts = c.estimator_options();
        opts.filter = FilterConfig::uniform(c.d, b);
        const EstimateReport r = theta_mle(path, an, opts);
        out.push_back(r.point(0));
        out.push_back(r.point(1));
      }
      return out;
    });
    Index excluded = 0;
    const auto ok = detail::successes(outcomes, excluded, c.experiment);
    res.succeeded += static_cast<Index>(ok.size());
    res.excluded += excluded;
    for (std::size_t bi = 0; bi < c.sweep.beta.size(); ++bi) {
      const auto t1 = detail::column(ok, 2 * bi);
      const auto t2 = detail::column(ok, 2 * bi + 1);
      t.add_row({detail::topology_label(g), num(c.sweep.beta[bi]), num(stats::mean(t1)),
                 num(stats::mean(t1) - truth.theta1), num(stats::sd(t1)), num(stats::mean(t2)),
                 num(stats::mean(t2) - truth.theta2), num(stats::sd(t2)), count(static_cast<std::int64_t>(ok.size())),
                 count(excluded), res.config_hash});
    }
  }
  res.n_paths = c.n_paths * static_cast<Index>(topologies.size());
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Paths generated at the configured delta are refitted as if sampled at each
/// delta_fit; REM compares exp(-Q-hat delta_fit) with exp(-Q delta_fit).
inline ExperimentResult run_mesh_sweep(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  if (c.sweep.delta_fit.empty()) throw Error(ErrorCode::ConfigError, "mesh_sweep needs sweep.delta_fit");
  const ThetaParams truth = detail::require_theta(c);
  const NormalizedAdjacency an = row_normalize(build_graph(c.graph, c.d));
  const DynamicsMatrix q = q_from_theta(truth, an);
  const EstimatorOptions opts = c.estimator_options();
  const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
    const SampledPath path = detail::simulate_for(c, q, c.noise, c.n, static_cast<std::uint64_t>(p));
    std::vector<double> out;
    for (const double df : c.sweep.delta_fit) {
      if (!(df > 0.0)) throw Error(ErrorCode::ConfigError, "delta_fit entries must be positive");
      const EstimateReport r = theta_mle(path.with_time_scale(df / c.delta), an, opts);
      out.push_back(rem(r.matrix, q, df));
    }
    return out;
  });
  const auto ok = detail::successes(outcomes, res.excluded, c.experiment);
  res.succeeded = static_cast<Index>(ok.size());
  ResultTable& t = res.table;
  t.columns = {"delta_fit", "rem_median", "rem_se", "rem_mean", "succeeded", "excluded", "config_hash"};
  t.group_columns = {"delta_fit"};
  for (std::size_t i = 0; i < c.sweep.delta_fit.size(); ++i) {
    const auto v = detail::column(ok, i);
    t.add_row({num(c.sweep.delta_fit[i]), num(stats::median(v)), num(detail::median_se(v)), num(stats::mean(v)),
               count(res.succeeded), count(res.excluded), res.config_hash});
  }
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Degree statistics and theta-MLE accuracy per topology.
inline ExperimentResult run_topology(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  const ThetaParams truth = detail::require_theta(c);
  const EstimatorOptions opts = c.estimator_options();
  const auto topologies = detail::topologies_of(c);
  ResultTable& t = res.table;
  t.columns = {"topology",    "degree_mean", "degree_median", "degree_min", "degree_max", "rho",
               "theta1_mean", "theta1_sd",   "theta1_bias",   "theta2_mean", "theta2_sd", "theta2_bias",
               "rem_median",  "succeeded",   "excluded",      "config_hash"};
  t.group_columns = {"topology"};
  for (const auto& g : topologies) {
    const AdjacencyMatrix a = build_graph(g, c.d);
    const NormalizedAdjacency an = row_normalize(a);
    const DynamicsMatrix q = q_from_theta(truth, an);
    const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
      const SampledPath path = detail::simulate_for(c, q, c.noise, c.n, static_cast<std::uint64_t>(p));
      const EstimateReport r = theta_mle(path, an, opts);
      return std::vector<double>{r.point(0), r.point(1), rem(r.matrix, q, c.delta)};
    });
    Index excluded = 0;
    const auto ok = detail::successes(outcomes, excluded, c.experiment);
    res.succeeded += static_cast<Index>(ok.size());
    res.excluded += excluded;
    const DegreeStats ds = degree_stats(a);
    const auto t1 = detail::column(ok, 0);
    const auto t2 = detail::column(ok, 1);
    t.add_row({detail::topology_label(g), num(ds.mean), num(ds.median), num(ds.min), num(ds.max), num(rho(an)),
               num(stats::mean(t1)), num(stats::sd(t1)), num(stats::mean(t1) - truth.theta1), num(stats::mean(t2)),
               num(stats::sd(t2)), num(stats::mean(t2) - truth.theta2), num(stats::median(detail::column(ok, 2))),
               count(static_cast<std::int64_t>(ok.size())), count(excluded), res.config_hash});
  }
  res.n_paths = c.n_paths * static_cast<Index>(topologies.size());
  res.runtime_seconds = clock.seconds();
  return res;
}

/// sqrt(T) ||psi-tilde - psi-bar|| on a fine path and on its every
/// fine_factor-th subsample, at the same horizon.
inline ExperimentResult run_filter_consistency(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  const NormalizedAdjacency an = row_normalize(build_graph(c.graph, c.d));
  const DynamicsMatrix q = true_dynamics(c, an);
  const Index f = c.sweep.fine_factor;
  if (f < 2) throw Error(ErrorCode::ConfigError, "fine_factor must be >= 2");
  const Index n_fine = (c.n - 1) * f + 1;
  auto gap = [&](const SampledPath& path) {
    const Matrix k = k_matrix(path);
    const Matrix filtered = solve_psi(k, a_filtered(path, c.filter()).a);
    const Matrix oracle = solve_psi(k, a_unfiltered_oracle(path));
    return std::sqrt(path.grid.horizon()) * (filtered - oracle).norm();
  };
  const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
    const ObservationGrid fine = ObservationGrid::uniform(n_fine, c.delta / static_cast<double>(f));
    const SampledPath path = detail::simulate_on(c, q, c.noise, fine, static_cast<std::uint64_t>(p), detail::kTagPath);
    return std::vector<double>{gap(path.subsampled(f)), gap(path)};
  });
  const auto ok = detail::successes(outcomes, res.excluded, c.experiment);
  res.succeeded = static_cast<Index>(ok.size());
  ResultTable per_path;
  per_path.columns = {"path", "gap_coarse", "gap_fine"};
  per_path.group_columns = {"path"};
  Index smaller = 0;
  for (std::size_t p = 0; p < ok.size(); ++p) {
    smaller += ok[p][1] < ok[p][0] ? 1 : 0;
    per_path.add_row({count(static_cast<std::int64_t>(p)), num(ok[p][0]), num(ok[p][1])});
  }
  ResultTable& t = res.table;
  t.columns = {"delta_coarse", "delta_fine", "gap_coarse_median", "gap_fine_median", "fraction_fine_smaller",
               "succeeded",    "excluded",   "config_hash"};
  t.group_columns = {"delta_coarse"};
  t.add_row({num(c.delta), num(c.delta / static_cast<double>(f)), num(stats::median(detail::column(ok, 0))),
             num(stats::median(detail::column(ok, 1))),
             num(ok.empty() ? std::nan("") : static_cast<double>(smaller) / static_cast<double>(ok.size())),
             count(res.succeeded), count(res.excluded), res.config_hash});
  res.extra_tables.emplace_back("paths", std::move(per_path));
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Cutoff multiplier at the (1 - p) quantile of ||Delta L-hat|| / Delta^beta,
/// where p = 1 - exp(-rate * Delta) is the chance of a jump in one interval.
inline double oracle_eta(const RecoveredIncrements& inc, double beta, double jump_rate) {
  const double scale = std::pow(inc.grid.mesh(), beta);
  std::vector<double> norms;
  for (Index k = 0; k < inc.values.cols(); ++k) norms.push_back(inc.values.col(k).norm() / scale);
  const double p_jump = 1.0 - std::exp(-jump_rate * inc.grid.mesh());
  return stats::quantile(norms, 1.0 - p_jump);
}

/// Sigma, lambda and Sigma^J recovered from simulated Brownian + compound
/// Poisson paths, compared with the truth.
inline ExperimentResult run_noise_oracle(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  const NormalizedAdjacency an = row_normalize(build_graph(c.graph, c.d));
  const DynamicsMatrix q = true_dynamics(c, an);
  const double rate = detail::jump_event_rate(c.noise, c.d);
  if (rate <= 0.0) throw Error(ErrorCode::ConfigError, "noise_oracle needs compound Poisson jumps");
  const Matrix sigma_true = c.noise.multiplier * c.noise.multiplier * c.noise.sigma;
  const Matrix jump_cov = detail::jump_covariance(c.noise);
  const double beta = c.estimator.beta.mean();
  const EstimatorOptions opts = c.estimator_options();
  const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
    const SampledPath path = detail::simulate_for(c, q, c.noise, c.n, static_cast<std::uint64_t>(p));
    const Matrix q_hat = c.theta ? theta_mle(path, an, opts).matrix : psi_mle(path, opts).matrix;
    const RecoveredIncrements inc = recover_increments(path, DynamicsMatrix{q_hat}, c.estimator.quadrature);
    const double eta = c.estimator.eta > 0.0 ? c.estimator.eta : oracle_eta(inc, beta, rate);
    const NoiseDecomposition dec = decompose_noise(inc, eta, beta, DecomposeOptions{c.estimator.signed_rv});
    const double jump_err = dec.no_jumps ? std::nan("") : (dec.sigma_jump_hat - jump_cov).norm() / jump_cov.norm();
    return std::vector<double>{(dec.sigma_hat - sigma_true).norm() / sigma_true.norm(),
                               std::abs(dec.lambda_hat - rate) / rate, jump_err, eta, dec.lambda_hat};
  });
  const auto ok = detail::successes(outcomes, res.excluded, c.experiment);
  res.succeeded = static_cast<Index>(ok.size());
  ResultTable per_path;
  per_path.columns = {"path", "sigma_rel_err", "lambda_rel_err", "sigma_jump_rel_err", "eta", "lambda_hat"};
  per_path.group_columns = {"path"};
  for (std::size_t p = 0; p < ok.size(); ++p) {
    per_path.add_row({count(static_cast<std::int64_t>(p)), num(ok[p][0]), num(ok[p][1]), num(ok[p][2]),
                      num(ok[p][3]), num(ok[p][4])});
  }
  ResultTable& t = res.table;
  t.columns = {"lambda_true",          "sigma_rel_err_median", "lambda_rel_err_median", "sigma_jump_rel_err_median",
               "eta_median",           "lambda_hat_median",    "succeeded",             "excluded",
               "config_hash"};
  t.group_columns = {"lambda_true"};
  t.add_row({num(rate), num(stats::median(detail::column(ok, 0))), num(stats::median(detail::column(ok, 1))),
             num(stats::median(detail::column(ok, 2))), num(stats::median(detail::column(ok, 3))),
             num(stats::median(detail::column(ok, 4))), count(res.succeeded), count(res.excluded), res.config_hash});
  res.extra_tables.emplace_back("paths", std::move(per_path));
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Adaptive lasso support recovery against a known sparse Q.
inline ExperimentResult run_lasso_support(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  if (!c.q) throw Error(ErrorCode::ConfigError, "lasso_support needs the true matrix 'q'");
  const DynamicsMatrix q{*c.q};
  const EstimatorOptions opts = c.estimator_options();
  const auto outcomes = parallel_map<std::vector<double>>(c.n_paths, resolve_threads(c.threads), [&](Index p) {
    const SampledPath path = detail::simulate_for(c, q, c.noise, c.n, static_cast<std::uint64_t>(p));
    const Matrix sigma = c.estimator.sigma ? *c.estimator.sigma : psi_mle(path, opts).sigma_hat;
    const SparseFit fit = fit_adaptive_lasso(path, c.filter(), c.lasso.config, sigma);
    const SupportRecovery s = evaluate_support_recovery(fit, q, 0.0);
    return std::vector<double>{s.exact_match ? 1.0 : 0.0, static_cast<double>(fit.support.size()), fit.kkt_residual,
                               static_cast<double>(s.offdiag_fp), static_cast<double>(s.offdiag_fn), fit.lambda};
  });
  const auto ok = detail::successes(outcomes, res.excluded, c.experiment);
  res.succeeded = static_cast<Index>(ok.size());
  ResultTable per_path;
  per_path.columns = {"path", "exact_match", "support_size", "kkt_residual", "offdiag_fp", "offdiag_fn", "lambda"};
  per_path.group_columns = {"path"};
  for (std::size_t p = 0; p < ok.size(); ++p) {
    per_path.add_row({count(static_cast<std::int64_t>(p)), num(ok[p][0]), num(ok[p][1]), num(ok[p][2]),
                      num(ok[p][3]), num(ok[p][4]), num(ok[p][5])});
  }
  const auto kkt = detail::column(ok, 2);
  ResultTable& t = res.table;
  t.columns = {"d",          "true_support_size", "exact_recovery_rate", "median_support_size", "max_kkt_residual",
               "mean_offdiag_fp", "mean_offdiag_fn", "succeeded",       "excluded",            "config_hash"};
  t.group_columns = {"d"};
  t.add_row({count(c.d), count(static_cast<std::int64_t>(support_of(q.q, 0.0).size())),
             num(stats::mean(detail::column(ok, 0))), num(stats::median(detail::column(ok, 1))),
             num(kkt.empty() ? std::nan("") : *std::max_element(kkt.begin(), kkt.end())),
             num(stats::mean(detail::column(ok, 3))), num(stats::mean(detail::column(ok, 4))), count(res.succeeded),
             count(res.excluded), res.config_hash});
  res.extra_tables.emplace_back("paths", std::move(per_path));
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Noise model refitted from recovered increments: Brownian part plus, when
/// jumps were flagged, a shared-clock compound Poisson part with Gaussian
/// heights.
inline LevySpec refit_noise(const NoiseDecomposition& dec) {
  LevySpec spec;
  spec.sigma = dec.sigma_hat;
  if (!dec.no_jumps) spec.jump = CompoundPoisson{dec.lambda_hat, GaussianJumps{dec.sigma_jump_hat}, JumpClock::Shared};
  return spec;
}

/// Parametric bootstrap loop: estimate, recover, decompose, refit the noise,
/// resimulate from theta-tilde and re-estimate.
inline ExperimentResult run_roundtrip(const ExperimentConfig& c) {
  detail::Stopwatch clock;
  ExperimentResult res = detail::start_result(c);
  const ThetaParams truth = detail::require_theta(c);
  const NormalizedAdjacency an = row_normalize(build_graph(c.graph, c.d));
  const DynamicsMatrix q = q_from_theta(truth, an);
  const EstimatorOptions opts = c.estimator_options();
  const double beta = c.estimator.beta.mean();
  const double eta = c.estimator.eta > 0.0 ? c.estimator.eta : std::sqrt(static_cast<double>(c.d));

  const SampledPath original = detail::simulate_for(c, q, c.noise, c.n, 0, detail::kTagPath);
  const EstimateReport fit = theta_mle(original, an, opts);
  const ThetaParams theta_tilde{fit.point(0), fit.point(1)};
  const DynamicsMatrix q_tilde = q_from_theta(theta_tilde, an);
  const RecoveredIncrements inc = recover_increments(original, q_tilde, c.estimator.quadrature);
  const NoiseDecomposition dec = decompose_noise(inc, eta, beta, DecomposeOptions{c.estimator.signed_rv});
  const LevySpec noise_hat = refit_noise(dec);

  const Index b = c.bootstrap_paths;
  const unsigned threads = resolve_threads(c.threads);
  const auto boot = parallel_map<std::vector<double>>(b, threads, [&](Index p) {
    const SampledPath path = detail::simulate_for(c, q_tilde, noise_hat, c.n, static_cast<std::uint64_t>(p),
                                                  detail::kTagBootstrap);
    const EstimateReport r = theta_mle(path, an, opts);
    return std::vector<double>{r.point(0), r.point(1)};
  });
  const auto fresh = parallel_map<std::vector<double>>(b, threads, [&](Index p) {
    const SampledPath path =
        detail::simulate_for(c, q, c.noise, c.n, static_cast<std::uint64_t>(p), detail::kTagFresh);
    const EstimateReport r = theta_mle(path, an, opts);
    return std::vector<double>{r.point(0), r.point(1)};
  });
  const auto ok = detail::successes(boot, res.excluded, c.experiment + "/bootstrap");
  Index fresh_excluded = 0;
  const auto ok_fresh = detail::successes(fresh, fresh_excluded, c.experiment + "/fresh");
  res.succeeded = static_cast<Index>(ok.size());
  res.n_paths = b;

  const Vector se = fit.standard_errors();
  const double truth_vals[2] = {truth.theta1, truth.theta2};
  ResultTable& t = res.table;
  t.columns = {"parameter", "theta_true", "theta_tilde", "se_tilde", "boot_mean", "boot_sd", "pooled_se", "z",
               "ks_distance", "succeeded", "excluded", "config_hash"};
  t.group_columns = {"parameter"};
  for (int a = 0; a < 2; ++a) {
    const auto v = detail::column(ok, static_cast<std::size_t>(a));
    const double m = stats::mean(v);
    const double sd = stats::sd(v);
    const double pooled = std::sqrt(se(a) * se(a) + sd * sd / static_cast<double>(v.size()));
    std::vector<double> centred_boot;
    std::vector<double> centred_fresh;
    for (const double x : v) centred_boot.push_back(x - fit.point(a));
    for (const auto& r : ok_fresh) centred_fresh.push_back(r[static_cast<std::size_t>(a)] - truth_vals[a]);
    const double ks = centred_boot.empty() || centred_fresh.empty()
                          ? std::nan("")
                          : stats::ks_two_sample(centred_boot, centred_fresh).statistic;
    t.add_row({std::string(a == 0 ? "theta1" : "theta2"), num(truth_vals[a]), num(fit.point(a)), num(se(a)), num(m),
               num(sd), num(pooled), num((m - fit.point(a)) / pooled), num(ks), count(res.succeeded),
               count(res.excluded), res.config_hash});
  }
  res.summary["noise_hat"] = to_json(dec);
  res.runtime_seconds = clock.seconds();
  return res;
}

/// Dispatch on cfg.experiment for the batch experiments.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  const std::string& e = c.experiment;
  if (e == "bootstrap") return run_bootstrap(c);
  if (e == "normality") return run_normality(c);
  if (e == "sigma_sweep") return run_sigma_sweep(c);
  if (e == "beta_sweep") return run_beta_sweep(c);
  if (e == "mesh_sweep") return run_mesh_sweep(c);
  if (e == "topology") return run_topology(c);
  if (e == "filter_consistency") return run_filter_consistency(c);
  if (e == "noise_oracle") return run_noise_oracle(c);
  if (e == "lasso_support") return run_lasso_support(c);
  if (e == "roundtrip") return run_roundtrip(c);
  throw Error(ErrorCode::ConfigError, "unknown experiment '" + e + "'");
}

inline Json metadata_json(const ExperimentResult& r, unsigned threads) {
  return Json{{"experiment", r.experiment},
              {"config_hash", r.config_hash},
              {"master_seed", r.seed},
              {"n_paths", r.n_paths},
              {"succeeded", r.succeeded},
              {"excluded", r.excluded},
              {"runtime_seconds", r.runtime_seconds},
              {"threads", threads},
              {"summary", r.summary}};
}

/// results.csv, results_long.csv, one CSV per extra table, metadata.json.
inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& r, unsigned threads) {
  write_table_files(dir, "results", r.table);
  for (const auto& [name, table] : r.extra_tables) write_table_files(dir, name, table, false);
  write_text_file(dir / "metadata.json", metadata_json(r, threads).dump(2) + "\n");
}

struct FitDataResult {
  std::optional<EstimateReport> theta;
  EstimateReport psi;
  NoiseDecomposition noise;
  std::vector<EtaDiagnosticRow> eta_table;
  std::optional<GhypFit> ghyp;
  std::string ghyp_error;
  std::optional<SparseFit> lasso;
  AdjacencyMatrix graph;
  RecoveredIncrements increments;
};

/// Real-data pipeline: optional de-seasonalising, graph (given or from the
/// adaptive lasso), theta/psi fits, increment recovery, noise decomposition
/// with the eta diagnostic, and a NIG fit of the increments.
inline FitDataResult run_fit_data(const ExperimentConfig& c, const std::string& csv_path) {
  SampledPath path = read_path_csv_file(csv_path);
  path.oracle.reset();
  const Index d = path.dim();
  if (c.period > 0) path.values = preprocess(path.values, c.period);
  const EstimatorOptions base = c.estimator_options();
  EstimatorOptions opts = base;
  if (opts.filter.beta.size() != d) opts.filter = FilterConfig::uniform(d, base.filter.beta.mean());

  FitDataResult out;
  out.psi = psi_mle(path, opts);
  const bool has_graph = c.raw.contains("graph");
  if (has_graph) {
    out.graph = build_graph(c.graph, d);
  } else if (c.adaptive_lasso) {
    out.lasso = fit_adaptive_lasso(path, opts.filter, c.lasso.config, out.psi.sigma_hat);
    out.graph = support_to_adjacency(*out.lasso);
  } else {
    throw Error(ErrorCode::MissingGraph, "no adjacency given and adaptive_lasso is off");
  }
  const NormalizedAdjacency an = row_normalize(out.graph);
  out.theta = theta_mle(path, an, opts);
  const double beta = opts.filter.beta.mean();
  const double eta = c.estimator.eta > 0.0 ? c.estimator.eta : std::sqrt(static_cast<double>(d));
  out.increments = recover_increments(path, DynamicsMatrix{out.theta->matrix}, c.estimator.quadrature);
  out.noise = decompose_noise(out.increments, eta, beta, DecomposeOptions{c.estimator.signed_rv});
  std::vector<double> grid = c.sweep.eta_grid;
  if (grid.empty()) {
    for (int i = 0; i <= 40; ++i) grid.push_back(0.1 * i);
  }
  out.eta_table = eta_diagnostic(out.increments, beta, grid, DecomposeOptions{c.estimator.signed_rv});
  try {
    out.ghyp = fit_ghyp(out.increments);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoConvergence && e.code() != ErrorCode::TooShort &&
        e.code() != ErrorCode::DegenerateData) {
      throw;
    }
    out.ghyp_error = e.what();
  }
  return out;
}

inline void write_fit_data(const std::filesystem::path& dir, const FitDataResult& r, const std::string& hash) {
  std::filesystem::create_directories(dir);
  Json est{{"config_hash", hash}, {"psi", to_json(r.psi)}};
  if (r.theta) est["theta"] = to_json(*r.theta);
  if (r.lasso) est["adaptive_lasso"] = to_json(*r.lasso);
  write_text_file(dir / "estimate.json", est.dump(2) + "\n");
  write_text_file(dir / "noise.json", to_json(r.noise).dump(2) + "\n");
  Json gh = r.ghyp ? to_json(*r.ghyp) : Json{{"error", r.ghyp_error}};
  if (r.ghyp) gh["unit_time_params"] = to_json(ghyp_to_unit_time(r.ghyp->params, r.increments.grid.mesh()));
  write_text_file(dir / "ghyp.json", gh.dump(2) + "\n");
  {
    std::ofstream out(dir / "graph.txt", std::ios::binary);
    write_edge_list(out, r.graph);
  }
  ResultTable eta;
  eta.columns = {"eta", "jump_probability", "continuous_coverage", "jump_coverage"};
  eta.group_columns = {"eta"};
  for (const auto& row : r.eta_table) {
    eta.add_row({num(row.eta), num(row.jump_probability), num(row.continuous_coverage), num(row.jump_coverage)});
  }
  write_table_files(dir, "eta_diagnostic", eta, false);
  SampledPath inc_path;
  inc_path.grid = r.increments.grid.prefix(r.increments.grid.size() - 1);
  inc_path.values = r.increments.values;
  std::ofstream out(dir / "increments.csv", std::ios::binary);
  write_path_csv(out, inc_path);
}

}  // namespace grou
