#pragma once

#include "grou/core.hpp"
#include "grou/estimators.hpp"
#include "grou/graph.hpp"
#include "grou/json_io.hpp"
#include "grou/lasso.hpp"
#include "grou/levy.hpp"
#include "grou/simulate.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace grou {

struct GraphConfig {
  TopologyKind kind = TopologyKind::Polymer;
  std::string path;
};

struct SimulationConfig {
  Scheme scheme = Scheme::Exact;
  Index refinement = 8;
  bool jittered = false;
  double jitter = 0.4;
  bool stationary = true;
  /// Explicit starting value; overrides init.
  std::optional<Vector> y0;
};

struct EstimatorConfig {
  Vector beta;
  /// <= 0 selects the default L2 cutoff multiplier sqrt(d).
  double eta = 0.0;
  Quadrature quadrature = Quadrature::Trapezoid;
  bool signed_rv = true;
  std::optional<Matrix> sigma;
};

struct SweepConfig {
  std::vector<double> sigma;
  std::vector<double> beta;
  std::vector<double> delta_fit;
  std::vector<GraphConfig> topologies;
  std::vector<double> eta_grid;
  Index fine_factor = 4;
};

struct NoiseRegime {
  std::string name;
  LevySpec noise;
};

struct LassoSettings {
  LassoConfig config;
  /// Largest KKT residual accepted as converged in the support experiment.
  double kkt_limit = 1e-4;
};

struct ExperimentConfig {
  std::string experiment;
  Index d = 10;
  Index n = 5000;
  double delta = 1.0 / 12.0;
  Index n_paths = 50;
  std::uint64_t master_seed = 0;
  GraphConfig graph;
  std::optional<ThetaParams> theta;
  std::optional<Vector> psi;
  std::optional<Matrix> q;
  LevySpec noise;
  std::vector<NoiseRegime> regimes;
  SimulationConfig simulation;
  EstimatorConfig estimator;
  std::vector<Index> ladder;
  SweepConfig sweep;
  LassoSettings lasso;
  std::string data_path;
  Index period = 0;
  bool adaptive_lasso = false;
  Index bootstrap_paths = 50;
  unsigned threads = 0;
  Json raw;

  FilterConfig filter() const { return {estimator.beta, std::nullopt}; }

  EstimatorOptions estimator_options() const {
    return EstimatorOptions{filter(), estimator.sigma, estimator.eta, estimator.quadrature};
  }
};

namespace detail {

inline const Json* find(const Json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  const Json* v = find(j, key);
  if (v == nullptr) return fallback;
  try {
    return v->get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("field '") + key + "': " + e.what());
  }
}

inline std::vector<double> number_list(const Json& j, const char* key) {
  std::vector<double> out;
  if (const Json* v = find(j, key)) {
    if (!v->is_array()) throw Error(ErrorCode::ConfigError, std::string("field '") + key + "' must be an array");
    for (const auto& x : *v) out.push_back(x.get<double>());
  }
  return out;
}

inline GraphConfig parse_graph(const Json& j) {
  if (j.is_string()) return {parse_topology_kind(j.get<std::string>()), {}};
  GraphConfig g;
  g.kind = parse_topology_kind(get_or<std::string>(j, "kind", "polymer"));
  g.path = get_or<std::string>(j, "path", "");
  if (g.kind == TopologyKind::File && g.path.empty()) throw Error(ErrorCode::ConfigError, "file topology needs a path");
  return g;
}

inline GhypParams parse_ghyp(const Json& j, Index d) {
  GhypParams p;
  const Json* gamma = find(j, "gamma");
  if (gamma == nullptr) {
    p.gamma = Vector::Zero(d);
  } else if (gamma->is_number()) {
    p.gamma = Vector::Constant(d, gamma->get<double>());
  } else {
    p.gamma = vector_from_json(*gamma, "gamma");
  }
  const Json* scatter = find(j, "scatter");
  p.scatter = scatter ? matrix_from_json(*scatter, d, "scatter") : Matrix(Matrix::Identity(d, d));
  p.shape = get_or<double>(j, "shape", 1.0);
  p.validate();
  return p;
}

inline JumpClock parse_clock(const std::string& s) {
  if (s == "per_component") return JumpClock::PerComponent;
  if (s == "shared") return JumpClock::Shared;
  if (s == "median") return JumpClock::MedianCount;
  throw Error(ErrorCode::ConfigError, "unknown jump clock '" + s + "'");
}

}  // namespace detail

inline LevySpec parse_noise(const Json& j, Index d) {
  LevySpec spec;
  const Json* sigma = detail::find(j, "sigma");
  spec.sigma = sigma ? matrix_from_json(*sigma, d, "noise.sigma") : Matrix(0.01 * Matrix::Identity(d, d));
  spec.multiplier = detail::get_or<double>(j, "multiplier", 1.0);
  if (const Json* jump = detail::find(j, "jump")) {
    const auto type = detail::get_or<std::string>(*jump, "type", "none");
    if (type == "compound_poisson") {
      CompoundPoisson cp;
      cp.intensity = detail::get_or<double>(*jump, "intensity", 1.0);
      cp.clock = detail::parse_clock(detail::get_or<std::string>(*jump, "clock", "per_component"));
      const Json* heights = detail::find(*jump, "heights");
      const Json h = heights ? *heights : Json{{"type", "gaussian"}, {"cov", 1.0}};
      const auto htype = detail::get_or<std::string>(h, "type", "gaussian");
      if (htype == "gaussian") {
        const Json* cov = detail::find(h, "cov");
        cp.heights = GaussianJumps{cov ? matrix_from_json(*cov, d, "jump cov") : Matrix(Matrix::Identity(d, d))};
      } else if (htype == "ghyp") {
        cp.heights = detail::parse_ghyp(h, d);
      } else {
        throw Error(ErrorCode::ConfigError, "unknown jump height type '" + htype + "'");
      }
      spec.jump = cp;
    } else if (type == "ghyp_motion") {
      spec.jump = GhypMotion{detail::parse_ghyp(*jump, d)};
    } else if (type != "none") {
      throw Error(ErrorCode::ConfigError, "unknown jump type '" + type + "'");
    }
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return spec;
}

/// Parses and validates an experiment configuration. The seed is mandatory.
inline ExperimentConfig parse_config(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  c.experiment = detail::get_or<std::string>(j, "experiment", "");
  if (c.experiment.empty()) throw Error(ErrorCode::ConfigError, "missing 'experiment'");
  c.d = detail::get_or<Index>(j, "d", 10);
  c.n = detail::get_or<Index>(j, "N", 5000);
  c.delta = detail::get_or<double>(j, "delta", 1.0 / 12.0);
  c.n_paths = detail::get_or<Index>(j, "n_paths", 50);
  if (detail::find(j, "master_seed") == nullptr) throw Error(ErrorCode::ConfigError, "missing 'master_seed'");
  c.master_seed = detail::get_or<std::uint64_t>(j, "master_seed", 0);
  if (c.d < 1 || c.n < 2 || c.n_paths < 1 || !(c.delta > 0.0)) {
    throw Error(ErrorCode::ConfigError, "d, N, n_paths and delta must be positive (N >= 2)");
  }
  if (const Json* g = detail::find(j, "graph")) c.graph = detail::parse_graph(*g);

  if (const Json* t = detail::find(j, "theta")) {
    if (t->is_array() && t->size() == 2) {
      c.theta = ThetaParams{(*t)[0].get<double>(), (*t)[1].get<double>()};
    } else if (t->is_object()) {
      c.theta = ThetaParams{detail::get_or<double>(*t, "theta1", 0.0), detail::get_or<double>(*t, "theta2", 1.0)};
    } else {
      throw Error(ErrorCode::ConfigError, "theta must be [theta1, theta2]");
    }
  }
  if (const Json* p = detail::find(j, "psi")) c.psi = vec(matrix_from_json(*p, c.d, "psi"));
  if (const Json* q = detail::find(j, "q")) c.q = matrix_from_json(*q, c.d, "q");
  if (!c.theta && !c.psi && !c.q) c.theta = ThetaParams{-1.549, 5.525};

  c.noise = parse_noise(detail::find(j, "noise") ? j["noise"] : Json::object(), c.d);
  if (const Json* regimes = detail::find(j, "regimes")) {
    for (const auto& r : *regimes) {
      c.regimes.push_back({detail::get_or<std::string>(r, "name", "regime"), parse_noise(r.at("noise"), c.d)});
    }
  }

  if (const Json* s = detail::find(j, "simulation")) {
    c.simulation.scheme = parse_scheme(detail::get_or<std::string>(*s, "scheme", "exact"));
    c.simulation.refinement = detail::get_or<Index>(*s, "refinement", 8);
    const auto grid = detail::get_or<std::string>(*s, "grid", "uniform");
    if (grid != "uniform" && grid != "jittered") throw Error(ErrorCode::ConfigError, "grid must be uniform or jittered");
    c.simulation.jittered = grid == "jittered";
    c.simulation.jitter = detail::get_or<double>(*s, "jitter", 0.4);
    const auto init = detail::get_or<std::string>(*s, "init", "stationary");
    if (init != "stationary" && init != "zero") throw Error(ErrorCode::ConfigError, "init must be stationary or zero");
    c.simulation.stationary = init == "stationary";
    if (const Json* y0 = detail::find(*s, "y0")) {
      c.simulation.y0 = vector_from_json(*y0, "simulation.y0");
      if (c.simulation.y0->size() != c.d) throw Error(ErrorCode::ConfigError, "simulation.y0 must have d entries");
    }
    if (c.simulation.refinement < 1) throw Error(ErrorCode::ConfigError, "refinement must be >= 1");
  }

  c.estimator.beta = Vector::Constant(c.d, 0.4999);
  if (const Json* e = detail::find(j, "estimator")) {
    if (const Json* b = detail::find(*e, "beta")) {
      c.estimator.beta = b->is_number() ? Vector(Vector::Constant(c.d, b->get<double>())) : vector_from_json(*b, "beta");
    }
    c.estimator.eta = detail::get_or<double>(*e, "eta", 0.0);
    c.estimator.quadrature = parse_quadrature(detail::get_or<std::string>(*e, "quadrature", "trapezoid"));
    c.estimator.signed_rv = detail::get_or<bool>(*e, "signed_rv", true);
    if (const Json* s = detail::find(*e, "sigma")) c.estimator.sigma = matrix_from_json(*s, c.d, "estimator.sigma");
  }
  try {
    c.filter().validate(c.d);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }

  if (const Json* l = detail::find(j, "ladder")) {
    for (const auto& v : *l) c.ladder.push_back(v.get<Index>());
  }
  for (const Index n : c.ladder) {
    if (n < 2) throw Error(ErrorCode::ConfigError, "ladder entries must be >= 2");
  }

  if (const Json* s = detail::find(j, "sweep")) {
    c.sweep.sigma = detail::number_list(*s, "sigma");
    c.sweep.beta = detail::number_list(*s, "beta");
    c.sweep.delta_fit = detail::number_list(*s, "delta_fit");
    c.sweep.eta_grid = detail::number_list(*s, "eta_grid");
    c.sweep.fine_factor = detail::get_or<Index>(*s, "fine_factor", 4);
    if (const Json* t = detail::find(*s, "topologies")) {
      for (const auto& g : *t) c.sweep.topologies.push_back(detail::parse_graph(g));
    }
  }

  if (const Json* l = detail::find(j, "lasso")) {
    if (const Json* lam = detail::find(*l, "lambda")) c.lasso.config.lambda = lam->get<double>();
    c.lasso.config.gamma = detail::get_or<double>(*l, "gamma", 1.0);
    c.lasso.config.convergence_tol = detail::get_or<double>(*l, "tol", 1e-7);
    c.lasso.config.max_iters = detail::get_or<int>(*l, "max_iters", 200000);
    c.lasso.config.c_grid = detail::number_list(*l, "c_grid");
    c.lasso.kkt_limit = detail::get_or<double>(*l, "kkt_limit", 1e-4);
    c.lasso.config.validate();
  }

  c.data_path = detail::get_or<std::string>(j, "data", "");
  c.period = detail::get_or<Index>(j, "period", 0);
  c.adaptive_lasso = detail::get_or<bool>(j, "adaptive_lasso", false);
  c.bootstrap_paths = detail::get_or<Index>(j, "bootstrap_paths", 50);
  c.threads = detail::get_or<unsigned>(j, "threads", 0);
  return c;
}

inline Json load_json_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config '" + file + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid JSON in '") + file + "': " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& file) { return parse_config(load_json_file(file)); }

/// FNV-1a (64 bit) of the canonical dump (sorted keys, no whitespace).
inline std::string config_hash(const Json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// True dynamics from q, psi or theta (in that order of precedence).
inline DynamicsMatrix true_dynamics(const ExperimentConfig& c, const NormalizedAdjacency& an) {
  if (c.q) return DynamicsMatrix{*c.q};
  if (c.psi) return q_from_psi(PsiParams{*c.psi}, an);
  return q_from_theta(*c.theta, an);
}

inline AdjacencyMatrix build_graph(const GraphConfig& g, Index d) { return make_topology(g.kind, d, g.path); }

}  // namespace grou
