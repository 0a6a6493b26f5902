#pragma once

#include "grou/core.hpp"
#include "grou/graph.hpp"
#include "grou/grid.hpp"
#include "grou/levy.hpp"
#include "grou/linalg.hpp"
#include "grou/random.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace grou {

/// Observations Y (d x N) on a grid. `oracle` holds the continuous-part
/// increments Delta_k Y^c (d x (N-1)); `jumps` the matching jump increments.
/// Both are only available for simulated data.
struct SampledPath {
  ObservationGrid grid;
  Matrix values;
  std::optional<Matrix> oracle;
  std::optional<Matrix> jumps;

  Index dim() const { return values.rows(); }
  Index size() const { return values.cols(); }
  bool has_oracle() const { return oracle.has_value(); }

  void validate() const {
    if (values.cols() != grid.size()) {
      throw Error(ErrorCode::BadDimension, "path has " + std::to_string(values.cols()) +
                                               " observations for " + std::to_string(grid.size()) + " times");
    }
    if (!values.allFinite()) throw Error(ErrorCode::InvalidDynamics, "path contains non-finite values");
    if (oracle && (oracle->rows() != values.rows() || oracle->cols() != grid.intervals())) {
      throw Error(ErrorCode::BadDimension, "oracle shape does not match the path");
    }
  }

  /// First n observations.
  SampledPath prefix(Index n) const {
    SampledPath p{grid.prefix(n), values.leftCols(n), std::nullopt, std::nullopt};
    if (oracle) p.oracle = oracle->leftCols(n - 1);
    if (jumps) p.jumps = jumps->leftCols(n - 1);
    return p;
  }

  /// Every step-th observation; oracle and jump increments are aggregated.
  SampledPath subsampled(Index step) const {
    const ObservationGrid g = grid.subsampled(step);
    Matrix v(dim(), g.size());
    for (Index k = 0; k < g.size(); ++k) v.col(k) = values.col(k * step);
    SampledPath p{g, std::move(v), std::nullopt, std::nullopt};
    auto aggregate = [&](const Matrix& m) {
      Matrix out = Matrix::Zero(dim(), g.intervals());
      for (Index k = 0; k < g.intervals(); ++k) out.col(k) = m.middleCols(k * step, step).rowwise().sum();
      return out;
    };
    if (oracle) p.oracle = aggregate(*oracle);
    if (jumps) p.jumps = aggregate(*jumps);
    return p;
  }

  /// Same observations with time stamps multiplied by factor (used to refit
  /// at a mis-specified mesh). Oracles are dropped since they no longer
  /// correspond to the relabelled clock.
  SampledPath with_time_scale(double factor) const {
    return SampledPath{grid.rescaled(factor), values, std::nullopt, std::nullopt};
  }
};

/// Exact: Y <- exp(-Q delta) Y + Delta L (default).
/// Euler: Y <- (I - Q delta) Y + Delta L.
enum class Scheme { Exact, Euler };

inline Scheme parse_scheme(const std::string& name) {
  if (name == "exact") return Scheme::Exact;
  if (name == "euler") return Scheme::Euler;
  throw Error(ErrorCode::ConfigError, "unknown simulation scheme '" + name + "'");
}

inline const char* to_string(Scheme s) { return s == Scheme::Exact ? "exact" : "euler"; }

namespace detail {

/// One-step transition matrices, cached per distinct spacing.
class TransitionCache {
 public:
  TransitionCache(const Matrix& q, Scheme scheme) : q_(q), scheme_(scheme) {}

  const Matrix& operator()(double dt) {
    auto it = cache_.find(dt);
    if (it != cache_.end()) return it->second;
    Matrix step = scheme_ == Scheme::Exact ? matrix_exp(-q_ * dt)
                                           : Matrix(Matrix::Identity(q_.rows(), q_.cols()) - q_ * dt);
    if (spectral_radius(step) >= 1.0) {
      throw Error(ErrorCode::InvalidDynamics, "transition matrix over dt=" + std::to_string(dt) +
                                                  " has spectral radius >= 1");
    }
    if (cache_.size() > 4096) cache_.clear();
    return cache_.emplace(dt, std::move(step)).first->second;
  }

 private:
  Matrix q_;
  Scheme scheme_;
  std::map<double, Matrix> cache_;
};

/// Smallest real part among the eigenvalues of Q (the slowest decay rate).
inline double min_decay_rate(const Matrix& q) {
  if (q.rows() == 0) throw Error(ErrorCode::BadDimension, "empty dynamics matrix");
  return Eigen::EigenSolver<Matrix>(q, false).eigenvalues().real().minCoeff();
}

}  // namespace detail

/// Terminal state of a burn-in run of length 20 / min Re(eig Q) started
/// at zero, simulated with steps of at most `step`.
inline Vector stationary_init(const DynamicsMatrix& q, const LevySpec& spec, Rng& rng, double step = 1.0 / 96.0,
                              Scheme scheme = Scheme::Exact) {
  const double lmin = detail::min_decay_rate(q.q);
  if (!(lmin > 0.0)) throw Error(ErrorCode::InvalidDynamics, "Q has an eigenvalue with non-positive real part");
  const double length = 20.0 / lmin;
  const auto steps = std::max<Index>(1, static_cast<Index>(std::ceil(length / step)));
  const ObservationGrid burn = ObservationGrid::uniform(steps + 1, length / static_cast<double>(steps));
  const IncrementMatrix inc = generate_increments(spec, burn, rng);
  detail::TransitionCache transition(q.q, scheme);
  Vector y = Vector::Zero(q.dim());
  for (Index k = 0; k < steps; ++k) y = transition(burn.spacing(k)) * y + inc.values.col(k);
  return y;
}

struct SimulationOptions {
  Index refinement = 8;
  Scheme scheme = Scheme::Exact;
  /// Starting value; std::nullopt requests stationary_init.
  std::optional<Vector> y0;
};

/// Simulates on the refinement-fold grid and keeps every refinement-th point.
inline SampledPath simulate_path(const DynamicsMatrix& q, const LevySpec& spec, const ObservationGrid& grid,
                                 const SimulationOptions& opts, Rng& rng) {
  const Index d = q.dim();
  if (spec.dim() != d) throw Error(ErrorCode::BadDimension, "noise and dynamics dimensions differ");
  if (opts.refinement < 1) throw Error(ErrorCode::ConfigError, "refinement must be >= 1");
  const Index m = opts.refinement;
  detail::TransitionCache transition(q.q, opts.scheme);
  // Surface non-mean-reverting dynamics before drawing any noise.
  transition(grid.mesh());

  Vector y;
  if (opts.y0) {
    if (opts.y0->size() != d) throw Error(ErrorCode::BadDimension, "initial state has wrong dimension");
    y = *opts.y0;
  } else {
    y = stationary_init(q, spec, rng, grid.min_spacing() / static_cast<double>(m), opts.scheme);
  }

  const ObservationGrid fine = grid.refined(m);
  const IncrementMatrix inc = generate_increments(spec, fine, rng);

  SampledPath path{grid, Matrix(d, grid.size()), Matrix::Zero(d, grid.intervals()),
                   Matrix::Zero(d, grid.intervals())};
  path.values.col(0) = y;
  for (Index k = 0; k < grid.intervals(); ++k) {
    const Vector start = y;
    for (Index s = 0; s < m; ++s) {
      const Index f = k * m + s;
      y = transition(fine.spacing(f)) * y + inc.values.col(f);
      path.jumps->col(k) += inc.jumps.col(f);
    }
    path.values.col(k + 1) = y;
    path.oracle->col(k) = (y - start) - path.jumps->col(k);
  }
  if (!path.values.allFinite()) throw Error(ErrorCode::InvalidDynamics, "simulated path diverged");
  return path;
}

inline SampledPath simulate_path(const DynamicsMatrix& q, const LevySpec& spec, const ObservationGrid& grid,
                                 Index refinement, Rng& rng, std::optional<Vector> y0 = std::nullopt) {
  return simulate_path(q, spec, grid, SimulationOptions{refinement, Scheme::Exact, std::move(y0)}, rng);
}

/// CSV layout: time, y0..y{d-1}, then optional c_y0..c_y{d-1} oracle columns.
/// Row k carries the oracle increment over [t_k, t_{k+1}); the last row
/// leaves those fields empty.
inline void write_path_csv(std::ostream& out, const SampledPath& path) {
  const Index d = path.dim();
  out << "time";
  for (Index i = 0; i < d; ++i) out << ",y" << i;
  if (path.oracle) {
    for (Index i = 0; i < d; ++i) out << ",c_y" << i;
  }
  out << "\r\n" << std::setprecision(17);
  for (Index k = 0; k < path.size(); ++k) {
    out << path.grid[k];
    for (Index i = 0; i < d; ++i) out << ',' << path.values(i, k);
    if (path.oracle) {
      for (Index i = 0; i < d; ++i) {
        out << ',';
        if (k < path.size() - 1) out << (*path.oracle)(i, k);
      }
    }
    out << "\r\n";
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_number(const std::string& s, Index line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  while (used < s.size() && (s[used] == ' ' || s[used] == '\t')) ++used;
  if (s.empty() || used != s.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace detail

/// Reads the layout written by write_path_csv. Any header works; columns whose
/// name starts with "c_" are taken as oracle increments.
inline SampledPath read_path_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty CSV");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw Error(ErrorCode::ParseError, "CSV needs a time column and at least one series");
  std::vector<std::size_t> value_cols;
  std::vector<std::size_t> oracle_cols;
  for (std::size_t c = 1; c < header.size(); ++c) {
    (header[c].rfind("c_", 0) == 0 ? oracle_cols : value_cols).push_back(c);
  }
  if (value_cols.empty()) throw Error(ErrorCode::ParseError, "CSV has no value columns");
  if (!oracle_cols.empty() && oracle_cols.size() != value_cols.size()) {
    throw Error(ErrorCode::ParseError, "oracle column count differs from value column count");
  }
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> oracle_rows;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + " has " +
                                             std::to_string(fields.size()) + " fields, expected " +
                                             std::to_string(header.size()));
    }
    times.push_back(detail::parse_number(fields[0], line_no));
    std::vector<double> r;
    for (const auto c : value_cols) r.push_back(detail::parse_number(fields[c], line_no));
    rows.push_back(std::move(r));
    if (!oracle_cols.empty()) {
      std::vector<double> o;
      for (const auto c : oracle_cols) {
        if (!fields[c].empty()) o.push_back(detail::parse_number(fields[c], line_no));
      }
      if (!o.empty() && o.size() != oracle_cols.size()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + " has a partial oracle row");
      }
      oracle_rows.push_back(std::move(o));
    }
  }
  const auto n = static_cast<Index>(rows.size());
  const auto d = static_cast<Index>(value_cols.size());
  SampledPath path;
  try {
    path.grid = ObservationGrid(times);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  path.values.resize(d, n);
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < d; ++i) path.values(i, k) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  }
  if (!oracle_cols.empty()) {
    Matrix o(d, n - 1);
    for (Index k = 0; k + 1 < n; ++k) {
      const auto& r = oracle_rows[static_cast<std::size_t>(k)];
      if (r.empty()) throw Error(ErrorCode::ParseError, "missing oracle values in row " + std::to_string(k + 2));
      for (Index i = 0; i < d; ++i) o(i, k) = r[static_cast<std::size_t>(i)];
    }
    path.oracle = std::move(o);
  }
  if (!path.values.allFinite()) throw Error(ErrorCode::ParseError, "CSV contains non-finite values");
  return path;
}

inline void write_path_csv_file(const std::string& file, const SampledPath& path) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + file + "'");
  write_path_csv(out, path);
}

inline SampledPath read_path_csv_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + file + "'");
  return read_path_csv(in);
}

}  // namespace grou
