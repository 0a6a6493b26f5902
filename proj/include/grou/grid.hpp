#pragma once

#include "grou/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace grou {

/// Strictly increasing observation times t_1 < ... < t_N, N >= 2.
class ObservationGrid {
 public:
  ObservationGrid() = default;

  explicit ObservationGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw Error(ErrorCode::TooShort, "grid needs at least two times");
    for (std::size_t k = 0; k + 1 < times_.size(); ++k) {
      if (!(times_[k + 1] > times_[k]) || !std::isfinite(times_[k + 1])) {
        throw Error(ErrorCode::BadDimension,
                    "grid must be strictly increasing (index " + std::to_string(k + 1) + ")");
      }
    }
  }

  static ObservationGrid uniform(Index n, double delta, double start = 0.0) {
    if (!(delta > 0.0)) throw Error(ErrorCode::BadDimension, "grid spacing must be positive");
    std::vector<double> t(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) t[static_cast<std::size_t>(k)] = start + static_cast<double>(k) * delta;
    return ObservationGrid(std::move(t));
  }

  /// Spacings delta * (1 + u_k), u_k uniform on [-jitter, jitter].
  template <class Rng>
  static ObservationGrid jittered(Index n, double delta, double jitter, Rng& rng) {
    if (!(jitter >= 0.0 && jitter < 1.0)) {
      throw Error(ErrorCode::ConfigError, "jitter must lie in [0, 1)");
    }
    std::vector<double> t(static_cast<std::size_t>(n));
    double now = 0.0;
    for (Index k = 0; k < n; ++k) {
      t[static_cast<std::size_t>(k)] = now;
      now += delta * (1.0 + jitter * (2.0 * rng.uniform() - 1.0));
    }
    return ObservationGrid(std::move(t));
  }

  Index size() const { return static_cast<Index>(times_.size()); }
  Index intervals() const { return size() - 1; }
  const std::vector<double>& times() const { return times_; }
  double operator[](Index k) const { return times_[static_cast<std::size_t>(k)]; }
  double spacing(Index k) const { return (*this)[k + 1] - (*this)[k]; }

  /// T_N.
  double horizon() const { return times_.back() - times_.front(); }

  /// Delta_N: the largest spacing.
  double mesh() const {
    double m = 0.0;
    for (Index k = 0; k < intervals(); ++k) m = std::max(m, spacing(k));
    return m;
  }

  double min_spacing() const {
    double m = spacing(0);
    for (Index k = 1; k < intervals(); ++k) m = std::min(m, spacing(k));
    return m;
  }

  bool is_uniform(double rel_tol = 1e-9) const { return mesh() - min_spacing() <= rel_tol * mesh(); }

  /// Each interval split into m equal sub-intervals.
  ObservationGrid refined(Index m) const {
    if (m < 1) throw Error(ErrorCode::ConfigError, "refinement must be >= 1");
    if (m == 1) return *this;
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(intervals() * m + 1));
    for (Index k = 0; k < intervals(); ++k) {
      const double h = spacing(k) / static_cast<double>(m);
      for (Index s = 0; s < m; ++s) t.push_back((*this)[k] + static_cast<double>(s) * h);
    }
    t.push_back(times_.back());
    return ObservationGrid(std::move(t));
  }

  ObservationGrid prefix(Index n) const {
    if (n < 2 || n > size()) throw Error(ErrorCode::BadDimension, "prefix length out of range");
    return ObservationGrid(std::vector<double>(times_.begin(), times_.begin() + n));
  }

  /// Every step-th time point, starting from the first.
  ObservationGrid subsampled(Index step) const {
    std::vector<double> t;
    for (Index k = 0; k < size(); k += step) t.push_back((*this)[k]);
    return ObservationGrid(std::move(t));
  }

  /// Times relative to the first point, multiplied by factor.
  ObservationGrid rescaled(double factor) const {
    std::vector<double> t(times_.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = (times_[k] - times_.front()) * factor;
    return ObservationGrid(std::move(t));
  }

 private:
  std::vector<double> times_;
};

}  // namespace grou
