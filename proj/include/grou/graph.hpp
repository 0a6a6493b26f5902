#pragma once

#include "grou/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace grou {

/// Undirected, unweighted graph topology: symmetric 0/1 matrix, zero diagonal.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;

  explicit AdjacencyMatrix(Matrix entries) : entries_(std::move(entries)) { validate(); }

  static AdjacencyMatrix empty(Index d) { return AdjacencyMatrix(Matrix::Zero(d, d)); }

  static AdjacencyMatrix from_edges(Index d, const std::vector<std::pair<Index, Index>>& edges) {
    Matrix m = Matrix::Zero(d, d);
    for (const auto& [i, j] : edges) {
      if (i < 0 || j < 0 || i >= d || j >= d) {
        throw Error(ErrorCode::BadDimension, "edge (" + std::to_string(i) + "," +
                                                 std::to_string(j) + ") outside 0.." +
                                                 std::to_string(d - 1));
      }
      if (i == j) throw Error(ErrorCode::BadDimension, "self-loop at node " + std::to_string(i));
      m(i, j) = 1.0;
      m(j, i) = 1.0;
    }
    return AdjacencyMatrix(std::move(m));
  }

  Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  double operator()(Index i, Index j) const { return entries_(i, j); }

  /// Raw neighbour counts (no floor at one).
  Vector neighbour_counts() const { return entries_.rowwise().sum(); }

  std::vector<std::pair<Index, Index>> edges() const {
    std::vector<std::pair<Index, Index>> out;
    for (Index i = 0; i < dim(); ++i) {
      for (Index j = i + 1; j < dim(); ++j) {
        if (entries_(i, j) != 0.0) out.emplace_back(i, j);
      }
    }
    return out;
  }

  AdjacencyMatrix permuted(const std::vector<Index>& perm) const {
    Matrix m(dim(), dim());
    for (Index i = 0; i < dim(); ++i) {
      for (Index j = 0; j < dim(); ++j) m(i, j) = entries_(perm[i], perm[j]);
    }
    return AdjacencyMatrix(std::move(m));
  }

 private:
  void validate() const {
    if (entries_.rows() != entries_.cols()) {
      throw Error(ErrorCode::BadDimension, "adjacency matrix must be square");
    }
    for (Index i = 0; i < entries_.rows(); ++i) {
      if (entries_(i, i) != 0.0) {
        throw Error(ErrorCode::BadDimension, "adjacency diagonal must be zero");
      }
      for (Index j = 0; j < entries_.cols(); ++j) {
        const double a = entries_(i, j);
        if (a != 0.0 && a != 1.0) throw Error(ErrorCode::BadDimension, "adjacency entries must be 0/1");
        if (a != entries_(j, i)) throw Error(ErrorCode::BadDimension, "adjacency must be symmetric");
      }
    }
  }

  Matrix entries_;
};

/// Row-normalised adjacency with degrees n_i = max(1, sum_j a_ij); rows of
/// isolated nodes are all zero.
struct NormalizedAdjacency {
  Matrix entries;
  Vector degrees;
  AdjacencyMatrix adjacency;

  Index dim() const { return entries.rows(); }
};

inline NormalizedAdjacency row_normalize(const AdjacencyMatrix& a) {
  const Vector degrees = a.neighbour_counts().cwiseMax(1.0);
  Matrix entries = degrees.cwiseInverse().asDiagonal() * a.matrix();
  return {std::move(entries), degrees, a};
}

/// d / sum_ij (a_ij / n_i), or 0 for the empty graph.
inline double rho(const NormalizedAdjacency& an) {
  const double total = an.entries.sum();
  if (total == 0.0) return 0.0;
  return static_cast<double>(an.dim()) / total;
}

struct ThetaParams {
  double theta1 = 0.0;  // network effect
  double theta2 = 1.0;  // momentum effect

  bool valid() const { return theta2 > 0.0 && theta2 > std::abs(theta1); }
};

/// Node-specific parameters, column-stacked: entry (i, j) at index d*j + i.
struct PsiParams {
  Vector psi;

  Index dim() const { return static_cast<Index>(std::llround(std::sqrt(static_cast<double>(psi.size())))); }

  static PsiParams from_matrix(const Matrix& m) { return {vec(m)}; }

  /// psi_ii > 0 and psi_ii > n_i^{-1} sum_{j != i} |psi_ij| for every node.
  bool valid(const NormalizedAdjacency& an) const {
    const Index d = an.dim();
    if (psi.size() != d * d) return false;
    const Matrix m = unvec(psi, d);
    for (Index i = 0; i < d; ++i) {
      double off = 0.0;
      for (Index j = 0; j < d; ++j) {
        if (j != i) off += std::abs(m(i, j));
      }
      if (!(m(i, i) > 0.0) || !(m(i, i) > off / an.degrees(i))) return false;
    }
    return true;
  }
};

/// The drift matrix Q of dY = -Q Y dt + dL.
struct DynamicsMatrix {
  Matrix q;

  Index dim() const { return q.rows(); }

  /// Every row Gershgorin disc of Q lies in the open right half-plane.
  bool gershgorin_positive() const {
    const Matrix& s = q;
    for (Index i = 0; i < s.rows(); ++i) {
      const double radius = s.row(i).cwiseAbs().sum() - std::abs(s(i, i));
      if (s(i, i) - radius <= 0.0) return false;
    }
    return true;
  }
};

inline DynamicsMatrix q_from_theta(const ThetaParams& t, const NormalizedAdjacency& an) {
  if (!t.valid()) {
    throw Error(ErrorCode::InvalidTheta, "need theta2 > 0 and theta2 > |theta1|, got (" +
                                             std::to_string(t.theta1) + ", " +
                                             std::to_string(t.theta2) + ")");
  }
  const Index d = an.dim();
  return {t.theta2 * Matrix::Identity(d, d) + t.theta1 * an.entries};
}

inline DynamicsMatrix q_from_psi(const PsiParams& p, const NormalizedAdjacency& an) {
  const Index d = an.dim();
  if (p.psi.size() != d * d) {
    throw Error(ErrorCode::BadDimension, "psi must have d^2 = " + std::to_string(d * d) + " entries");
  }
  if (!p.valid(an)) throw Error(ErrorCode::InvalidPsi, "psi violates the diagonal dominance condition");
  const Matrix mask = Matrix::Identity(d, d) + an.entries;
  return {mask.cwiseProduct(unvec(p.psi, d))};
}

/// The psi vector reproducing Q(theta) through q_from_psi: theta2 on the
/// diagonal, theta1 wherever a_ij = 1.
inline PsiParams psi_from_theta(const ThetaParams& t, const AdjacencyMatrix& a) {
  const Index d = a.dim();
  const Matrix m = t.theta2 * Matrix::Identity(d, d) + t.theta1 * a.matrix();
  return PsiParams::from_matrix(m);
}

enum class TopologyKind { Polymer, Lattice, Complete, File };

inline TopologyKind parse_topology_kind(const std::string& name) {
  if (name == "polymer") return TopologyKind::Polymer;
  if (name == "lattice") return TopologyKind::Lattice;
  if (name == "complete") return TopologyKind::Complete;
  if (name == "file") return TopologyKind::File;
  throw Error(ErrorCode::ConfigError, "unknown topology '" + name + "'");
}

inline const char* to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::Polymer: return "polymer";
    case TopologyKind::Lattice: return "lattice";
    case TopologyKind::Complete: return "complete";
    case TopologyKind::File: return "file";
  }
  return "unknown";
}

/// Edge list: one "i j" pair per line, 0-based, each undirected edge once.
/// Blank lines and lines starting with '#' are skipped. When d is 0 the
/// dimension is one plus the largest index seen.
inline AdjacencyMatrix read_edge_list(std::istream& in, Index d = 0) {
  std::vector<std::pair<Index, Index>> edges;
  std::string line;
  Index line_no = 0;
  Index max_index = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long i = 0;
    long long j = 0;
    std::string rest;
    if (!(ls >> i >> j) || (ls >> rest)) {
      throw Error(ErrorCode::ParseError, "edge list line " + std::to_string(line_no) + ": '" + line + "'");
    }
    if (i < 0 || j < 0) {
      throw Error(ErrorCode::ParseError, "negative node index on line " + std::to_string(line_no));
    }
    edges.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
    max_index = std::max({max_index, static_cast<Index>(i), static_cast<Index>(j)});
  }
  const Index dim = d > 0 ? d : max_index + 1;
  if (dim <= 0) throw Error(ErrorCode::ParseError, "edge list is empty and no dimension given");
  if (max_index >= dim) {
    throw Error(ErrorCode::ParseError, "node index " + std::to_string(max_index) +
                                           " exceeds dimension " + std::to_string(dim));
  }
  try {
    return AdjacencyMatrix::from_edges(dim, edges);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline AdjacencyMatrix read_edge_list_file(const std::string& path, Index d = 0) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open edge list '" + path + "'");
  return read_edge_list(in, d);
}

inline void write_edge_list(std::ostream& out, const AdjacencyMatrix& a) {
  for (const auto& [i, j] : a.edges()) out << i << ' ' << j << '\n';
}

/// Polymer: path graph. Lattice: g x g grid with 4-neighbour links plus one
/// pendant node attached to grid corner 0, so d must equal g^2 + 1.
/// Complete: every pair linked.
inline AdjacencyMatrix make_topology(TopologyKind kind, Index d, const std::string& path = {}) {
  if (kind == TopologyKind::File) {
    return read_edge_list_file(path, d);
  }
  if (d < 1) throw Error(ErrorCode::BadDimension, "topology needs d >= 1");
  std::vector<std::pair<Index, Index>> edges;
  switch (kind) {
    case TopologyKind::Polymer:
      for (Index i = 0; i + 1 < d; ++i) edges.emplace_back(i, i + 1);
      break;
    case TopologyKind::Complete:
      for (Index i = 0; i < d; ++i) {
        for (Index j = i + 1; j < d; ++j) edges.emplace_back(i, j);
      }
      break;
    case TopologyKind::Lattice: {
      const auto g = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(d - 1))));
      if (g < 1 || g * g + 1 != d) {
        throw Error(ErrorCode::BadDimension,
                    "lattice needs d = g^2 + 1, got " + std::to_string(d));
      }
      for (Index r = 0; r < g; ++r) {
        for (Index c = 0; c < g; ++c) {
          const Index node = r * g + c;
          if (c + 1 < g) edges.emplace_back(node, node + 1);
          if (r + 1 < g) edges.emplace_back(node, node + g);
        }
      }
      edges.emplace_back(0, g * g);
      break;
    }
    case TopologyKind::File: break;
  }
  return AdjacencyMatrix::from_edges(d, edges);
}

struct DegreeStats {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline DegreeStats degree_stats(const AdjacencyMatrix& a) {
  const Vector counts = a.neighbour_counts();
  std::vector<double> v(counts.data(), counts.data() + counts.size());
  std::sort(v.begin(), v.end());
  DegreeStats s;
  if (v.empty()) return s;
  s.mean = counts.mean();
  s.min = v.front();
  s.max = v.back();
  const std::size_t n = v.size();
  s.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

}  // namespace grou
