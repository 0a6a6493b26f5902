#include "grou/graph.hpp"
#include "grou/grid.hpp"
#include "grou/linalg.hpp"
#include "grou/random.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <numeric>
#include <sstream>

using namespace grou;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (const double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

template <class F>
ErrorCode code_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no grou::Error thrown";
  return ErrorCode::ConfigError;
}

}  // namespace

TEST(Vec, ColumnStackingLayout) {
  const Matrix m = mat({{1, 2}, {3, 4}});
  const Vector v = vec(m);
  EXPECT_EQ(v(0), 1);
  EXPECT_EQ(v(1), 3);
  EXPECT_EQ(v(2), 2);
  EXPECT_EQ(v(3), 4);
  EXPECT_EQ(unvec(v, 2), m);
}

TEST(RowNormalize, TwoNodeComplete) {
  const auto an = row_normalize(AdjacencyMatrix(mat({{0, 1}, {1, 0}})));
  EXPECT_EQ(an.entries, mat({{0, 1}, {1, 0}}));
  EXPECT_EQ(an.degrees, Vector::Ones(2));
}

TEST(RowNormalize, ThreeNodePath) {
  const auto an = row_normalize(AdjacencyMatrix::from_edges(3, {{0, 1}, {1, 2}}));
  EXPECT_EQ(an.entries.row(1), mat({{0.5, 0, 0.5}}));
  EXPECT_EQ(an.degrees, (Vector(3) << 1, 2, 1).finished());
}

TEST(RowNormalize, AllZero) {
  const auto an = row_normalize(AdjacencyMatrix::empty(3));
  EXPECT_EQ(an.entries, Matrix::Zero(3, 3));
  EXPECT_EQ(an.degrees, Vector::Ones(3));
}

TEST(RowNormalize, RowsSumToOneOrZero) {
  const auto an = row_normalize(AdjacencyMatrix::from_edges(5, {{0, 1}, {1, 2}, {2, 0}, {3, 2}}));
  for (Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(an.entries.row(i).sum(), i == 4 ? 0.0 : 1.0);
}

TEST(Adjacency, RejectsInvalid) {
  EXPECT_THROW(AdjacencyMatrix(mat({{1, 0}, {0, 0}})), Error);
  EXPECT_THROW(AdjacencyMatrix(mat({{0, 1}, {0, 0}})), Error);
  EXPECT_THROW(AdjacencyMatrix(mat({{0, 0.5}, {0.5, 0}})), Error);
}

TEST(Rho, AllNodesHaveNeighbours) {
  for (const auto kind : {TopologyKind::Polymer, TopologyKind::Complete}) {
    EXPECT_NEAR(rho(row_normalize(make_topology(kind, 7))), 1.0, 1e-14);
  }
  EXPECT_NEAR(rho(row_normalize(make_topology(TopologyKind::Lattice, 10))), 1.0, 1e-14);
}

TEST(Rho, EmptyGraphIsZero) { EXPECT_EQ(rho(row_normalize(AdjacencyMatrix::empty(4))), 0.0); }

TEST(Rho, OneIsolatedNode) {
  // Oracle: sum_ij a_ij / n_i by explicit loops.
  const auto a = AdjacencyMatrix::from_edges(3, {{0, 1}});
  double total = 0.0;
  for (Index i = 0; i < 3; ++i) {
    double n = 0.0;
    for (Index j = 0; j < 3; ++j) n += a(i, j);
    for (Index j = 0; j < 3; ++j) total += a(i, j) / std::max(1.0, n);
  }
  EXPECT_DOUBLE_EQ(total, 2.0);
  EXPECT_DOUBLE_EQ(rho(row_normalize(a)), 3.0 / total);
}

TEST(Rho, PermutationInvariant) {
  const auto a = AdjacencyMatrix::from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {0, 4}});
  std::vector<Index> perm{3, 5, 0, 1, 4, 2};
  EXPECT_NEAR(rho(row_normalize(a)), rho(row_normalize(a.permuted(perm))), 1e-14);
}

TEST(QFromTheta, ReferenceValuesTwoNodes) {
  const auto an = row_normalize(make_topology(TopologyKind::Complete, 2));
  const auto q = q_from_theta({-1.549, 5.525}, an);
  EXPECT_EQ(q.q, mat({{5.525, -1.549}, {-1.549, 5.525}}));
}

TEST(QFromTheta, IdentityForZeroNetwork) {
  const auto an = row_normalize(make_topology(TopologyKind::Polymer, 5));
  EXPECT_EQ(q_from_theta({0, 1}, an).q, Matrix::Identity(5, 5));
}

TEST(QFromTheta, InvalidTheta) {
  const auto an = row_normalize(make_topology(TopologyKind::Polymer, 3));
  EXPECT_EQ(code_of([&] { q_from_theta({2, 1}, an); }), ErrorCode::InvalidTheta);
  EXPECT_EQ(code_of([&] { q_from_theta({0, -1}, an); }), ErrorCode::InvalidTheta);
}

TEST(QFromTheta, SymmetricOnRegularGraph) {
  const auto an = row_normalize(make_topology(TopologyKind::Complete, 6));
  const auto q = q_from_theta({0.7, 2.0}, an);
  EXPECT_TRUE(q.q.isApprox(q.q.transpose(), 0.0));
}

TEST(QFromTheta, GershgorinProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double t2 = 0.1 + 5.0 * rng.uniform();
    const double t1 = (2.0 * rng.uniform() - 1.0) * t2 * 0.999;
    for (const auto kind : {TopologyKind::Polymer, TopologyKind::Complete}) {
      const auto q = q_from_theta({t1, t2}, row_normalize(make_topology(kind, 2 + trial % 7)));
      EXPECT_TRUE(q.gershgorin_positive());
      EXPECT_GT(Eigen::EigenSolver<Matrix>(q.q).eigenvalues().real().minCoeff(), 0.0);
      // Ān is symmetric only on regular graphs; there the symmetric part is Q itself.
      if (kind == TopologyKind::Complete) {
        EXPECT_GT(symmetric_part_eigenvalues(q.q).minCoeff(), 0.0);
      }
    }
  }
}

TEST(QFromPsi, ScaledIdentity) {
  const auto an = row_normalize(make_topology(TopologyKind::Complete, 4));
  EXPECT_EQ(q_from_psi(PsiParams::from_matrix(2.5 * Matrix::Identity(4, 4)), an).q, 2.5 * Matrix::Identity(4, 4));
}

TEST(QFromPsi, TwoNodeHadamard) {
  const auto an = row_normalize(make_topology(TopologyKind::Complete, 2));
  const Matrix m = mat({{3, 1}, {1, 3}});
  // Oracle: (I + An)_ij * m_ij, entry by entry.
  Matrix expected(2, 2);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 2; ++j) expected(i, j) = ((i == j ? 1.0 : 0.0) + an.entries(i, j)) * m(i, j);
  }
  EXPECT_EQ(q_from_psi(PsiParams::from_matrix(m), an).q, expected);
  EXPECT_EQ(expected, m);
}

TEST(QFromPsi, OrientationUsesColumnStacking) {
  const auto an = row_normalize(make_topology(TopologyKind::Complete, 2));
  Vector psi(4);
  psi << 3, 0.5, -0.25, 4;  // (0,0), (1,0), (0,1), (1,1)
  const auto q = q_from_psi({psi}, an);
  EXPECT_EQ(q.q(1, 0), 0.5);
  EXPECT_EQ(q.q(0, 1), -0.25);
}

TEST(QFromPsi, ZeroDiagonalInvalid) {
  const auto an = row_normalize(make_topology(TopologyKind::Complete, 2));
  EXPECT_EQ(code_of([&] { q_from_psi(PsiParams::from_matrix(mat({{0, 0}, {0, 1}})), an); }), ErrorCode::InvalidPsi);
}

TEST(QFromPsi, CrossParametrisationConsistency) {
  for (const auto kind : {TopologyKind::Complete, TopologyKind::Polymer}) {
    const auto a = make_topology(kind, kind == TopologyKind::Complete ? 2 : 6);
    const auto an = row_normalize(a);
    const ThetaParams t{-1.549, 5.525};
    EXPECT_TRUE(q_from_psi(psi_from_theta(t, a), an).q.isApprox(q_from_theta(t, an).q, 1e-15));
  }
}

TEST(Topology, Complete3) {
  const auto a = make_topology(TopologyKind::Complete, 3);
  EXPECT_EQ(a.matrix(), Matrix::Ones(3, 3) - Matrix::Identity(3, 3));
}

TEST(Topology, Polymer50DegreeStats) {
  const auto s = degree_stats(make_topology(TopologyKind::Polymer, 50));
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.max, 2);
}

TEST(Topology, Lattice82DegreeStats) {
  const auto s = degree_stats(make_topology(TopologyKind::Lattice, 82));
  EXPECT_EQ(s.median, 4);
  EXPECT_EQ(s.max, 4);
}

TEST(Topology, LatticeBadDimension) {
  EXPECT_EQ(code_of([] { make_topology(TopologyKind::Lattice, 11); }), ErrorCode::BadDimension);
}

TEST(Topology, ParseKind) {
  EXPECT_EQ(parse_topology_kind("polymer"), TopologyKind::Polymer);
  EXPECT_EQ(parse_topology_kind("lattice"), TopologyKind::Lattice);
  EXPECT_THROW(parse_topology_kind("star"), Error);
}

TEST(EdgeList, RoundTrip) {
  const auto a = make_topology(TopologyKind::Lattice, 10);
  std::stringstream ss;
  write_edge_list(ss, a);
  EXPECT_EQ(read_edge_list(ss, 10).matrix(), a.matrix());
}

TEST(EdgeList, CommentsAndInferredDimension) {
  std::istringstream in("# header\n0 1\n\n1 3\n");
  const auto a = read_edge_list(in);
  EXPECT_EQ(a.dim(), 4);
  EXPECT_EQ(a(3, 1), 1.0);
}

TEST(EdgeList, ParseErrors) {
  for (const char* text : {"0 x\n", "0 1 2\n", "-1 0\n", "1 1\n", "0 5\n"}) {
    std::istringstream in(text);
    EXPECT_EQ(code_of([&] { read_edge_list(in, 3); }), ErrorCode::ParseError) << text;
  }
  EXPECT_EQ(code_of([] { read_edge_list_file("/nonexistent/edges.txt"); }), ErrorCode::ParseError);
}

TEST(MatrixExp, MatchesEigenReference) {
  Rng rng(3);
  for (const double scale : {1e-3, 0.1, 1.0, 5.0, 40.0}) {
    Matrix m(6, 6);
    for (Index i = 0; i < m.size(); ++i) m(i) = scale * rng.gauss();
    const Matrix ref = m.exp();
    EXPECT_LE((matrix_exp(m) - ref).norm(), 1e-11 * std::max(1.0, ref.norm())) << scale;
  }
}

TEST(MatrixExp, DiagonalAndZero) {
  EXPECT_EQ(matrix_exp(Matrix::Zero(3, 3)), Matrix::Identity(3, 3));
  const Vector dg = (Vector(3) << -1.0, 0.5, 2.0).finished();
  const Matrix e = matrix_exp(Matrix(dg.asDiagonal()));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(e(i, i), std::exp(dg(i)), 1e-14 * std::exp(dg(i)));
}

TEST(Linalg, PsdHelpers) {
  const Matrix s = mat({{2, 1}, {1, 2}});
  EXPECT_TRUE(is_psd(s));
  EXPECT_FALSE(is_psd(mat({{1, 2}, {2, 1}})));
  const Matrix f = psd_factor(s);
  EXPECT_TRUE((f * f.transpose()).isApprox(s, 1e-13));
  EXPECT_NEAR(symmetric_condition(s), 3.0, 1e-12);
  EXPECT_NEAR(spectral_radius(mat({{0, 2}, {-2, 0}})), 2.0, 1e-12);
  EXPECT_TRUE(is_psd(psd_project(mat({{1, 2}, {2, 1}}))));
}

TEST(Grid, UniformAndJittered) {
  const auto g = ObservationGrid::uniform(5, 0.25);
  EXPECT_EQ(g.size(), 5);
  EXPECT_DOUBLE_EQ(g.horizon(), 1.0);
  EXPECT_TRUE(g.is_uniform());
  Rng rng(1);
  const auto j = ObservationGrid::jittered(100, 0.1, 0.4, rng);
  EXPECT_FALSE(j.is_uniform());
  EXPECT_LE(j.mesh(), 0.14 + 1e-12);
  EXPECT_GE(j.min_spacing(), 0.06 - 1e-12);
  EXPECT_THROW(ObservationGrid(std::vector<double>{0.0, 1.0, 1.0}), Error);
  EXPECT_THROW(ObservationGrid(std::vector<double>{0.0}), Error);
}

TEST(Grid, RefinePrefixSubsample) {
  const auto g = ObservationGrid::uniform(4, 1.0);
  const auto r = g.refined(4);
  EXPECT_EQ(r.size(), 13);
  EXPECT_DOUBLE_EQ(r.mesh(), 0.25);
  EXPECT_EQ(r.subsampled(4).size(), 4);
  EXPECT_DOUBLE_EQ(r.subsampled(4)[3], 3.0);
  EXPECT_EQ(g.prefix(2).size(), 2);
  EXPECT_DOUBLE_EQ(g.rescaled(0.5).horizon(), 1.5);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  auto a = Rng::stream(7, 3, 0);
  auto b = Rng::stream(7, 3, 0);
  auto c = Rng::stream(7, 4, 0);
  const double x = a.gauss();
  EXPECT_EQ(x, b.gauss());
  EXPECT_NE(x, c.gauss());
}
