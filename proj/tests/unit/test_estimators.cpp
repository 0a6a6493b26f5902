#include "grou/estimators.hpp"
#include "grou/stats.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

using namespace grou;

namespace {

SampledPath path_from(const std::vector<double>& times, const Matrix& values) {
  return SampledPath{ObservationGrid(times), values, std::nullopt, std::nullopt};
}

LevySpec brownian(Index d, double s2) { return {s2 * Matrix::Identity(d, d), std::monostate{}, 1.0}; }

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

TEST(KMatrix, ConstantPath) {
  const Vector v = (Vector(2) << 1.5, -0.5).finished();
  Matrix y(2, 5);
  for (Index k = 0; k < 5; ++k) y.col(k) = v;
  const auto path = path_from({0, 0.5, 1.0, 1.5, 2.0}, y);
  EXPECT_TRUE(k_matrix_unchecked(path).isApprox(2.0 * v * v.transpose(), 1e-15));
}

TEST(KMatrix, HandEvaluation) {
  // Intervals [0,1] and [1,2] use the left values 1 and 2.
  Matrix y(1, 3);
  y << 1, 2, 7;
  EXPECT_DOUBLE_EQ(k_matrix(path_from({0, 1, 2}, y))(0, 0), 5.0);
}

TEST(KMatrix, ErgodicAverage) {
  const double c = 1.5;
  const double s2 = 0.6;
  Rng rng(1);
  const auto path = simulate_path(DynamicsMatrix{c * Matrix::Identity(1, 1)}, brownian(1, s2),
                                  ObservationGrid::uniform(60001, 0.1), 4, rng);
  const double delta = 0.1 / 4;
  const double stationary = delta * s2 / (1.0 - std::exp(-2.0 * c * delta));
  EXPECT_NEAR(k_matrix(path)(0, 0) / path.grid.horizon(), stationary, 0.05 * stationary);
}

TEST(KMatrix, SingularForTwoPoints) {
  Matrix y(3, 2);
  y << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(code_of([&] { k_matrix(path_from({0, 1}, y)); }), ErrorCode::SingularK);
  EXPECT_EQ(code_of([&] { psi_mle(path_from({0, 1}, y), FilterConfig::uniform(3)); }), ErrorCode::SingularK);
}

TEST(AFiltered, AllIncrementsRejected) {
  Matrix y(2, 4);
  y << 0, 1, 2, 3, 0, -1, -2, -3;
  FilterConfig f{Vector::Constant(2, 0.4), Vector::Constant(2, 0.5)};
  const auto fa = a_filtered(path_from({0, 1, 2, 3}, y), f);
  EXPECT_EQ(fa.a, Vector::Zero(4));
  EXPECT_EQ(fa.pass_fraction, Vector::Zero(2));
}

TEST(AFiltered, HandEvaluation) {
  Matrix y(1, 3);
  y << 1, 1.1, 0.9;
  const auto fa = a_filtered(path_from({0, 1, 2}, y), FilterConfig::unfiltered(1));
  EXPECT_NEAR(fa.a(0), -(1 * 0.1 + 1.1 * (-0.2)), 1e-15);
  EXPECT_NEAR(fa.a(0), 0.12, 1e-15);
}

TEST(AFiltered, OrientationMatchesDefinition) {
  // Oracle: entry (i,j) of unvec(A) is -sum_k Delta_k Y^(i) Y_k^(j), 0-based.
  Rng rng(2);
  Matrix y(3, 6);
  for (Index i = 0; i < y.size(); ++i) y(i) = rng.gauss();
  const auto path = path_from({0, 1, 2, 3, 4, 5}, y);
  const auto a = a_filtered(path, FilterConfig::unfiltered(3)).a;
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 5; ++k) acc -= (y(i, k + 1) - y(i, k)) * y(j, k);
      EXPECT_NEAR(a(3 * j + i), acc, 1e-13);
    }
  }
}

TEST(AFiltered, ApproachesOracleForBrownianPaths) {
  const Index d = 3;
  const auto q = q_from_theta({-1.0, 3.0}, row_normalize(make_topology(TopologyKind::Polymer, d)));
  const double horizon = 200.0;
  std::vector<double> rel;
  for (const double delta : {1.0 / 12, 1.0 / 48, 1.0 / 192}) {
    double acc = 0.0;
    for (std::uint64_t p = 0; p < 10; ++p) {
      Rng rng = Rng::stream(3, p);
      const auto n = static_cast<Index>(std::llround(horizon / delta)) + 1;
      const auto path = simulate_path(q, brownian(d, 0.3), ObservationGrid::uniform(n, delta), 1, rng);
      // beta < 1/2 lets the threshold outgrow the Brownian increment scale.
      const Vector at = a_filtered(path, FilterConfig::uniform(d, 0.25)).a;
      const Vector ab = a_unfiltered_oracle(path);
      acc += (at - ab).norm() / ab.norm();
    }
    rel.push_back(acc / 10);
  }
  EXPECT_GE(rel[0], rel[1]);
  EXPECT_GE(rel[1], rel[2]);
  EXPECT_LT(rel[2], 1e-12);
}

TEST(AOracle, ZeroNoiseEulerIsRiemannDrift) {
  const Index d = 3;
  const auto q = q_from_theta({-1.549, 5.525}, row_normalize(make_topology(TopologyKind::Polymer, d)));
  Rng rng(4);
  const auto path = simulate_path(q, LevySpec{Matrix::Zero(d, d), std::monostate{}, 1.0},
                                  ObservationGrid::uniform(100, 0.01),
                                  SimulationOptions{1, Scheme::Euler, Vector::LinSpaced(d, 1.0, -2.0)}, rng);
  const Matrix drift = q.q * k_matrix_unchecked(path);
  EXPECT_LE((unvec(a_unfiltered_oracle(path), d) - drift).norm(), 1e-12 * drift.norm());
}

TEST(AOracle, JumpFreeEqualsUnfiltered) {
  const Index d = 2;
  const auto q = q_from_theta({0.5, 2.0}, row_normalize(make_topology(TopologyKind::Complete, d)));
  Rng rng(5);
  const auto path = simulate_path(q, brownian(d, 1.0), ObservationGrid::uniform(500, 0.1), 4, rng);
  EXPECT_TRUE(a_filtered(path, FilterConfig::unfiltered(d)).a.isApprox(a_unfiltered_oracle(path), 1e-12));
}

TEST(AOracle, MissingOracle) {
  Matrix y(1, 3);
  y << 1, 2, 3;
  EXPECT_EQ(code_of([&] { a_unfiltered_oracle(path_from({0, 1, 2}, y)); }), ErrorCode::MissingOracle);
}

TEST(PsiMle, ConsistentEntrywise) {
  const Index d = 10;
  const auto an = row_normalize(make_topology(TopologyKind::Polymer, d));
  const auto q = q_from_theta({-1.549, 5.525}, an);
  Rng rng(6);
  // The Euler scheme makes the discretised likelihood exact, so only
  // sampling error remains.
  const auto path = simulate_path(q, brownian(d, 0.01), ObservationGrid::uniform(12500, 1.0 / 12),
                                  SimulationOptions{1, Scheme::Euler, std::nullopt}, rng);
  EstimatorOptions opts{FilterConfig::uniform(d), std::nullopt, 0.0, Quadrature::LeftPoint};
  const auto r = psi_mle(path, opts);
  const double t = path.grid.horizon();
  int outside = 0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      const double se = std::sqrt(r.psi_acov->left(j, j) * r.psi_acov->right(i, i) / t);
      outside += std::abs(r.matrix(i, j) - q.q(i, j)) > 3.0 * se ? 1 : 0;
    }
  }
  EXPECT_EQ(outside, 0);
}

TEST(PsiMle, ZeroNoiseRecoversQ) {
  const Index d = 3;
  // Slow, well separated modes keep K well conditioned along a single trajectory.
  const auto q = q_from_theta({0.6, 1.0}, row_normalize(make_topology(TopologyKind::Polymer, d)));
  const double delta = 0.05;
  Rng rng(7);
  const auto path = simulate_path(q, LevySpec{Matrix::Zero(d, d), std::monostate{}, 1.0},
                                  ObservationGrid::uniform(80, delta),
                                  SimulationOptions{4, Scheme::Exact, Vector{{1.0, 0.3, -2.0}}}, rng);
  EstimatorOptions opts{FilterConfig::uniform(d), Matrix(Matrix::Identity(d, d)), 0.0, Quadrature::Trapezoid};
  const Matrix qhat = psi_mle(path, opts).matrix;
  // Exact linear recursion: Q-hat = (I - exp(-Q delta)) / delta.
  const Matrix expected = (Matrix::Identity(d, d) - (-q.q * delta).exp()) / delta;
  EXPECT_LE((qhat - expected).norm(), 1e-6 * expected.norm());
  EXPECT_LE((qhat - q.q).norm(), delta * (q.q * q.q).norm());
}

TEST(PsiMle, ScaleEquivarianceWithRescaledThresholds) {
  const Index d = 3;
  const auto q = q_from_theta({-1.0, 3.0}, row_normalize(make_topology(TopologyKind::Polymer, d)));
  LevySpec spec{0.05 * Matrix::Identity(d, d), CompoundPoisson{1.0, GaussianJumps{Matrix::Identity(d, d)}}, 1.0};
  Rng rng(8);
  const auto path = simulate_path(q, spec, ObservationGrid::uniform(2000, 1.0 / 12), 2, rng);
  const double c = 7.5;
  SampledPath scaled = path;
  scaled.values *= c;
  const Vector v = FilterConfig::uniform(d).threshold_values(path.grid.mesh());
  const FilterConfig f{Vector::Constant(d, 0.4999), v};
  const FilterConfig fc{Vector::Constant(d, 0.4999), Vector(c * v)};
  EstimatorOptions o{f, Matrix(Matrix::Identity(d, d)), 0.0, Quadrature::Trapezoid};
  EstimatorOptions oc{fc, Matrix(Matrix::Identity(d, d)), 0.0, Quadrature::Trapezoid};
  EXPECT_TRUE(psi_mle(path, o).matrix.isApprox(psi_mle(scaled, oc).matrix, 1e-10));
  // Without rescaling the thresholds the estimate changes.
  EXPECT_FALSE(psi_mle(path, o).matrix.isApprox(psi_mle(scaled, o).matrix, 1e-6));
}

TEST(ThetaMle, ContractionRecoversTheta) {
  const ThetaParams t{-1.549, 5.525};
  for (const auto kind : {TopologyKind::Complete, TopologyKind::Polymer}) {
    const auto an = row_normalize(make_topology(kind, 6));
    const Vector th = theta_from_q(q_from_theta(t, an).q, an);
    EXPECT_NEAR(th(0), t.theta1, 1e-14);
    EXPECT_NEAR(th(1), t.theta2, 1e-14);
  }
  const auto lattice = row_normalize(make_topology(TopologyKind::Lattice, 10));
  EXPECT_NEAR(theta_from_q(q_from_theta(t, lattice).q, lattice)(0), t.theta1, 1e-14);
}

TEST(ThetaMle, EmptyGraphForcesZeroNetworkEffect) {
  const Index d = 3;
  const auto an = row_normalize(AdjacencyMatrix::empty(d));
  Rng rng(9);
  const auto path = simulate_path(DynamicsMatrix{2.0 * Matrix::Identity(d, d)}, brownian(d, 0.1),
                                  ObservationGrid::uniform(500, 1.0 / 12), 2, rng);
  EXPECT_EQ(theta_mle(path, an, FilterConfig::uniform(d)).point(0), 0.0);
}

TEST(ThetaMle, CoherentWithPsiAndCovarianceIsPsd) {
  const Index d = 5;
  const auto an = row_normalize(make_topology(TopologyKind::Complete, d));
  const auto q = q_from_theta({1.0, 2.5}, an);
  Rng rng(10);
  const auto path = simulate_path(q, brownian(d, 0.05), ObservationGrid::uniform(3000, 1.0 / 12), 2, rng);
  const auto psi = psi_mle(path, FilterConfig::uniform(d));
  const auto th = theta_mle(path, an, FilterConfig::uniform(d));
  EXPECT_TRUE(th.point.isApprox(theta_from_q(psi.matrix, an), 1e-13));
  EXPECT_TRUE(th.acov.isApprox(th.acov.transpose(), 0.0));
  EXPECT_TRUE(is_psd(th.acov));
  EXPECT_TRUE(th.standard_errors().allFinite());
  EXPECT_EQ(th.kind, EstimateKind::Theta);
  EXPECT_EQ(th.diagnostics.pass_fraction.size(), d);
}

TEST(ThetaMle, AcovMatchesDenseFormula) {
  // Oracle: C Gamma^{-1} (x) Sigma C^T with the dense 2 x d^2 contraction C.
  const Index d = 4;
  const auto an = row_normalize(make_topology(TopologyKind::Polymer, d));
  Rng rng(11);
  Matrix sigma(d, d);
  for (Index i = 0; i < sigma.size(); ++i) sigma(i) = rng.gauss();
  sigma = sigma * sigma.transpose();
  Matrix gi(d, d);
  for (Index i = 0; i < gi.size(); ++i) gi(i) = rng.gauss();
  gi = gi * gi.transpose() + Matrix::Identity(d, d);
  Matrix c(2, d * d);
  c.row(0) = rho(an) * vec(an.adjacency.matrix()).transpose() / static_cast<double>(d);
  c.row(1) = vec(Matrix::Identity(d, d)).transpose() / static_cast<double>(d);
  const Matrix dense = c * KroneckerCov{gi, sigma}.dense() * c.transpose();
  EXPECT_TRUE(theta_acov(an, sigma, gi).isApprox(dense, 1e-12));
}

TEST(LeastSquares, ZeroNoiseIsExactTransition) {
  const Index d = 3;
  const auto q = q_from_theta({0.6, 1.0}, row_normalize(make_topology(TopologyKind::Polymer, d)));
  Rng rng(12);
  const auto path = simulate_path(q, LevySpec{Matrix::Zero(d, d), std::monostate{}, 1.0},
                                  ObservationGrid::uniform(80, 0.05),
                                  SimulationOptions{1, Scheme::Exact, Vector{{1.0, 0.3, -2.0}}}, rng);
  EXPECT_TRUE(ls_estimator(path).matrix.isApprox((-q.q * 0.05).exp(), 1e-8));
}

TEST(LeastSquares, WhiteNoiseGivesZero) {
  Rng rng(13);
  Matrix y(2, 20000);
  for (Index i = 0; i < y.size(); ++i) y(i) = rng.gauss();
  std::vector<double> t(20000);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = 0.1 * static_cast<double>(k);
  const auto r = ls_estimator(path_from(t, y));
  EXPECT_LT(r.matrix.cwiseAbs().maxCoeff(), 4.0 / std::sqrt(20000.0));
}

TEST(LeastSquares, NonUniformGrid) {
  Matrix y(1, 4);
  y << 1, 2, 3, 4;
  EXPECT_EQ(code_of([&] { ls_estimator(path_from({0, 1, 2.5, 3}, y)); }), ErrorCode::NonUniformGrid);
}

TEST(Rem, IdentityAndScalar) {
  const auto q = q_from_theta({-1.549, 5.525}, row_normalize(make_topology(TopologyKind::Polymer, 4)));
  EXPECT_EQ(rem(q.q, q, 1.0 / 12), 0.0);
  const DynamicsMatrix one{Matrix::Identity(1, 1)};
  const double expected = std::abs(std::exp(-2.0) - std::exp(-1.0)) / std::exp(-1.0);
  EXPECT_NEAR(rem(2.0 * Matrix::Identity(1, 1), one, 1.0), expected, 1e-14);
  EXPECT_NEAR(expected, 0.6321, 1e-4);
}

TEST(FilterConfig, Validation) {
  EXPECT_THROW(FilterConfig::uniform(2, 0.5).validate(2), Error);
  EXPECT_THROW(FilterConfig::uniform(2, 0.0).validate(2), Error);
  EXPECT_THROW(FilterConfig::uniform(3).validate(2), Error);
  EXPECT_NO_THROW(FilterConfig::uniform(2, 0.25).validate(2));
  EXPECT_NEAR(FilterConfig::uniform(1, 0.25).threshold_values(1.0 / 16)(0), 0.5, 1e-15);
}
