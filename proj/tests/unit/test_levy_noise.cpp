#include "grou/levy.hpp"
#include "grou/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace grou;

namespace {

constexpr int kDraws = 100000;

Matrix sample_cov(const Matrix& x) {
  const Vector m = x.rowwise().mean();
  const Matrix c = x.colwise() - m;
  return c * c.transpose() / static_cast<double>(x.cols() - 1);
}

std::vector<double> to_vec(const Eigen::RowVectorXd& r) { return std::vector<double>(r.data(), r.data() + r.size()); }

}  // namespace

TEST(Brownian, ZeroCovarianceGivesZero) {
  Rng rng(1);
  EXPECT_EQ(sample_brownian(Matrix::Zero(3, 3), 0.5, rng), Vector::Zero(3));
}

TEST(Brownian, IdentityCovariance) {
  Rng rng(2);
  const BrownianSampler s(Matrix::Identity(3, 3));
  Matrix x(3, kDraws);
  for (int k = 0; k < kDraws; ++k) x.col(k) = s.draw(1.0, rng);
  const Matrix c = sample_cov(x);
  // Var of a sample variance is 2/n, of a sample covariance 1/n.
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const double se = std::sqrt((i == j ? 2.0 : 1.0) / kDraws);
      EXPECT_NEAR(c(i, j), i == j ? 1.0 : 0.0, 3.0 * se);
    }
  }
}

TEST(Brownian, Correlation) {
  Rng rng(3);
  Matrix sigma(2, 2);
  sigma << 1, 0.9, 0.9, 1;
  const BrownianSampler s(sigma);
  Matrix x(2, kDraws);
  for (int k = 0; k < kDraws; ++k) x.col(k) = s.draw(0.25, rng);
  const Matrix c = sample_cov(x);
  const double r = c(0, 1) / std::sqrt(c(0, 0) * c(1, 1));
  EXPECT_NEAR(r, 0.9, 3.0 * (1 - 0.81) / std::sqrt(kDraws));
  EXPECT_NEAR(c(0, 0), 0.25, 3.0 * 0.25 * std::sqrt(2.0 / kDraws));
}

TEST(Brownian, NotPsd) {
  Rng rng(3);
  Matrix sigma(2, 2);
  sigma << 1, 2, 2, 1;
  try {
    sample_brownian(sigma, 1.0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPSD);
  }
}

TEST(InverseGaussian, DegenerateShape) {
  Rng rng(4);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(sample_ig(1.0, std::numeric_limits<double>::infinity(), rng), 1.0);
  // Variance mean^3 / shape shrinks with the shape.
  std::vector<double> x;
  for (int k = 0; k < 10000; ++k) x.push_back(sample_ig(1.0, 1e8, rng));
  EXPECT_LT(stats::sd(x), 1e-3);
}

TEST(InverseGaussian, MeanAndVariance) {
  Rng rng(5);
  std::vector<double> x;
  for (int k = 0; k < kDraws; ++k) x.push_back(sample_ig(1.0, 1.0, rng));
  // IG(mu, lambda): var mu^3/lambda, fourth central moment 15 mu^7/lambda^3 + 3 mu^6/lambda^2.
  const double var = 1.0;
  const double m4 = 15.0 + 3.0;
  EXPECT_NEAR(stats::mean(x), 1.0, 4.0 * std::sqrt(var / kDraws));
  EXPECT_NEAR(stats::sd(x) * stats::sd(x), var, 4.0 * std::sqrt((m4 - var * var) / kDraws));
}

TEST(InverseGaussian, StrictlyPositive) {
  Rng rng(6);
  for (int k = 0; k < kDraws; ++k) EXPECT_GT(sample_ig(2.0, 0.5, rng), 0.0);
}

TEST(Ghyp, DegenerateMixingIsGaussian) {
  GhypParams p{Vector::Zero(3), Matrix::Identity(3, 3), std::numeric_limits<double>::infinity()};
  Rng a(7);
  Rng b(7);
  for (int k = 0; k < 50; ++k) {
    EXPECT_TRUE(sample_ghyp(p, 0.3, a).isApprox(sample_brownian(Matrix::Identity(3, 3), 0.3, b), 1e-15));
  }
}

TEST(Ghyp, SymmetricHasZeroSkewness) {
  GhypParams p{Vector::Zero(2), Matrix::Identity(2, 2), 2.0};
  const GhypSampler s(p);
  Rng rng(8);
  Matrix x(2, kDraws);
  for (int k = 0; k < kDraws; ++k) x.col(k) = s.draw(1.0, rng);
  for (Index i = 0; i < 2; ++i) {
    const auto v = to_vec(x.row(i));
    // Standard error of the skewness estimated from the sample's own moments.
    const double m = stats::mean(v);
    const double sdv = stats::sd(v);
    double m6 = 0.0;
    for (const double y : v) m6 += std::pow((y - m) / sdv, 6);
    m6 /= kDraws;
    EXPECT_NEAR(stats::skewness(v), 0.0, 4.0 * std::sqrt(m6 / kDraws));
  }
}

TEST(Ghyp, MeanIsDtGamma) {
  const Vector gamma = (Vector(2) << 0.8, -1.5).finished();
  GhypParams p{gamma, Matrix::Identity(2, 2), 3.0};
  const GhypSampler s(p);
  Rng rng(9);
  const double dt = 0.5;
  Matrix x(2, kDraws);
  for (int k = 0; k < kDraws; ++k) x.col(k) = s.draw(dt, rng);
  for (Index i = 0; i < 2; ++i) {
    const auto v = to_vec(x.row(i));
    EXPECT_NEAR(stats::mean(v), dt * gamma(i), 4.0 * stats::sd(v) / std::sqrt(kDraws));
  }
}

TEST(Ghyp, IncrementsAggregateLikeALevyProcess) {
  // Sum of four dt/4 increments has the law of one dt increment: compare the
  // variance gamma^2 dt / shape + dt * scatter for the unit-time law.
  GhypParams p{(Vector(1) << 1.0).finished(), Matrix::Identity(1, 1), 2.0};
  const GhypSampler s(p);
  Rng rng(10);
  std::vector<double> whole;
  std::vector<double> parts;
  for (int k = 0; k < kDraws; ++k) {
    whole.push_back(s.draw(1.0, rng)(0));
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) acc += s.draw(0.25, rng)(0);
    parts.push_back(acc);
  }
  const double var = 1.0 / 2.0 + 1.0;
  EXPECT_NEAR(stats::sd(whole) * stats::sd(whole), var, 0.05 * var);
  EXPECT_NEAR(stats::sd(parts) * stats::sd(parts), var, 0.05 * var);
  EXPECT_GT(stats::ks_two_sample(whole, parts).p_value, 0.001);
}

TEST(Increments, BrownianUnitGridIsStandardNormal) {
  LevySpec spec{Matrix::Identity(2, 2), std::monostate{}, 1.0};
  Rng rng(11);
  const auto inc = generate_increments(spec, ObservationGrid::uniform(20001, 1.0), rng);
  EXPECT_EQ(inc.values.cols(), 20000);
  EXPECT_EQ(inc.jumps, Matrix::Zero(2, 20000));
  for (Index i = 0; i < 2; ++i) {
    const auto ks = stats::ks_normal(to_vec(inc.values.row(i)));
    EXPECT_GT(ks.p_value, 0.001);
  }
}

TEST(Increments, PoissonJumpCount) {
  LevySpec spec{Matrix::Identity(1, 1), CompoundPoisson{2.0, GaussianJumps{Matrix::Identity(1, 1)}}, 1.0};
  Rng rng(12);
  const auto inc = generate_increments(spec, ObservationGrid::uniform(1201, 1.0 / 12.0), rng);
  EXPECT_NEAR(static_cast<double>(inc.jump_count), 200.0, 3.0 * std::sqrt(200.0));
}

TEST(Increments, ZeroMultiplier) {
  LevySpec spec{Matrix::Identity(3, 3), CompoundPoisson{5.0, GaussianJumps{Matrix::Identity(3, 3)}}, 0.0};
  Rng rng(13);
  const auto inc = generate_increments(spec, ObservationGrid::uniform(100, 0.1), rng);
  EXPECT_EQ(inc.values, Matrix::Zero(3, 99));
}

TEST(Increments, DeterministicAndSplitSumsExactly) {
  GhypParams g{Vector::Zero(3), 0.5 * Matrix::Identity(3, 3), 4.0};
  const std::vector<LevySpec> specs{
      {0.2 * Matrix::Identity(3, 3), CompoundPoisson{1.0, GaussianJumps{Matrix::Identity(3, 3)}}, 1.5},
      {0.2 * Matrix::Identity(3, 3), CompoundPoisson{1.0, g, JumpClock::Shared}, 1.0},
      {0.2 * Matrix::Identity(3, 3), GhypMotion{g}, 1.0}};
  for (const auto& spec : specs) {
    Rng a = Rng::stream(5, 1);
    Rng b = Rng::stream(5, 1);
    const auto grid = ObservationGrid::uniform(500, 1.0 / 12.0);
    const auto x = generate_increments(spec, grid, a);
    const auto y = generate_increments(spec, grid, b);
    EXPECT_EQ(x.values, y.values);
    EXPECT_EQ(x.values, x.continuous + x.jumps);
  }
}

TEST(Increments, ZeroDrift) {
  GhypParams g{Vector::Zero(2), Matrix::Identity(2, 2), 1.0};
  LevySpec spec{Matrix::Identity(2, 2), GhypMotion{g}, 1.0};
  Rng rng(14);
  const double t = 5000.0;
  const auto inc = generate_increments(spec, ObservationGrid::uniform(60001, t / 60000.0), rng);
  // Unit-time variance: Sigma + scatter (E W = 1).
  for (Index i = 0; i < 2; ++i) EXPECT_NEAR(inc.values.row(i).sum() / t, 0.0, 4.0 * std::sqrt(2.0 / t));
}

TEST(Increments, VanishingIntensityMatchesBrownian) {
  LevySpec cp{Matrix::Identity(1, 1), CompoundPoisson{1e-12, GaussianJumps{Matrix::Identity(1, 1)}}, 1.0};
  LevySpec bm{Matrix::Identity(1, 1), std::monostate{}, 1.0};
  Rng a(15);
  Rng b(16);
  const auto grid = ObservationGrid::uniform(5001, 0.1);
  const auto x = generate_increments(cp, grid, a);
  const auto y = generate_increments(bm, grid, b);
  EXPECT_EQ(x.jump_count, 0);
  EXPECT_GT(stats::ks_two_sample(to_vec(x.values.row(0)), to_vec(y.values.row(0))).p_value, 0.01);
}

TEST(Increments, SharedClockJumpsTogether) {
  LevySpec spec{Matrix::Zero(3, 3), CompoundPoisson{2.0, GaussianJumps{Matrix::Identity(3, 3)}, JumpClock::Shared}, 1.0};
  Rng rng(17);
  const auto inc = generate_increments(spec, ObservationGrid::uniform(1000, 0.1), rng);
  for (Index k = 0; k < inc.jumps.cols(); ++k) {
    const bool any = inc.jumps.col(k).cwiseAbs().maxCoeff() > 0.0;
    const bool all = inc.jumps.col(k).cwiseAbs().minCoeff() > 0.0;
    EXPECT_EQ(any, all);
  }
  EXPECT_GT(inc.jump_count, 0);
}

TEST(Increments, MedianClockGivesEqualCounts) {
  const Index d = 5;
  LevySpec spec{Matrix::Zero(d, d), CompoundPoisson{3.0, GaussianJumps{Matrix::Identity(d, d)}, JumpClock::MedianCount},
                1.0};
  Rng rng(18);
  const auto inc = generate_increments(spec, ObservationGrid::uniform(2000, 0.05), rng);
  EXPECT_EQ(inc.jump_count % d, 0);
  Index nonzero0 = 0;
  for (Index k = 0; k < inc.jumps.cols(); ++k) nonzero0 += inc.jumps(0, k) != 0.0 ? 1 : 0;
  EXPECT_LE(nonzero0, inc.jump_count / d);
  EXPECT_NEAR(static_cast<double>(inc.jump_count / d), 3.0 * 99.95, 4.0 * std::sqrt(3.0 * 99.95));
}

TEST(LevySpec, Validation) {
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  EXPECT_THROW((LevySpec{bad, std::monostate{}, 1.0}.validate()), Error);
  EXPECT_THROW((LevySpec{Matrix::Identity(2, 2), std::monostate{}, -1.0}.validate()), Error);
  EXPECT_THROW((LevySpec{Matrix::Identity(2, 2), CompoundPoisson{-1.0, GaussianJumps{Matrix::Identity(2, 2)}}, 1.0}
                    .validate()),
               Error);
  EXPECT_THROW((GhypParams{Vector::Zero(2), Matrix::Identity(2, 2), 0.0}.validate()), Error);
}
