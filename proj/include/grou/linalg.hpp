#pragma once

#include "grou/core.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>

namespace grou {

namespace detail {

inline void pade_odd_even(const Matrix& a, const double* b, int degree, Matrix& u, Matrix& v) {
  const Index n = a.rows();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  if (degree == 13) {
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    const Matrix inner_u = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
    u = a * (inner_u + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 +
        b[0] * id;
    return;
  }
  // Low degrees: accumulate even powers of a directly.
  Matrix power = id;
  Matrix odd = b[1] * id;
  v = b[0] * id;
  for (int k = 2; k <= degree; k += 2) {
    power = power * a2;
    v += b[k] * power;
    odd += b[k + 1] * power;
  }
  u = a * odd;
}

}  // namespace detail

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant
/// of degree 3, 5, 7, 9 or 13 picked from the 1-norm (Higham, 2005).
inline Matrix matrix_exp(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::BadDimension, "matrix_exp needs a square matrix");
  }
  if (!m.allFinite()) {
    throw Error(ErrorCode::InvalidDynamics, "matrix_exp: non-finite entries");
  }
  const Index n = m.rows();
  if (n == 0) return m;

  static constexpr std::array<double, 4> b3{120., 60., 12., 1.};
  static constexpr std::array<double, 6> b5{30240., 15120., 3360., 420., 30., 1.};
  static constexpr std::array<double, 8> b7{17297280., 8648640., 1995840., 277200.,
                                            25200.,    1512.,    56.,      1.};
  static constexpr std::array<double, 10> b9{17643225600., 8821612800., 2075673600.,
                                             302702400.,   30270240.,   2162160.,
                                             110880.,      3960.,       90.,
                                             1.};
  static constexpr std::array<double, 14> b13{64764752532480000.,
                                              32382376266240000.,
                                              7771770303897600.,
                                              1187353796428800.,
                                              129060195264000.,
                                              10559470521600.,
                                              670442572800.,
                                              33522128640.,
                                              1323241920.,
                                              40840800.,
                                              960960.,
                                              16380.,
                                              182.,
                                              1.};
  static constexpr std::array<double, 4> theta{1.495585217958292e-2, 2.539398330063230e-1,
                                               9.504178996162932e-1, 2.097847961257068e0};
  constexpr double theta13 = 5.371920351148152e0;

  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  Matrix u;
  Matrix v;
  int squarings = 0;
  if (norm1 <= theta[0]) {
    detail::pade_odd_even(m, b3.data(), 3, u, v);
  } else if (norm1 <= theta[1]) {
    detail::pade_odd_even(m, b5.data(), 5, u, v);
  } else if (norm1 <= theta[2]) {
    detail::pade_odd_even(m, b7.data(), 7, u, v);
  } else if (norm1 <= theta[3]) {
    detail::pade_odd_even(m, b9.data(), 9, u, v);
  } else {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
    const Matrix scaled = m / std::ldexp(1.0, squarings);
    detail::pade_odd_even(scaled, b13.data(), 13, u, v);
  }
  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int s = 0; s < squarings; ++s) r = r * r;
  return r;
}

/// Largest modulus among the eigenvalues of a general square matrix.
inline double spectral_radius(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(m, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Eigenvalues of the symmetric part, ascending.
inline Vector symmetric_part_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m), Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

/// Nearest PSD matrix in Frobenius norm: symmetrize, then clip negative
/// eigenvalues at zero.
inline Matrix psd_project(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m));
  const Vector clipped = solver.eigenvalues().cwiseMax(0.0);
  return symmetrize(solver.eigenvectors() * clipped.asDiagonal() *
                    solver.eigenvectors().transpose());
}

/// Returns F with F*F^T = sigma. Uses the symmetric eigen-decomposition so that
/// singular PSD matrices are accepted. Throws NotPSD when an eigenvalue is
/// negative beyond a relative tolerance.
inline Matrix psd_factor(const Matrix& sigma, double rel_tol = 1e-10) {
  if (sigma.rows() != sigma.cols()) {
    throw Error(ErrorCode::BadDimension, "covariance must be square");
  }
  if (sigma.rows() == 0) return sigma;
  if (!sigma.allFinite()) throw Error(ErrorCode::NotPSD, "non-finite covariance");
  const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(sigma.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if (asym > 1e-9 * scale) throw Error(ErrorCode::NotPSD, "covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(sigma));
  const Vector ev = solver.eigenvalues();
  if (ev.minCoeff() < -rel_tol * std::max(ev.cwiseAbs().maxCoeff(), 1e-300)) {
    throw Error(ErrorCode::NotPSD, "covariance has eigenvalue " + std::to_string(ev.minCoeff()));
  }
  return solver.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// 2-norm condition number of a symmetric matrix (infinity when singular or
/// indefinite).
inline double symmetric_condition(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m), Eigen::EigenvaluesOnly);
  const Vector ev = solver.eigenvalues();
  if (ev.size() == 0) return 1.0;
  if (ev.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / ev.minCoeff();
}

inline bool is_psd(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  if (m.rows() == 0) return true;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    return false;
  }
  const Vector ev = symmetric_part_eigenvalues(m);
  return ev.minCoeff() >= -rel_tol * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace grou
