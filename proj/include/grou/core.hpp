#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace grou {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  InvalidTheta,
  InvalidPsi,
  BadDimension,
  ParseError,
  NotPSD,
  InvalidDynamics,
  SingularK,
  MissingOracle,
  NonUniformGrid,
  NoConvergence,
  DegenerateData,
  TooShort,
  MissingGraph,
  ConfigError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidTheta: return "InvalidTheta";
    case ErrorCode::InvalidPsi: return "InvalidPsi";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::InvalidDynamics: return "InvalidDynamics";
    case ErrorCode::SingularK: return "SingularK";
    case ErrorCode::MissingOracle: return "MissingOracle";
    case ErrorCode::NonUniformGrid: return "NonUniformGrid";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MissingGraph: return "MissingGraph";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Numerical and input failures raised by the library. The code lets callers
/// (the CLI in particular) map failures onto exit statuses without string
/// matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures caused by user input rather than by the numerics.
  bool is_input_error() const noexcept {
    return code_ == ErrorCode::ConfigError || code_ == ErrorCode::ParseError ||
           code_ == ErrorCode::BadDimension || code_ == ErrorCode::MissingGraph ||
           code_ == ErrorCode::InvalidTheta || code_ == ErrorCode::InvalidPsi;
  }

 private:
  ErrorCode code_;
};

// Column-stacking vec/unvec: matrix entry (i, j) lives at index d*j + i.
inline Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix unvec(const Vector& v, Index rows) {
  if (rows <= 0 || v.size() % rows != 0) {
    throw Error(ErrorCode::BadDimension, "unvec: length " + std::to_string(v.size()) +
                                             " not divisible by " + std::to_string(rows));
  }
  return Eigen::Map<const Matrix>(v.data(), rows, v.size() / rows);
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace grou
