#pragma once

#include "grou/core.hpp"
#include "grou/estimators.hpp"
#include "grou/lasso.hpp"
#include "grou/levy.hpp"
#include "grou/noise.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace grou {

using Json = nlohmann::json;

/// Matrices are nested row-major arrays.
inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorCode::ConfigError, what + ": expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::ConfigError, what + ": non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Accepts a nested array, a scalar s (s * I) or {"scale": s, "corr": r}
/// (s on the diagonal, s * r off it).
inline Matrix matrix_from_json(const Json& j, Index d, const std::string& what) {
  if (j.is_number()) return j.get<double>() * Matrix::Identity(d, d);
  if (j.is_object()) {
    const double s = j.value("scale", 1.0);
    const double r = j.value("corr", 0.0);
    Matrix m = Matrix::Constant(d, d, s * r);
    m.diagonal().setConstant(s);
    return m;
  }
  if (!j.is_array() || static_cast<Index>(j.size()) != d) {
    throw Error(ErrorCode::ConfigError, what + ": expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
  }
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != d) {
      throw Error(ErrorCode::ConfigError, what + ": row " + std::to_string(i) + " has wrong length");
    }
    for (Index c = 0; c < d; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Json to_json(const GhypParams& p) {
  return Json{{"gamma", to_json(p.gamma)}, {"scatter", to_json(p.scatter)}, {"shape", p.shape}};
}

inline Json to_json(const EstimateReport& r) {
  Json j{{"kind", to_string(r.kind)},
         {"point", to_json(r.point)},
         {"matrix", to_json(r.matrix)},
         {"diagnostics",
          {{"T_N", r.diagnostics.horizon},
           {"mesh", r.diagnostics.mesh},
           {"observations", r.diagnostics.observations},
           {"beta", to_json(r.diagnostics.beta)},
           {"filter_pass_fraction", to_json(r.diagnostics.pass_fraction)}}}};
  if (r.acov.size() > 0) {
    j["acov"] = to_json(r.acov);
    j["standard_errors"] = to_json(r.standard_errors());
  }
  if (r.psi_acov) j["acov_kronecker"] = {{"gamma_inv", to_json(r.psi_acov->left)}, {"sigma", to_json(r.psi_acov->right)}};
  if (r.sigma_hat.size() > 0) j["sigma_hat"] = to_json(r.sigma_hat);
  return j;
}

inline Json to_json(const NoiseDecomposition& n) {
  Json j{{"rv_total", to_json(n.rv_total)},
         {"rv_continuous", to_json(n.rv_continuous)},
         {"rv_jump", to_json(n.rv_jump)},
         {"sigma_hat", to_json(n.sigma_hat)},
         {"lambda_hat", n.lambda_hat},
         {"jump_count", n.jump_count},
         {"no_jumps", n.no_jumps},
         {"eta", n.eta},
         {"beta", n.beta}};
  j["sigma_jump_hat"] = n.no_jumps ? Json(nullptr) : to_json(n.sigma_jump_hat);
  return j;
}

inline Json to_json(const GhypFit& f) {
  return Json{{"params", to_json(f.params)},
              {"mean_log_likelihood", f.log_likelihood},
              {"iterations", f.iterations},
              {"near_gaussian", f.near_gaussian}};
}

inline Json to_json(const SparseFit& f) {
  Json support = Json::array();
  for (const auto& [i, j] : f.support) support.push_back({i, j});
  Json path = Json::array();
  for (const auto& p : f.lasso_path) path.push_back({{"lambda", p.lambda}, {"support_size", p.support_size}, {"bic", p.bic}});
  return Json{{"q_hat", to_json(f.q_hat)},     {"support", support},         {"lambda", f.lambda},
              {"iterations", f.iterations}, {"kkt_residual", f.kkt_residual}, {"lasso_path", path}};
}

}  // namespace grou
