#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cyclecert/errors.hpp"
#include "cyclecert/expression.hpp"

namespace cyclecert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Params = std::map<std::string, double>;

enum class JacobianMode { kAnalytic, kFiniteDifference };

inline constexpr double kDefaultFdStep = 1e-6;

/// Autonomous system x' = f(x) on R^n. Immutable once built; copies share
/// the (stateless) evaluation callables, so concurrent evaluation is safe.
class VectorField {
 public:
  using RhsFn = std::function<void(const Vector&, Vector&)>;
  using JacobianFn = std::function<void(const Vector&, Matrix&)>;

  VectorField(std::string name, int dim, Params params, RhsFn rhs,
              JacobianFn jacobian = {}, double fd_step = kDefaultFdStep)
      : name_(std::move(name)),
        dim_(dim),
        params_(std::move(params)),
        rhs_(std::move(rhs)),
        jacobian_(std::move(jacobian)),
        fd_step_(fd_step) {
    if (dim_ <= 0) throw Error(ErrorKind::kInput, "vector field dimension must be positive");
    if (!rhs_) throw Error(ErrorKind::kInput, "vector field needs a right-hand side");
    if (!(fd_step_ > 0.0)) throw Error(ErrorKind::kInput, "finite-difference step must be positive");
  }

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  const Params& params() const { return params_; }
  double fd_step() const { return fd_step_; }
  JacobianMode jacobian_mode() const {
    return jacobian_ ? JacobianMode::kAnalytic : JacobianMode::kFiniteDifference;
  }

  Vector eval_f(const Vector& x) const {
    Vector out(dim_);
    eval_f(x, out);
    return out;
  }

  /// Allocation-free variant for inner loops; `out` must have size dim().
  void eval_f(const Vector& x, Vector& out) const {
    check_input(x);
    rhs_(x, out);
    for (int k = 0; k < dim_; ++k) {
      if (!std::isfinite(out[k]))
        throw IndexedError(ErrorKind::kNumeric, name_ + ": non-finite f component",
                           static_cast<std::size_t>(k));
    }
  }

  Matrix eval_jacobian(const Vector& x) const {
    if (!jacobian_) return finite_difference_jacobian(x);
    check_input(x);
    Matrix out(dim_, dim_);
    jacobian_(x, out);
    check_matrix(out);
    return out;
  }

  /// Central differences with step fd_step(), column by column.
  Matrix finite_difference_jacobian(const Vector& x) const {
    check_input(x);
    Matrix out(dim_, dim_);
    Vector xp = x, xm = x, fp(dim_), fm(dim_);
    for (int j = 0; j < dim_; ++j) {
      xp[j] = x[j] + fd_step_;
      xm[j] = x[j] - fd_step_;
      eval_f(xp, fp);
      eval_f(xm, fm);
      out.col(j) = (fp - fm) / (2.0 * fd_step_);
      xp[j] = x[j];
      xm[j] = x[j];
    }
    return out;
  }

  /// Same field with the analytic Jacobian dropped.
  VectorField with_finite_differences(double fd_step = kDefaultFdStep) const {
    return VectorField(name_, dim_, params_, rhs_, {}, fd_step);
  }

 private:
  void check_input(const Vector& x) const {
    if (x.size() != dim_)
      throw Error(ErrorKind::kInput, name_ + ": expected a point of dimension " +
                                         std::to_string(dim_) + ", got " +
                                         std::to_string(x.size()));
    for (int k = 0; k < dim_; ++k) {
      if (!std::isfinite(x[k]))
        throw IndexedError(ErrorKind::kInput, name_ + ": non-finite state component",
                           static_cast<std::size_t>(k));
    }
  }

  void check_matrix(const Matrix& m) const {
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      if (!std::isfinite(m.data()[k]))
        throw IndexedError(ErrorKind::kNumeric, name_ + ": non-finite Jacobian entry",
                           static_cast<std::size_t>(k));
    }
  }

  std::string name_;
  int dim_;
  Params params_;
  RhsFn rhs_;
  JacobianFn jacobian_;
  double fd_step_;
};

// ---------------------------------------------------------------------------
// Built-in systems

namespace detail {

inline Params merge_params(const std::string& id, const Params& defaults, const Params& given) {
  Params out = defaults;
  for (const auto& [key, value] : given) {
    if (!defaults.count(key))
      throw Error(ErrorKind::kInput, "system '" + id + "' has no parameter '" + key + "'");
    if (!std::isfinite(value))
      throw Error(ErrorKind::kInput, "parameter '" + key + "' is not finite");
    out[key] = value;
  }
  return out;
}

}  // namespace detail

inline std::vector<std::string> registry_ids() {
  return {"vanderpol",       "harmonic",      "linear-stable",
          "fitzhugh-nagumo", "unstable-focus", "constant-drift"};
}

/// Builds a registry system. All registry systems carry analytic Jacobians.
inline VectorField make_system(const std::string& id, const Params& given = {}) {
  if (id == "vanderpol") {
    Params p = detail::merge_params(id, {{"p", 0.3}}, given);
    const double mu = p.at("p");
    return VectorField(
        id, 2, p,
        [mu](const Vector& x, Vector& out) {
          out[0] = x[1];
          out[1] = mu * x[1] - mu * x[0] * x[0] * x[1] - x[0];
        },
        [mu](const Vector& x, Matrix& out) {
          out(0, 0) = 0.0;
          out(0, 1) = 1.0;
          out(1, 0) = -2.0 * mu * x[0] * x[1] - 1.0;
          out(1, 1) = mu - mu * x[0] * x[0];
        });
  }
  if (id == "harmonic") {
    Params p = detail::merge_params(id, {{"omega", 1.0}}, given);
    const double w = p.at("omega");
    return VectorField(
        id, 2, p,
        [w](const Vector& x, Vector& out) {
          out[0] = w * x[1];
          out[1] = -w * x[0];
        },
        [w](const Vector&, Matrix& out) { out << 0.0, w, -w, 0.0; });
  }
  if (id == "linear-stable") {
    Params p = detail::merge_params(id, {{"rate", 1.0}, {"dim", 2.0}}, given);
    const double rate = p.at("rate");
    const double dim_value = p.at("dim");
    if (dim_value < 1.0 || dim_value != std::floor(dim_value))
      throw Error(ErrorKind::kInput, "linear-stable: dim must be a positive integer");
    const int dim = static_cast<int>(dim_value);
    return VectorField(
        id, dim, p, [rate](const Vector& x, Vector& out) { out = -rate * x; },
        [rate, dim](const Vector&, Matrix& out) {
          out = -rate * Matrix::Identity(dim, dim);
        });
  }
  if (id == "fitzhugh-nagumo") {
    Params p = detail::merge_params(
        id, {{"a", 0.7}, {"b", 0.8}, {"eps", 0.08}, {"I", 0.5}}, given);
    const double a = p.at("a"), b = p.at("b"), eps = p.at("eps"), current = p.at("I");
    return VectorField(
        id, 2, p,
        [=](const Vector& x, Vector& out) {
          out[0] = x[0] - x[0] * x[0] * x[0] / 3.0 - x[1] + current;
          out[1] = eps * (x[0] + a - b * x[1]);
        },
        [=](const Vector& x, Matrix& out) {
          out(0, 0) = 1.0 - x[0] * x[0];
          out(0, 1) = -1.0;
          out(1, 0) = eps;
          out(1, 1) = -eps * b;
        });
  }
  if (id == "unstable-focus") {
    // x' = a x + y, y' = -x + a y: an expanding spiral for a > 0.
    Params p = detail::merge_params(id, {{"a", 0.05}}, given);
    const double a = p.at("a");
    return VectorField(
        id, 2, p,
        [a](const Vector& x, Vector& out) {
          out[0] = a * x[0] + x[1];
          out[1] = -x[0] + a * x[1];
        },
        [a](const Vector&, Matrix& out) { out << a, 1.0, -1.0, a; });
  }
  if (id == "constant-drift") {
    Params p = detail::merge_params(id, {{"c1", 1.0}, {"c2", 0.0}}, given);
    const double c1 = p.at("c1"), c2 = p.at("c2");
    return VectorField(
        id, 2, p,
        [c1, c2](const Vector&, Vector& out) {
          out[0] = c1;
          out[1] = c2;
        },
        [](const Vector&, Matrix& out) { out.setZero(); });
  }
  throw Error(ErrorKind::kInput, "unknown system id '" + id + "'");
}

// ---------------------------------------------------------------------------
// System definition files
//
// Either a registry reference
//   {"id": "vanderpol", "params": {"p": 0.3}}
// or an inline definition
//   {"name": "vdp", "variables": ["u1", "u2"], "params": {"p": 0.3},
//    "rhs": ["u2", "p*u2 - p*u1^2*u2 - u1"],
//    "jacobian": [["0", "1"], ["-2*p*u1*u2 - 1", "p - p*u1^2"]],
//    "fd_step": 1e-6}
// "variables" defaults to x1..xn; "jacobian" is optional (finite differences
// otherwise). See schemas/system.schema.json.

struct SystemSpec {
  std::optional<std::string> id;
  std::string name;
  std::vector<std::string> variables;
  std::vector<std::string> rhs;
  std::optional<std::vector<std::vector<std::string>>> jacobian;
  Params params;
  double fd_step = kDefaultFdStep;
};

inline SystemSpec system_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kInput, "system definition must be a JSON object");
  SystemSpec spec;
  try {
    if (j.contains("id")) spec.id = j.at("id").get<std::string>();
    spec.name = j.value("name", spec.id.value_or("inline"));
    if (j.contains("params")) {
      for (const auto& [key, value] : j.at("params").items()) spec.params[key] = value.get<double>();
    }
    if (j.contains("rhs")) spec.rhs = j.at("rhs").get<std::vector<std::string>>();
    if (j.contains("variables")) spec.variables = j.at("variables").get<std::vector<std::string>>();
    if (j.contains("jacobian"))
      spec.jacobian = j.at("jacobian").get<std::vector<std::vector<std::string>>>();
    spec.fd_step = j.value("fd_step", kDefaultFdStep);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("bad system definition: ") + e.what());
  }
  if (!spec.id && spec.rhs.empty())
    throw Error(ErrorKind::kInput, "system definition needs either 'id' or 'rhs'");
  return spec;
}

inline VectorField load_system(const SystemSpec& spec) {
  if (spec.id) return make_system(*spec.id, spec.params);

  const int n = static_cast<int>(spec.rhs.size());
  std::vector<std::string> vars = spec.variables;
  if (vars.empty()) {
    for (int k = 1; k <= n; ++k) vars.push_back("x" + std::to_string(k));
  }
  if (static_cast<int>(vars.size()) != n)
    throw Error(ErrorKind::kInput, "number of variables does not match number of rhs entries");

  std::unordered_map<std::string, int> slots;
  for (int k = 0; k < n; ++k) {
    if (!slots.emplace(vars[static_cast<std::size_t>(k)], k).second)
      throw Error(ErrorKind::kInput, "duplicate variable '" + vars[static_cast<std::size_t>(k)] + "'");
  }
  std::vector<double> param_values;
  for (const auto& [key, value] : spec.params) {
    if (slots.count(key)) throw Error(ErrorKind::kInput, "parameter '" + key + "' shadows a variable");
    slots.emplace(key, n + static_cast<int>(param_values.size()));
    param_values.push_back(value);
  }

  // Unknown names surface here, which is how a missing parameter is reported.
  std::vector<Expression> rhs;
  for (const auto& text : spec.rhs) rhs.push_back(Expression::compile(text, slots));

  auto bind = [n, param_values](const Vector& x) {
    std::vector<double> values(static_cast<std::size_t>(n) + param_values.size());
    for (int k = 0; k < n; ++k) values[static_cast<std::size_t>(k)] = x[k];
    std::copy(param_values.begin(), param_values.end(), values.begin() + n);
    return values;
  };

  VectorField::RhsFn rhs_fn = [rhs, bind](const Vector& x, Vector& out) {
    const auto values = bind(x);
    for (std::size_t k = 0; k < rhs.size(); ++k)
      out[static_cast<Eigen::Index>(k)] = rhs[k].evaluate(values);
  };

  VectorField::JacobianFn jac_fn;
  if (spec.jacobian) {
    const auto& rows = *spec.jacobian;
    if (static_cast<int>(rows.size()) != n)
      throw Error(ErrorKind::kInput, "jacobian must have one row per variable");
    std::vector<Expression> entries;
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != n)
        throw Error(ErrorKind::kInput, "jacobian rows must have one entry per variable");
      for (const auto& text : row) entries.push_back(Expression::compile(text, slots));
    }
    jac_fn = [entries, bind, n](const Vector& x, Matrix& out) {
      const auto values = bind(x);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          out(r, c) = entries[static_cast<std::size_t>(r * n + c)].evaluate(values);
    };
  }
  return VectorField(spec.name, n, spec.params, std::move(rhs_fn), std::move(jac_fn), spec.fd_step);
}

inline VectorField load_system(const nlohmann::json& j) { return load_system(system_spec_from_json(j)); }

inline VectorField load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open system file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, "system file '" + path + "' is not valid JSON: " + e.what());
  }
  return load_system(j);
}

}  // namespace cyclecert
