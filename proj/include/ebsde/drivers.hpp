#pragma once

#include <functional>
#include <map>
#include <string>

#include "ebsde/linalg.hpp"

namespace ebsde {

using ParamMap = std::map<std::string, double>;

/// Closed parameter box. Estimators search over its closure.
class ThetaBox {
 public:
  ThetaBox(Vector lower, Vector upper);

  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }
  Eigen::Index dim() const noexcept { return lower_.size(); }

  Vector center() const { return 0.5 * (lower_ + upper_); }
  bool contains(VectorCRef theta) const;
  Vector project(VectorCRef theta) const;

 private:
  Vector lower_;
  Vector upper_;
};

/// Drift function psi(x, y, z, theta) of the observed process together with
/// its theta-Jacobian. Immutable once built; eval and jacobian are pure.
class DriverSpec {
 public:
  using EvalFn =
      std::function<void(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta, VectorRef out)>;
  using JacobianFn =
      std::function<void(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta, MatrixRef out)>;

  struct Traits {
    std::string name;
    int d_x = 0;
    int d_y = 1;
    int d_theta = 1;
    bool depends_on_y = false;
    bool depends_on_z = false;
    // psi(theta) = psi(0) + J theta with J independent of theta.
    bool affine_in_theta = false;
    ParamMap fixed_params;
  };

  DriverSpec(Traits traits, EvalFn eval, JacobianFn jacobian = {});

  const std::string& name() const noexcept { return traits_.name; }
  int d_x() const noexcept { return traits_.d_x; }
  int d_y() const noexcept { return traits_.d_y; }
  int d_theta() const noexcept { return traits_.d_theta; }
  bool depends_on_y() const noexcept { return traits_.depends_on_y; }
  bool depends_on_z() const noexcept { return traits_.depends_on_z; }
  bool affine_in_theta() const noexcept { return traits_.affine_in_theta; }
  bool has_analytic_jacobian() const noexcept { return static_cast<bool>(jacobian_); }
  const ParamMap& fixed_params() const noexcept { return traits_.fixed_params; }

  /// Dimension-checked evaluation.
  Vector eval(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta) const;
  Matrix jacobian(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta) const;

  // Unchecked variants for inner loops; `out` must already have the right shape.
  void eval_into(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta, VectorRef out) const {
    eval_(x, y, z, theta, out);
  }
  void jacobian_into(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta,
                     MatrixRef out) const;

 private:
  void check_dims(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta) const;

  Traits traits_;
  EvalFn eval_;
  JacobianFn jacobian_;
};

/// Regressor G(x, y, z) of a linear driver psi = G theta.
using RegressorFn = std::function<Matrix(VectorCRef x, VectorCRef y, MatrixCRef z)>;

DriverSpec linear_driver(std::string name, int d_x, int d_y, int d_theta, RegressorFn regressor,
                         bool depends_on_y = true, bool depends_on_z = true);

/// Built-in drivers: "zero", "linear", "vasicek_sqrt", "heston_price".
///
/// Parameters:
///   zero          d_x (0), d_y (1), d_theta (1)
///   linear        d_y, d_theta required; d_x (0); G_ij = a_i_j + b_i_j * x_1 (1-based)
///   vasicek_sqrt  offset (0.1): psi = theta * sqrt(|x| + offset)
///   heston_price  mu required: psi = mu * y + sqrt(max(x, 0)) * chol(z) * theta
///
/// Throws NameError for an unknown name and ConfigError for missing or unknown
/// parameters.
DriverSpec builtin_driver(const std::string& name, const ParamMap& params = {});

/// Analytic Jacobian when the driver has one, central differences otherwise.
/// Throws DegenerateZ when the driver reads z and z is not positive definite.
Matrix eval_driver_jacobian(const DriverSpec& driver, VectorCRef x, VectorCRef y, MatrixCRef z,
                            VectorCRef theta);

/// Central differences with step 1e-6 * (1 + |theta_j|), ignoring any analytic Jacobian.
Matrix finite_difference_jacobian(const DriverSpec& driver, VectorCRef x, VectorCRef y,
                                  MatrixCRef z, VectorCRef theta);

/// Lower Cholesky factor; throws DegenerateZ if z is not positive definite.
Matrix lower_cholesky(MatrixCRef z);

}  // namespace ebsde
