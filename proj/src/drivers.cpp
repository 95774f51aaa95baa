#include "ebsde/drivers.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "ebsde/errors.hpp"

namespace ebsde {

ThetaBox::ThetaBox(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() == 0 || lower_.size() != upper_.size()) {
    throw ConfigError("theta_box", "lower and upper must be non-empty and of equal length");
  }
  for (Eigen::Index j = 0; j < lower_.size(); ++j) {
    if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j]) || !(lower_[j] < upper_[j])) {
      throw ConfigError("theta_box", "need finite lower < upper in coordinate " + std::to_string(j));
    }
  }
}

bool ThetaBox::contains(VectorCRef theta) const {
  if (theta.size() != dim()) return false;
  return (theta.array() >= lower_.array()).all() && (theta.array() <= upper_.array()).all();
}

Vector ThetaBox::project(VectorCRef theta) const {
  return theta.cwiseMax(lower_).cwiseMin(upper_);
}

DriverSpec::DriverSpec(Traits traits, EvalFn eval, JacobianFn jacobian)
    : traits_(std::move(traits)), eval_(std::move(eval)), jacobian_(std::move(jacobian)) {
  if (traits_.d_x < 0 || traits_.d_y < 1 || traits_.d_theta < 1) {
    throw ConfigError("driver", "invalid dimensions for driver '" + traits_.name + "'");
  }
  if (!eval_) throw ConfigError("driver", "driver '" + traits_.name + "' has no eval function");
}

void DriverSpec::check_dims(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta) const {
  if (x.size() != d_x() || y.size() != d_y() || z.rows() != d_y() || z.cols() != d_y() ||
      theta.size() != d_theta()) {
    throw DimError("argument dimensions do not match driver '" + name() + "'");
  }
}

Vector DriverSpec::eval(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta) const {
  check_dims(x, y, z, theta);
  Vector out(d_y());
  eval_(x, y, z, theta, out);
  return out;
}

Matrix DriverSpec::jacobian(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta) const {
  check_dims(x, y, z, theta);
  Matrix out(d_y(), d_theta());
  jacobian_into(x, y, z, theta, out);
  return out;
}

void DriverSpec::jacobian_into(VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta,
                               MatrixRef out) const {
  if (jacobian_) {
    jacobian_(x, y, z, theta, out);
    return;
  }
  Vector shifted = theta;
  Vector plus(d_y());
  Vector minus(d_y());
  for (int j = 0; j < d_theta(); ++j) {
    const double step = 1e-6 * (1.0 + std::abs(theta[j]));
    shifted[j] = theta[j] + step;
    eval_(x, y, z, shifted, plus);
    shifted[j] = theta[j] - step;
    eval_(x, y, z, shifted, minus);
    shifted[j] = theta[j];
    out.col(j) = (plus - minus) / (2.0 * step);
  }
}

Matrix lower_cholesky(MatrixCRef z) {
  Eigen::LLT<Matrix> llt(z);
  if (z.rows() == 0 || z.rows() != z.cols() || llt.info() != Eigen::Success) {
    throw DegenerateZ("matrix is not positive definite");
  }
  return llt.matrixL();
}

Matrix eval_driver_jacobian(const DriverSpec& driver, VectorCRef x, VectorCRef y, MatrixCRef z,
                            VectorCRef theta) {
  if (driver.depends_on_z()) {
    Eigen::LLT<Matrix> llt(z);
    if (llt.info() != Eigen::Success) {
      throw DegenerateZ("driver '" + driver.name() + "' needs a positive definite z");
    }
  }
  return driver.jacobian(x, y, z, theta);
}

Matrix finite_difference_jacobian(const DriverSpec& driver, VectorCRef x, VectorCRef y,
                                  MatrixCRef z, VectorCRef theta) {
  Matrix out(driver.d_y(), driver.d_theta());
  Vector shifted = theta;
  for (int j = 0; j < driver.d_theta(); ++j) {
    const double step = 1e-6 * (1.0 + std::abs(theta[j]));
    shifted[j] = theta[j] + step;
    const Vector plus = driver.eval(x, y, z, shifted);
    shifted[j] = theta[j] - step;
    const Vector minus = driver.eval(x, y, z, shifted);
    shifted[j] = theta[j];
    out.col(j) = (plus - minus) / (2.0 * step);
  }
  return out;
}

DriverSpec linear_driver(std::string name, int d_x, int d_y, int d_theta, RegressorFn regressor,
                         bool depends_on_y, bool depends_on_z) {
  if (!regressor) throw ConfigError("driver", "linear driver needs a regressor function");
  DriverSpec::Traits traits{.name = std::move(name),
                            .d_x = d_x,
                            .d_y = d_y,
                            .d_theta = d_theta,
                            .depends_on_y = depends_on_y,
                            .depends_on_z = depends_on_z,
                            .affine_in_theta = true,
                            .fixed_params = {}};
  auto eval = [regressor](VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta,
                          VectorRef out) { out.noalias() = regressor(x, y, z) * theta; };
  auto jac = [regressor](VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef, MatrixRef out) {
    out = regressor(x, y, z);
  };
  return DriverSpec(std::move(traits), std::move(eval), std::move(jac));
}

namespace {

void reject_unknown(const std::string& driver, const ParamMap& params,
                    const std::set<std::string>& known) {
  for (const auto& [key, value] : params) {
    if (!known.contains(key)) {
      throw ConfigError("driver.params." + key, "unknown parameter for driver '" + driver + "'");
    }
  }
}

double get_or(const ParamMap& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

double require(const std::string& driver, const ParamMap& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) {
    throw ConfigError("driver.params." + key, "required by driver '" + driver + "'");
  }
  return it->second;
}

int as_dim(const std::string& key, double value, int minimum) {
  if (value != std::floor(value) || value < minimum || value > 1000) {
    throw ConfigError("driver.params." + key, "must be an integer >= " + std::to_string(minimum));
  }
  return static_cast<int>(value);
}

DriverSpec make_zero(const ParamMap& params) {
  reject_unknown("zero", params, {"d_x", "d_y", "d_theta"});
  DriverSpec::Traits traits{.name = "zero",
                            .d_x = as_dim("d_x", get_or(params, "d_x", 0), 0),
                            .d_y = as_dim("d_y", get_or(params, "d_y", 1), 1),
                            .d_theta = as_dim("d_theta", get_or(params, "d_theta", 1), 1),
                            .depends_on_y = false,
                            .depends_on_z = false,
                            .affine_in_theta = true,
                            .fixed_params = params};
  return DriverSpec(
      std::move(traits), [](VectorCRef, VectorCRef, MatrixCRef, VectorCRef, VectorRef out) { out.setZero(); },
      [](VectorCRef, VectorCRef, MatrixCRef, VectorCRef, MatrixRef out) { out.setZero(); });
}

DriverSpec make_linear(const ParamMap& params) {
  const int d_x = as_dim("d_x", get_or(params, "d_x", 0), 0);
  const int d_y = as_dim("d_y", require("linear", params, "d_y"), 1);
  const int d_theta = as_dim("d_theta", require("linear", params, "d_theta"), 1);

  std::set<std::string> known{"d_x", "d_y", "d_theta"};
  Matrix intercept = Matrix::Zero(d_y, d_theta);
  Matrix slope = Matrix::Zero(d_y, d_theta);
  for (int i = 0; i < d_y; ++i) {
    for (int j = 0; j < d_theta; ++j) {
      const std::string suffix = std::to_string(i + 1) + "_" + std::to_string(j + 1);
      known.insert("a_" + suffix);
      known.insert("b_" + suffix);
      intercept(i, j) = get_or(params, "a_" + suffix, 0.0);
      slope(i, j) = get_or(params, "b_" + suffix, 0.0);
    }
  }
  reject_unknown("linear", params, known);
  const bool uses_x = !slope.isZero(0.0);
  if (uses_x && d_x < 1) {
    throw ConfigError("driver.params.d_x", "b_i_j coefficients need d_x >= 1");
  }

  auto regressor = [intercept, slope, uses_x](VectorCRef x, VectorCRef, MatrixCRef) -> Matrix {
    if (!uses_x) return intercept;
    return intercept + x[0] * slope;
  };
  DriverSpec::Traits traits{.name = "linear",
                            .d_x = d_x,
                            .d_y = d_y,
                            .d_theta = d_theta,
                            .depends_on_y = false,
                            .depends_on_z = false,
                            .affine_in_theta = true,
                            .fixed_params = params};
  auto eval = [regressor](VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta,
                          VectorRef out) { out.noalias() = regressor(x, y, z) * theta; };
  auto jac = [regressor](VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef, MatrixRef out) {
    out = regressor(x, y, z);
  };
  return DriverSpec(std::move(traits), std::move(eval), std::move(jac));
}

DriverSpec make_vasicek_sqrt(const ParamMap& params) {
  reject_unknown("vasicek_sqrt", params, {"offset"});
  const double offset = get_or(params, "offset", 0.1);
  if (!(offset > 0.0)) throw ConfigError("driver.params.offset", "must be positive");
  DriverSpec::Traits traits{.name = "vasicek_sqrt",
                            .d_x = 1,
                            .d_y = 1,
                            .d_theta = 1,
                            .depends_on_y = false,
                            .depends_on_z = false,
                            .affine_in_theta = true,
                            .fixed_params = {{"offset", offset}}};
  auto eval = [offset](VectorCRef x, VectorCRef, MatrixCRef, VectorCRef theta, VectorRef out) {
    out[0] = theta[0] * std::sqrt(std::abs(x[0]) + offset);
  };
  auto jac = [offset](VectorCRef x, VectorCRef, MatrixCRef, VectorCRef, MatrixRef out) {
    out(0, 0) = std::sqrt(std::abs(x[0]) + offset);
  };
  return DriverSpec(std::move(traits), std::move(eval), std::move(jac));
}

// Lower Cholesky factor of a 2x2 SPD matrix, entries (l11, l21, l22).
struct Chol2 {
  double l11;
  double l21;
  double l22;
};

Chol2 chol2(MatrixCRef z) {
  const double a = z(0, 0);
  if (!(a > 0.0)) throw DegenerateZ("heston_price: z is not positive definite");
  const double l11 = std::sqrt(a);
  const double l21 = z(1, 0) / l11;
  const double rest = z(1, 1) - l21 * l21;
  if (!(rest > 0.0)) throw DegenerateZ("heston_price: z is not positive definite");
  return {l11, l21, std::sqrt(rest)};
}

DriverSpec make_heston_price(const ParamMap& params) {
  reject_unknown("heston_price", params, {"mu"});
  const double mu = require("heston_price", params, "mu");
  DriverSpec::Traits traits{.name = "heston_price",
                            .d_x = 1,
                            .d_y = 2,
                            .d_theta = 2,
                            .depends_on_y = mu != 0.0,
                            .depends_on_z = true,
                            .affine_in_theta = true,
                            .fixed_params = {{"mu", mu}}};
  auto eval = [mu](VectorCRef x, VectorCRef y, MatrixCRef z, VectorCRef theta, VectorRef out) {
    const Chol2 c = chol2(z);
    const double vol = std::sqrt(std::max(x[0], 0.0));
    out[0] = mu * y[0] + vol * c.l11 * theta[0];
    out[1] = mu * y[1] + vol * (c.l21 * theta[0] + c.l22 * theta[1]);
  };
  auto jac = [](VectorCRef x, VectorCRef, MatrixCRef z, VectorCRef, MatrixRef out) {
    const Chol2 c = chol2(z);
    const double vol = std::sqrt(std::max(x[0], 0.0));
    out(0, 0) = vol * c.l11;
    out(0, 1) = 0.0;
    out(1, 0) = vol * c.l21;
    out(1, 1) = vol * c.l22;
  };
  return DriverSpec(std::move(traits), std::move(eval), std::move(jac));
}

}  // namespace

DriverSpec builtin_driver(const std::string& name, const ParamMap& params) {
  if (name == "zero") return make_zero(params);
  if (name == "linear") return make_linear(params);
  if (name == "vasicek_sqrt") return make_vasicek_sqrt(params);
  if (name == "heston_price") return make_heston_price(params);
  throw NameError("unknown driver '" + name + "'");
}

}  // namespace ebsde
