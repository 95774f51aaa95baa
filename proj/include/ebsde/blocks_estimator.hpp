#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ebsde/drivers.hpp"
#include "ebsde/linalg.hpp"
#include "ebsde/sde_sim.hpp"

namespace ebsde {

/// Partition of n sampling intervals into L = floor(n / c) blocks of c
/// intervals. Block l covers global indices [c l, c (l + 1)].
class BlockScheme {
 public:
  BlockScheme(std::int64_t n, std::int64_t c);

  std::int64_t n() const noexcept { return n_; }
  std::int64_t c() const noexcept { return c_; }
  std::int64_t L() const noexcept { return L_; }

  std::int64_t anchor(std::int64_t l) const noexcept { return c_ * l; }
  std::int64_t within(std::int64_t l, std::int64_t m) const noexcept { return m + c_ * l; }

 private:
  std::int64_t n_;
  std::int64_t c_;
  std::int64_t L_;
};

/// Throws InsufficientData when n < 2c (the likelihood sum would be empty)
/// and ConfigError when c < 1.
BlockScheme build_blocks(std::int64_t n, std::int64_t c);

struct RealizedBlockCov {
  std::int64_t l = 0;
  Matrix z_hat;
  bool degenerate = true;
  std::optional<Matrix> chol_factor;  // lower factor, present iff not degenerate
};

/// Numerical reading of det z > 0: Cholesky must succeed and
/// det z >= 1e-12 * (trace(z) / d)^d.
bool is_degenerate_cov(MatrixCRef z);

/// z_hat = (1 / (c h)) sum_m dY_m dY_m^T over the c increments of block l.
RealizedBlockCov realized_block_cov(const ObservationRecord& obs, const BlockScheme& scheme,
                                    std::int64_t l);

struct QuasiLikEval {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
  std::int64_t dropped_blocks = 0;
  std::int64_t used_blocks = 0;
};

/// Block quasi-log-likelihood
///   H(theta) = -1/2 sum_{l=1}^{L-1} r_l^T Zhat_{l-1}^{-1} r_l / (c h),
///   r_l = (Y at anchor l+1 - Y at anchor l) - c h psi(X_l, Y_l, Zhat_{l-1}, theta),
/// over blocks whose previous covariance proxy is non-degenerate.
///
/// The per-block quantities are computed once at construction, so repeated
/// evaluation inside an optimizer only touches the driver.
class QuasiLikelihood {
 public:
  QuasiLikelihood(const ObservationRecord& obs, const BlockScheme& scheme, DriverSpec driver);

  QuasiLikEval evaluate(VectorCRef theta, bool want_derivs) const;
  double value(VectorCRef theta) const;

  /// Block average of J^T Zhat^{-1} J over the used blocks.
  Matrix gamma(VectorCRef theta) const;

  std::int64_t used_blocks() const noexcept { return static_cast<std::int64_t>(terms_.size()); }
  std::int64_t dropped_blocks() const noexcept { return dropped_; }
  const DriverSpec& driver() const noexcept { return driver_; }

 private:
  struct Term {
    Vector x;
    Vector y;
    Matrix z;
    Eigen::LLT<Matrix> llt;
    Vector increment;
  };

  DriverSpec driver_;
  std::vector<Term> terms_;
  std::int64_t dropped_ = 0;
  double block_span_ = 0.0;  // c h
};

/// Throws DimError on a driver/data mismatch and AllDegenerate when no block is usable.
QuasiLikEval quasi_loglik(const ObservationRecord& obs, const BlockScheme& scheme,
                          const DriverSpec& driver, VectorCRef theta, bool want_derivs);

struct EstimatorOptions {
  int max_iter = 200;
  double grad_tol = 1e-8;  // relative to 1 + |H|
  int grid_points = 5;     // multi-start points per coordinate
};

struct EstimationResult {
  Vector theta_hat;
  double h_value = 0.0;
  Matrix gamma_hat;
  Vector std_errors;  // sqrt(diag(gamma_hat^{-1}) / (n h)); NaN if gamma_hat is singular
  int iterations = 0;
  int starts = 0;
  bool converged = false;
  bool on_boundary = false;
  double grad_norm = 0.0;  // projected gradient
  std::int64_t dropped_blocks = 0;
  std::int64_t used_blocks = 0;
};

/// Projected Newton ascent from the box center with backtracking; falls back
/// to a multi-start grid when Newton stalls or ends at an indefinite Hessian.
EstimationResult maximize_quasi_lik(const ObservationRecord& obs, const BlockScheme& scheme,
                                    const DriverSpec& driver, const ThetaBox& box,
                                    const EstimatorOptions& opts = {});

/// Weighted least squares for drivers affine in theta:
///   theta = (sum c h G^T Zhat^{-1} G)^{-1} sum G^T Zhat^{-1} (dY - c h psi(0)).
/// Throws SingularSystem when the normal matrix is not invertible.
Vector closed_form_linear(const ObservationRecord& obs, const BlockScheme& scheme,
                          const DriverSpec& driver);

/// Plug-in information matrix at theta.
Matrix gamma_plugin(const ObservationRecord& obs, const BlockScheme& scheme,
                    const DriverSpec& driver, VectorCRef theta);

/// sqrt(diag(gamma^{-1}) / (n h)), NaN entries when gamma is not positive definite.
Vector wald_std_errors(MatrixCRef gamma, std::int64_t n, double h);

}  // namespace ebsde
