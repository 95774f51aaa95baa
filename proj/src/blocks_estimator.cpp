#include "ebsde/blocks_estimator.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "ebsde/errors.hpp"

namespace ebsde {

BlockScheme::BlockScheme(std::int64_t n, std::int64_t c) : n_(n), c_(c), L_(0) {
  if (c < 1) throw ConfigError("c", "block length must be a positive integer");
  if (n < 2 * c) {
    throw InsufficientData("n = " + std::to_string(n) + " gives fewer than two blocks of c = " +
                           std::to_string(c));
  }
  L_ = n / c;
}

BlockScheme build_blocks(std::int64_t n, std::int64_t c) { return BlockScheme(n, c); }

bool is_degenerate_cov(MatrixCRef z) {
  const auto d = z.rows();
  if (d == 0 || z.cols() != d) return true;
  const double trace = z.trace();
  if (!(trace > 0.0) || !std::isfinite(trace)) return true;
  Eigen::LLT<Matrix> llt(z);
  if (llt.info() != Eigen::Success) return true;
  const double sqrt_det = llt.matrixLLT().diagonal().prod();
  const double threshold = 1e-12 * std::pow(trace / static_cast<double>(d), static_cast<double>(d));
  return sqrt_det * sqrt_det < threshold;
}

namespace {

void check_compatible(const ObservationRecord& obs, const BlockScheme& scheme) {
  if (scheme.n() > obs.n) {
    throw DimError("block scheme spans " + std::to_string(scheme.n()) +
                   " intervals but the record has " + std::to_string(obs.n));
  }
  if (obs.y_path.rows() != obs.n + 1) throw DimError("Y path must have n+1 rows");
}

void check_driver(const ObservationRecord& obs, const DriverSpec& driver) {
  if (driver.d_x() != obs.d_x() || driver.d_y() != obs.d_y()) {
    throw DimError("driver '" + driver.name() + "' expects d_x=" + std::to_string(driver.d_x()) +
                   ", d_y=" + std::to_string(driver.d_y()) + " but data has d_x=" +
                   std::to_string(obs.d_x()) + ", d_y=" + std::to_string(obs.d_y()));
  }
}

Matrix block_cov(const ObservationRecord& obs, const BlockScheme& scheme, std::int64_t l) {
  const auto d = obs.y_path.cols();
  Matrix z = Matrix::Zero(d, d);
  for (std::int64_t m = 1; m <= scheme.c(); ++m) {
    const auto k = scheme.within(l, m);
    const Vector inc = (obs.y_path.row(k) - obs.y_path.row(k - 1)).transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = j; i < d; ++i) z(i, j) += inc[i] * inc[j];
    }
  }
  z /= static_cast<double>(scheme.c()) * obs.h;
  z.triangularView<Eigen::StrictlyUpper>() = z.transpose().triangularView<Eigen::StrictlyUpper>();
  return z;
}

}  // namespace

RealizedBlockCov realized_block_cov(const ObservationRecord& obs, const BlockScheme& scheme,
                                    std::int64_t l) {
  check_compatible(obs, scheme);
  if (l < 0 || l >= scheme.L()) {
    throw IndexError("block index " + std::to_string(l) + " outside [0, " +
                     std::to_string(scheme.L() - 1) + "]");
  }
  RealizedBlockCov out;
  out.l = l;
  out.z_hat = block_cov(obs, scheme, l);
  out.degenerate = is_degenerate_cov(out.z_hat);
  if (!out.degenerate) out.chol_factor = Matrix(Eigen::LLT<Matrix>(out.z_hat).matrixL());
  return out;
}

QuasiLikelihood::QuasiLikelihood(const ObservationRecord& obs, const BlockScheme& scheme,
                                 DriverSpec driver)
    : driver_(std::move(driver)) {
  check_compatible(obs, scheme);
  check_driver(obs, driver_);
  block_span_ = static_cast<double>(scheme.c()) * obs.h;

  Matrix previous = block_cov(obs, scheme, 0);
  bool previous_degenerate = is_degenerate_cov(previous);
  terms_.reserve(static_cast<std::size_t>(scheme.L()));
  for (std::int64_t l = 1; l < scheme.L(); ++l) {
    Matrix current = block_cov(obs, scheme, l);
    const bool current_degenerate = is_degenerate_cov(current);
    if (previous_degenerate) {
      ++dropped_;
    } else {
      const auto k0 = scheme.anchor(l);
      const auto k1 = scheme.anchor(l + 1);
      Term term;
      term.x = obs.x_path.cols() > 0 ? Vector(obs.x_path.row(k0).transpose()) : Vector(0);
      term.y = obs.y_path.row(k0).transpose();
      term.increment = (obs.y_path.row(k1) - obs.y_path.row(k0)).transpose();
      term.llt.compute(previous);
      term.z = std::move(previous);
      terms_.push_back(std::move(term));
    }
    previous = std::move(current);
    previous_degenerate = current_degenerate;
  }
  if (terms_.empty()) {
    throw AllDegenerate("all " + std::to_string(dropped_) +
                        " likelihood blocks have a degenerate covariance proxy");
  }
}

QuasiLikEval QuasiLikelihood::evaluate(VectorCRef theta, bool want_derivs) const {
  const int d_y = driver_.d_y();
  const int d_theta = driver_.d_theta();
  if (theta.size() != d_theta) throw DimError("theta has the wrong length");

  QuasiLikEval out;
  out.used_blocks = used_blocks();
  out.dropped_blocks = dropped_;
  if (want_derivs) {
    out.gradient = Vector::Zero(d_theta);
    out.hessian = Matrix::Zero(d_theta, d_theta);
  }

  Vector psi(d_y);
  Vector residual(d_y);
  Vector weighted(d_y);
  Matrix jac(d_y, d_theta);
  Matrix jac_plus(d_y, d_theta);
  Matrix jac_minus(d_y, d_theta);
  Vector shifted = theta;
  const bool second_order = want_derivs && !driver_.affine_in_theta();

  double value = 0.0;
  for (const Term& t : terms_) {
    driver_.eval_into(t.x, t.y, t.z, theta, psi);
    residual = t.increment - block_span_ * psi;
    weighted = t.llt.solve(residual);
    value += residual.dot(weighted);
    if (!want_derivs) continue;

    driver_.jacobian_into(t.x, t.y, t.z, theta, jac);
    out.gradient.noalias() += jac.transpose() * weighted;
    out.hessian.noalias() -= block_span_ * (jac.transpose() * t.llt.solve(jac));
    if (second_order) {
      // Contraction of d^2 psi with Zhat^{-1} r, by central differences of the Jacobian.
      for (int j = 0; j < d_theta; ++j) {
        const double step = 1e-4 * (1.0 + std::abs(theta[j]));
        shifted[j] = theta[j] + step;
        driver_.jacobian_into(t.x, t.y, t.z, shifted, jac_plus);
        shifted[j] = theta[j] - step;
        driver_.jacobian_into(t.x, t.y, t.z, shifted, jac_minus);
        shifted[j] = theta[j];
        out.hessian.col(j).noalias() += (jac_plus - jac_minus).transpose() * weighted / (2.0 * step);
      }
    }
  }
  out.value = -0.5 * value / block_span_;
  if (want_derivs) out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
  return out;
}

double QuasiLikelihood::value(VectorCRef theta) const { return evaluate(theta, false).value; }

Matrix QuasiLikelihood::gamma(VectorCRef theta) const {
  const int d_theta = driver_.d_theta();
  Matrix jac(driver_.d_y(), d_theta);
  Matrix sum = Matrix::Zero(d_theta, d_theta);
  for (const Term& t : terms_) {
    driver_.jacobian_into(t.x, t.y, t.z, theta, jac);
    sum.noalias() += jac.transpose() * t.llt.solve(jac);
  }
  sum /= static_cast<double>(terms_.size());
  return 0.5 * (sum + sum.transpose());
}

QuasiLikEval quasi_loglik(const ObservationRecord& obs, const BlockScheme& scheme,
                          const DriverSpec& driver, VectorCRef theta, bool want_derivs) {
  return QuasiLikelihood(obs, scheme, driver).evaluate(theta, want_derivs);
}

Vector wald_std_errors(MatrixCRef gamma, std::int64_t n, double h) {
  const auto d = gamma.rows();
  Eigen::LLT<Matrix> llt(gamma);
  if (d == 0 || llt.info() != Eigen::Success || is_degenerate_cov(gamma)) {
    return Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
  }
  const Matrix inverse = llt.solve(Matrix::Identity(d, d));
  return (inverse.diagonal().array() / (static_cast<double>(n) * h)).sqrt();
}

namespace {

struct AscentOutcome {
  Vector theta;
  QuasiLikEval eval;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
  bool on_boundary = false;
  bool indefinite = false;  // Hessian on the free coordinates not negative definite
  double grad_norm = 0.0;
};

// Zero the gradient components that push against an active bound.
Vector projected_gradient(const Vector& theta, const Vector& grad, const ThetaBox& box,
                          std::vector<bool>& active) {
  Vector pg = grad;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const bool at_lower = theta[j] <= box.lower()[j] && grad[j] < 0.0;
    const bool at_upper = theta[j] >= box.upper()[j] && grad[j] > 0.0;
    active[static_cast<std::size_t>(j)] = at_lower || at_upper;
    if (active[static_cast<std::size_t>(j)]) pg[j] = 0.0;
  }
  return pg;
}

bool negative_definite_on_free(const Matrix& hessian, const std::vector<bool>& active) {
  std::vector<Eigen::Index> free;
  for (std::size_t j = 0; j < active.size(); ++j) {
    if (!active[j]) free.push_back(static_cast<Eigen::Index>(j));
  }
  if (free.empty()) return true;
  const auto nf = static_cast<Eigen::Index>(free.size());
  Matrix neg_h(nf, nf);
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b) neg_h(a, b) = -hessian(free[a], free[b]);
  return Eigen::LLT<Matrix>(neg_h).info() == Eigen::Success;
}

AscentOutcome ascend(const QuasiLikelihood& lik, const ThetaBox& box, const Vector& start,
                     const EstimatorOptions& opts) {
  const auto d = start.size();
  AscentOutcome out;
  out.theta = box.project(start);
  out.eval = lik.evaluate(out.theta, true);
  if (!std::isfinite(out.eval.value)) {
    out.stalled = true;
    return out;
  }

  std::vector<bool> active(static_cast<std::size_t>(d), false);
  for (out.iterations = 0;; ++out.iterations) {
    const Vector pg = projected_gradient(out.theta, out.eval.gradient, box, active);
    out.grad_norm = pg.norm();
    if (out.grad_norm <= opts.grad_tol * (1.0 + std::abs(out.eval.value))) {
      out.converged = true;
      out.indefinite = !negative_definite_on_free(out.eval.hessian, active);
      break;
    }
    if (out.iterations >= opts.max_iter) break;

    // Newton step on the free coordinates.
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!active[static_cast<std::size_t>(j)]) free.push_back(j);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Matrix neg_h(nf, nf);
    Vector g(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      g[a] = out.eval.gradient[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) neg_h(a, b) = -out.eval.hessian(free[a], free[b]);
    }
    Vector direction = Vector::Zero(d);
    Eigen::LLT<Matrix> llt(neg_h);
    Vector step_free;
    if (llt.info() == Eigen::Success) {
      out.indefinite = false;
      step_free = llt.solve(g);
    } else {
      out.indefinite = true;
      const double scale = std::max(1.0, neg_h.diagonal().cwiseAbs().maxCoeff());
      step_free = g / scale;
    }
    for (Eigen::Index a = 0; a < nf; ++a) direction[free[a]] = step_free[a];

    // Backtracking with an Armijo condition along the projected path.
    double t = 1.0;
    bool accepted = false;
    Vector candidate;
    double candidate_value = 0.0;
    while (t >= 1e-12) {
      candidate = box.project(out.theta + t * direction);
      candidate_value = lik.value(candidate);
      const double predicted = out.eval.gradient.dot(candidate - out.theta);
      if (std::isfinite(candidate_value) &&
          candidate_value >= out.eval.value + 1e-4 * predicted &&
          candidate_value >= out.eval.value) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || candidate == out.theta) {
      out.stalled = true;
      break;
    }
    out.theta = candidate;
    out.eval = lik.evaluate(out.theta, true);
  }

  for (Eigen::Index j = 0; j < d; ++j) {
    if (out.theta[j] <= box.lower()[j] || out.theta[j] >= box.upper()[j]) out.on_boundary = true;
  }
  return out;
}

bool better(const AscentOutcome& a, const AscentOutcome& b) {
  if (!std::isfinite(b.eval.value)) return std::isfinite(a.eval.value);
  if (a.converged != b.converged) return a.converged;
  return a.eval.value > b.eval.value;
}

}  // namespace

EstimationResult maximize_quasi_lik(const ObservationRecord& obs, const BlockScheme& scheme,
                                    const DriverSpec& driver, const ThetaBox& box,
                                    const EstimatorOptions& opts) {
  if (box.dim() != driver.d_theta()) throw DimError("theta box dimension differs from d_theta");
  const QuasiLikelihood lik(obs, scheme, driver);

  AscentOutcome best = ascend(lik, box, box.center(), opts);
  int iterations = best.iterations;
  int starts = 1;
  const bool needs_restart = !best.converged || (best.indefinite && !best.on_boundary);
  if (needs_restart) {
    const auto d = box.dim();
    const int per_axis = std::max(1, opts.grid_points);
    std::vector<int> index(static_cast<std::size_t>(d), 0);
    Vector start(d);
    for (;;) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double frac = (index[static_cast<std::size_t>(j)] + 1.0) / (per_axis + 1.0);
        start[j] = box.lower()[j] + frac * (box.upper()[j] - box.lower()[j]);
      }
      AscentOutcome candidate = ascend(lik, box, start, opts);
      iterations += candidate.iterations;
      ++starts;
      if (better(candidate, best)) best = std::move(candidate);

      Eigen::Index j = 0;
      while (j < d && ++index[static_cast<std::size_t>(j)] == per_axis) {
        index[static_cast<std::size_t>(j)] = 0;
        ++j;
      }
      if (j == d) break;
    }
  }
  if (!std::isfinite(best.eval.value)) {
    throw OptFailure("quasi-likelihood is not finite at any start point");
  }

  EstimationResult result;
  result.theta_hat = best.theta;
  result.h_value = best.eval.value;
  result.iterations = iterations;
  result.starts = starts;
  result.converged = best.converged;
  result.on_boundary = best.on_boundary;
  result.grad_norm = best.grad_norm;
  result.used_blocks = lik.used_blocks();
  result.dropped_blocks = lik.dropped_blocks();
  result.gamma_hat = lik.gamma(best.theta);
  result.std_errors = wald_std_errors(result.gamma_hat, obs.n, obs.h);
  return result;
}

Vector closed_form_linear(const ObservationRecord& obs, const BlockScheme& scheme,
                          const DriverSpec& driver) {
  check_compatible(obs, scheme);
  check_driver(obs, driver);
  if (!driver.affine_in_theta()) {
    throw ConfigError("driver", "closed form needs a driver that is affine in theta");
  }
  const int d_theta = driver.d_theta();
  const double span = static_cast<double>(scheme.c()) * obs.h;
  const Vector origin = Vector::Zero(d_theta);

  Matrix normal = Matrix::Zero(d_theta, d_theta);
  Vector rhs = Vector::Zero(d_theta);
  std::int64_t used = 0;
  for (std::int64_t l = 1; l < scheme.L(); ++l) {
    const RealizedBlockCov prev = realized_block_cov(obs, scheme, l - 1);
    if (prev.degenerate) continue;
    const auto k0 = scheme.anchor(l);
    const auto k1 = scheme.anchor(l + 1);
    const Vector x = obs.x_path.cols() > 0 ? Vector(obs.x_path.row(k0).transpose()) : Vector(0);
    const Vector y = obs.y_path.row(k0).transpose();
    const Vector increment = (obs.y_path.row(k1) - obs.y_path.row(k0)).transpose();
    const Matrix regressor = driver.jacobian(x, y, prev.z_hat, origin);
    const Vector offset = driver.eval(x, y, prev.z_hat, origin);

    const Matrix& lower = *prev.chol_factor;
    const Matrix white_g = lower.triangularView<Eigen::Lower>().solve(regressor);
    const Vector white_r =
        lower.triangularView<Eigen::Lower>().solve(Vector(increment - span * offset));
    normal.noalias() += span * white_g.transpose() * white_g;
    rhs.noalias() += white_g.transpose() * white_r;
    ++used;
  }
  if (used == 0) throw AllDegenerate("no usable blocks for the closed-form estimator");

  Eigen::LDLT<Matrix> ldlt(normal);
  const double scale = normal.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-13 * scale) {
    throw SingularSystem("normal matrix of the weighted least-squares problem is singular");
  }
  return ldlt.solve(rhs);
}

Matrix gamma_plugin(const ObservationRecord& obs, const BlockScheme& scheme,
                    const DriverSpec& driver, VectorCRef theta) {
  return QuasiLikelihood(obs, scheme, driver).gamma(theta);
}

}  // namespace ebsde
