#include <gtest/gtest.h>

#include <cmath>

#include "ebsde/blocks_estimator.hpp"
#include "ebsde/errors.hpp"
#include "ebsde/rates.hpp"

using namespace ebsde;

namespace {

// Scalar record with Y0 = 0 and the given increments; X is zero unless given.
ObservationRecord scalar_record(double h, const std::vector<double>& dy, std::vector<double> x = {}) {
  ObservationRecord obs;
  obs.n = static_cast<std::int64_t>(dy.size());
  obs.h = h;
  obs.y_path = PathMatrix::Zero(obs.n + 1, 1);
  for (std::int64_t k = 0; k < obs.n; ++k) obs.y_path(k + 1, 0) = obs.y_path(k, 0) + dy[k];
  if (x.empty()) x.assign(dy.size() + 1, 0.0);
  obs.x_path = PathMatrix(obs.n + 1, 1);
  for (std::int64_t k = 0; k <= obs.n; ++k) obs.x_path(k, 0) = x[k];
  return obs;
}

DriverSpec scalar_theta() {
  return linear_driver("theta", 1, 1, 1, [](VectorCRef, VectorCRef, MatrixCRef) { return Matrix::Ones(1, 1); });
}

// Increments for the single-summand example: block 0 gives Zhat = 4, block 1 moves Y by 0.2.
ObservationRecord single_term_record() {
  const double a = std::sqrt(0.2);
  return scalar_record(0.05, {a, -a, 0.1, 0.1});
}

ObservationRecord oscillating_record(std::int64_t n, double h, double a) {
  std::vector<double> dy(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < dy.size(); ++k) dy[k] = (k % 2 == 0) ? a : -a;
  return scalar_record(h, dy);
}

}  // namespace

TEST(BuildBlocks, IndexArithmetic) {
  const BlockScheme s = build_blocks(100, 10);
  EXPECT_EQ(s.L(), 10);
  EXPECT_EQ(s.anchor(3), 30);
  EXPECT_EQ(s.within(3, 7), 37);
  EXPECT_EQ(build_blocks(105, 10).L(), 10);
  EXPECT_THROW(build_blocks(15, 10), InsufficientData);
  EXPECT_THROW(build_blocks(100, 0), ConfigError);
}

TEST(RealizedBlockCov, ScalarExample) {
  const ObservationRecord obs = scalar_record(0.5, {1.0, -1.0, 0.3, 0.4});
  const RealizedBlockCov r = realized_block_cov(obs, build_blocks(4, 2), 0);
  EXPECT_DOUBLE_EQ(r.z_hat(0, 0), 2.0);
  EXPECT_FALSE(r.degenerate);
  ASSERT_TRUE(r.chol_factor.has_value());
  EXPECT_NEAR((*r.chol_factor)(0, 0), std::sqrt(2.0), 1e-15);
}

TEST(RealizedBlockCov, TwoDimensionalExamples) {
  ObservationRecord obs;
  obs.n = 4;
  obs.h = 1.0;
  obs.x_path = PathMatrix(5, 0);
  obs.y_path = PathMatrix(5, 2);
  obs.y_path << 0, 0, 1, 0, 1, 1, 2, 1, 2, 3;
  const RealizedBlockCov r = realized_block_cov(obs, build_blocks(4, 2), 0);
  EXPECT_EQ(r.z_hat, Matrix::Identity(2, 2) * 0.5);
  EXPECT_FALSE(r.degenerate);

  const RealizedBlockCov rank_one = realized_block_cov(obs, build_blocks(4, 1), 2);
  EXPECT_TRUE(rank_one.degenerate);
  EXPECT_FALSE(rank_one.chol_factor.has_value());
  EXPECT_THROW(realized_block_cov(obs, build_blocks(4, 2), 2), IndexError);
  EXPECT_THROW(realized_block_cov(obs, build_blocks(4, 2), -1), IndexError);
}

TEST(RealizedBlockCov, SymmetricAndPsd) {
  const ObservationRecord obs = simulate_scenario(heston_scenario(Vector::Constant(2, 5.0)), 5000, 1e-3, 4);
  const BlockScheme s = build_blocks(obs.n, 10);
  for (std::int64_t l = 0; l < s.L(); ++l) {
    const Matrix z = realized_block_cov(obs, s, l).z_hat;
    EXPECT_EQ(z, z.transpose());
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(z).eigenvalues().minCoeff();
    EXPECT_GE(min_eig, -1e-14 * z.trace());
  }
}

TEST(QuasiLik, SingleSummandValue) {
  const ObservationRecord obs = single_term_record();
  const BlockScheme s = build_blocks(4, 2);
  EXPECT_NEAR(realized_block_cov(obs, s, 0).z_hat(0, 0), 4.0, 1e-14);
  const QuasiLikEval e = quasi_loglik(obs, s, scalar_theta(), Vector::Ones(1), true);
  EXPECT_NEAR(e.value, -0.0125, 1e-15);
  EXPECT_EQ(e.used_blocks, 1);
  EXPECT_EQ(e.dropped_blocks, 0);
  // gradient = J Zhat^{-1} r = (0.2 - 0.1) / 4, hessian = -c h / Zhat
  EXPECT_NEAR(e.gradient[0], 0.025, 1e-15);
  EXPECT_NEAR(e.hessian(0, 0), -0.025, 1e-15);
}

TEST(QuasiLik, ZeroResidualsGiveZero) {
  const ObservationRecord obs = oscillating_record(40, 0.01, 0.1);
  const DriverSpec zero = builtin_driver("zero", {{"d_x", 1}});
  const QuasiLikEval e = quasi_loglik(obs, build_blocks(40, 2), zero, Vector::Zero(1), true);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.used_blocks, 19);
}

TEST(QuasiLik, AllDegenerate) {
  const ObservationRecord obs = scalar_record(0.1, {0.0, 0.0, 0.5, -0.2});
  EXPECT_THROW(quasi_loglik(obs, build_blocks(4, 2), scalar_theta(), Vector::Ones(1), false), AllDegenerate);
}

TEST(QuasiLik, DimensionMismatch) {
  const ObservationRecord obs = single_term_record();
  const DriverSpec heston = builtin_driver("heston_price", {{"mu", 0.0}});
  EXPECT_THROW(quasi_loglik(obs, build_blocks(4, 2), heston, Vector::Ones(2), false), DimError);
  EXPECT_THROW(quasi_loglik(obs, build_blocks(4, 2), scalar_theta(), Vector::Ones(2), false), DimError);
}

TEST(QuasiLik, DegenerateBlocksContributeNothing) {
  // Blocks 2 and 5 are flat, so the terms l = 3 and l = 6 are dropped.
  const std::int64_t c = 4;
  const std::int64_t L = 8;
  const double h = 0.02;
  Rng rng(12);
  std::vector<double> dy(static_cast<std::size_t>(c * L));
  std::vector<double> x(dy.size() + 1);
  for (auto& v : x) v = 0.5 + rng.uniform();
  for (std::size_t k = 0; k < dy.size(); ++k) {
    const std::int64_t block = static_cast<std::int64_t>(k) / c;
    dy[k] = (block == 2 || block == 5) ? 0.0 : 0.3 * rng.normal();
  }
  const ObservationRecord obs = scalar_record(h, dy, x);
  const BlockScheme s = build_blocks(obs.n, c);
  const DriverSpec d = builtin_driver("vasicek_sqrt");
  const Vector theta = Vector::Constant(1, 0.7);

  double expected = 0.0;
  for (std::int64_t l = 1; l < L; ++l) {
    if (l == 3 || l == 6) continue;
    double z = 0.0;
    for (std::int64_t m = 0; m < c; ++m) z += dy[(l - 1) * c + m] * dy[(l - 1) * c + m];
    z /= c * h;
    const double delta = obs.y_path((l + 1) * c, 0) - obs.y_path(l * c, 0);
    const double psi = 0.7 * std::sqrt(std::abs(x[l * c]) + 0.1);
    const double r = delta - c * h * psi;
    expected += -0.5 * r * r / (z * c * h);
  }
  const QuasiLikEval e = quasi_loglik(obs, s, d, theta, false);
  EXPECT_NEAR(e.value, expected, 1e-12 * std::abs(expected));
  EXPECT_EQ(e.dropped_blocks, 2);
  EXPECT_EQ(e.used_blocks + e.dropped_blocks, L - 1);
}

TEST(QuasiLik, GradientMatchesFiniteDifferences) {
  Rng rng(77);
  const ObservationRecord vas = simulate_scenario(vasicek_scenario(), 20000, 1e-3, 21);
  const ObservationRecord hes = simulate_scenario(heston_scenario(Vector::Constant(2, 5.0), -0.2), 20000, 1e-3, 22);
  const QuasiLikelihood qv(vas, build_blocks(vas.n, 20), builtin_driver("vasicek_sqrt"));
  const QuasiLikelihood qh(hes, build_blocks(hes.n, 20), builtin_driver("heston_price", {{"mu", -0.2}}));
  for (const QuasiLikelihood* q : {&qv, &qh}) {
    const int d = q->driver().d_theta();
    for (int trial = 0; trial < 20; ++trial) {
      Vector theta(d);
      for (int j = 0; j < d; ++j) theta[j] = -8.0 + 16.0 * rng.uniform();
      const QuasiLikEval e = q->evaluate(theta, true);
      for (int j = 0; j < d; ++j) {
        const double step = 1e-5 * (1.0 + std::abs(theta[j]));
        Vector up = theta, down = theta;
        up[j] += step;
        down[j] -= step;
        const double fd = (q->value(up) - q->value(down)) / (2 * step);
        EXPECT_LE(std::abs(fd - e.gradient[j]), 1e-5 * std::max(1.0, std::abs(e.gradient[j])));
      }
      EXPECT_LE((e.hessian - e.hessian.transpose()).cwiseAbs().maxCoeff(),
                1e-10 * e.hessian.cwiseAbs().maxCoeff());
    }
  }
}

TEST(QuasiLik, ConcaveForLinearDrivers) {
  const ObservationRecord obs = simulate_scenario(heston_scenario(Vector::Constant(2, 5.0)), 10000, 1e-3, 9);
  const DriverSpec d = builtin_driver("heston_price", {{"mu", 0.0}});
  ASSERT_TRUE(d.affine_in_theta());
  const QuasiLikelihood q(obs, build_blocks(obs.n, 10), d);
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const Vector theta = Vector::Constant(2, -10.0) + 20.0 * Vector{{rng.uniform(), rng.uniform()}};
    const Matrix hess = q.evaluate(theta, true).hessian;
    EXPECT_LE(Eigen::SelfAdjointEigenSolver<Matrix>(hess).eigenvalues().maxCoeff(), 0.0);
  }
}

TEST(Estimator, SingleSummandEstimate) {
  const ObservationRecord obs = single_term_record();
  const BlockScheme s = build_blocks(4, 2);
  const ThetaBox box(Vector::Constant(1, -10.0), Vector::Constant(1, 10.0));
  const EstimationResult r = maximize_quasi_lik(obs, s, scalar_theta(), box);
  EXPECT_NEAR(r.theta_hat[0], 2.0, 1e-12);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.on_boundary);
  EXPECT_NEAR(closed_form_linear(obs, s, scalar_theta())[0], 2.0, 1e-14);
}

TEST(Estimator, ClosedFormWithNoBlockMovementIsZero) {
  const ObservationRecord obs = oscillating_record(60, 0.01, 0.1);
  EXPECT_EQ(closed_form_linear(obs, build_blocks(60, 4), scalar_theta())[0], 0.0);
}

TEST(Estimator, ClosedFormSingularSystem) {
  const DriverSpec flat = linear_driver("flat", 1, 1, 1, [](VectorCRef, VectorCRef, MatrixCRef) { return Matrix::Zero(1, 1); });
  const ObservationRecord obs = oscillating_record(60, 0.01, 0.1);
  EXPECT_THROW(closed_form_linear(obs, build_blocks(60, 4), flat), SingularSystem);
}

TEST(Estimator, ClosedFormRequiresAffineDriver) {
  DriverSpec::Traits traits{.name = "square", .d_x = 1, .d_y = 1, .d_theta = 1};
  const DriverSpec square(traits, [](VectorCRef, VectorCRef, MatrixCRef, VectorCRef th, VectorRef out) {
    out[0] = th[0] * th[0];
  });
  const ObservationRecord obs = oscillating_record(60, 0.01, 0.1);
  EXPECT_THROW(closed_form_linear(obs, build_blocks(60, 4), square), ConfigError);
}

TEST(Estimator, MatchesClosedFormOnSimulatedData) {
  const ObservationRecord obs = simulate_scenario(heston_scenario(Vector::Constant(2, 5.0)), 20000, 1e-3, 31);
  const BlockScheme s = build_blocks(obs.n, 12);
  const DriverSpec d = builtin_driver("heston_price", {{"mu", 0.0}});
  const ThetaBox box(Vector::Constant(2, -50.0), Vector::Constant(2, 50.0));
  const EstimationResult r = maximize_quasi_lik(obs, s, d, box);
  const Vector oracle = closed_form_linear(obs, s, d);
  EXPECT_LE((r.theta_hat - oracle).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(r.converged);
}

TEST(Estimator, BoundaryMaximizerIsFlagged) {
  const ObservationRecord obs = single_term_record();
  const ThetaBox box(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0));
  const EstimationResult r = maximize_quasi_lik(obs, build_blocks(4, 2), scalar_theta(), box);
  EXPECT_DOUBLE_EQ(r.theta_hat[0], 1.0);
  EXPECT_TRUE(r.on_boundary);
  EXPECT_TRUE(r.converged);
}

TEST(Estimator, MultiStartEscapesStationaryCenter) {
  // psi = theta^2 has a stationary minimum of -H at theta = 0, the box center.
  DriverSpec::Traits traits{.name = "square", .d_x = 1, .d_y = 1, .d_theta = 1};
  const DriverSpec square(traits, [](VectorCRef, VectorCRef, MatrixCRef, VectorCRef th, VectorRef out) {
    out[0] = th[0] * th[0];
  });
  const ObservationRecord obs = single_term_record();
  const ThetaBox box(Vector::Constant(1, -3.0), Vector::Constant(1, 3.0));
  const EstimationResult r = maximize_quasi_lik(obs, build_blocks(4, 2), square, box);
  EXPECT_GT(r.starts, 1);
  EXPECT_NEAR(std::abs(r.theta_hat[0]), std::sqrt(2.0), 1e-8);
  EXPECT_NEAR(r.h_value, 0.0, 1e-15);
}

TEST(Estimator, RejectsBoxOfWrongDimension) {
  const ObservationRecord obs = single_term_record();
  const ThetaBox box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
  EXPECT_THROW(maximize_quasi_lik(obs, build_blocks(4, 2), scalar_theta(), box), DimError);
}

TEST(Estimator, VasicekRecoversTheta) {
  const std::int64_t n = 100000;
  const RateSchedule rs = schedule(n, 13, 4);
  const ObservationRecord obs = simulate_scenario(vasicek_scenario(1.0), n, rs.h, 2024);
  const ThetaBox box(Vector::Constant(1, -10.0), Vector::Constant(1, 10.0));
  const EstimationResult r = maximize_quasi_lik(obs, build_blocks(n, rs.c), builtin_driver("vasicek_sqrt"), box);
  EXPECT_LE(std::abs(r.theta_hat[0] - 1.0), 0.2);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(std::isfinite(r.std_errors[0]));
}

TEST(Gamma, ConstantJacobianExample) {
  // Every block oscillates by +-1 with h = 0.5, c = 2, so every Zhat is 2.
  const ObservationRecord obs = oscillating_record(20, 0.5, 1.0);
  const BlockScheme s = build_blocks(20, 2);
  EXPECT_DOUBLE_EQ(realized_block_cov(obs, s, 4).z_hat(0, 0), 2.0);
  const Matrix g = gamma_plugin(obs, s, scalar_theta(), Vector::Constant(1, 3.0));
  EXPECT_DOUBLE_EQ(g(0, 0), 0.5);
}

TEST(Gamma, WaldStandardErrors) {
  const Vector se = wald_std_errors(Matrix::Constant(1, 1, 4.0), 100, 0.01);
  EXPECT_DOUBLE_EQ(se[0], 0.5);
  const Vector bad = wald_std_errors(Matrix::Zero(2, 2), 100, 0.01);
  EXPECT_TRUE(std::isnan(bad[0]) && std::isnan(bad[1]));
}

TEST(Consistency, ZhatErrorShrinksWithBlockLength) {
  const Matrix vol = heston_loading();
  const Matrix target = vol * vol.transpose();
  const ScenarioSpec spec = constant_vol_scenario(vol, builtin_driver("zero", {{"d_y", 2}}), Vector::Zero(1));
  const ObservationRecord obs = simulate_scenario(spec, 100000, 1e-3, 5);
  std::vector<double> errors;
  for (std::int64_t c : {10, 50, 200}) {
    const BlockScheme s = build_blocks(obs.n, c);
    double total = 0;
    for (std::int64_t l = 0; l < s.L(); ++l) total += (realized_block_cov(obs, s, l).z_hat - target).norm();
    errors.push_back(total / static_cast<double>(s.L()));
  }
  EXPECT_GT(errors[0], errors[1]);
  EXPECT_GT(errors[1], errors[2]);
}
