#include "ebsde/sde_sim.hpp"

#include <cmath>
#include <utility>

#include "ebsde/errors.hpp"

namespace ebsde {

void ObservationRecord::validate() const {
  if (n < 1) throw ConfigError("n", "must be positive");
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h", "must be positive and finite");
  if (y_path.rows() != n + 1 || (x_path.cols() > 0 && x_path.rows() != n + 1)) {
    throw DimError("observation paths must have n+1 rows");
  }
  if (y_path.cols() < 1) throw DimError("observation record has no Y columns");
  if (!y_path.allFinite() || !x_path.allFinite()) {
    throw ConfigError("observations", "non-finite entries");
  }
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::vasicek_1d:
      return "vasicek_1d";
    case ScenarioKind::heston_2d:
      return "heston_2d";
    case ScenarioKind::constant_vol:
      return "constant_vol";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "vasicek_1d") return ScenarioKind::vasicek_1d;
  if (name == "heston_2d") return ScenarioKind::heston_2d;
  if (name == "constant_vol") return ScenarioKind::constant_vol;
  throw ConfigError("scenario.name", "unknown scenario '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (substeps < 1) throw ConfigError("scenario.substeps", "must be positive");
  if (kind != ScenarioKind::vasicek_1d) {
    if (volatility.rows() < 1 || volatility.cols() < volatility.rows()) {
      throw ConfigError("scenario.volatility", "need a d_y x d_w matrix with d_w >= d_y");
    }
    if (!volatility.allFinite()) throw ConfigError("scenario.volatility", "non-finite entries");
  }
  if (shared_noise && kind != ScenarioKind::vasicek_1d) {
    throw ConfigError("scenario.shared_noise", "only defined for vasicek_1d");
  }
  if (driver.d_x() != d_x() || driver.d_y() != d_y()) {
    throw ConfigError("driver", "dimensions of driver '" + driver.name() +
                                    "' do not match scenario '" + name() + "'");
  }
  if (theta0.size() != driver.d_theta()) {
    throw ConfigError("scenario.theta0", "length must equal the driver's d_theta");
  }
  if (y0.size() != d_y()) throw ConfigError("scenario.y0", "length must equal d_y");
  switch (kind) {
    case ScenarioKind::vasicek_1d:
      if (!(vasicek.a > 0.0)) throw ConfigError("scenario.factor.a", "must be positive");
      if (vasicek.sigma < 0.0) throw ConfigError("scenario.factor.sigma", "must be nonnegative");
      if (!(vol_offset > 0.0)) throw ConfigError("scenario.vol_offset", "must be positive");
      break;
    case ScenarioKind::heston_2d:
      if (!(cir.L > 0.0)) throw ConfigError("scenario.factor.L", "must be positive");
      if (!(cir.beta > 0.0)) throw ConfigError("scenario.factor.beta", "must be positive");
      if (cir.sigma < 0.0) throw ConfigError("scenario.factor.sigma", "must be nonnegative");
      if (cir.nu0 < 0.0) throw ConfigError("scenario.factor.nu0", "must be nonnegative");
      break;
    case ScenarioKind::constant_vol:
      break;
  }
}

Matrix heston_loading() {
  Matrix v(2, 2);
  v << 0.4, 0.0, 0.4, 0.4;
  return v;
}

ScenarioSpec vasicek_scenario(double theta0, VasicekParams params) {
  ScenarioSpec spec{.kind = ScenarioKind::vasicek_1d,
                    .driver = builtin_driver("vasicek_sqrt"),
                    .theta0 = Vector::Constant(1, theta0),
                    .y0 = Vector::Constant(1, 1.0),
                    .vasicek = params};
  return spec;
}

ScenarioSpec heston_scenario(Vector theta0, double mu, CirParams params) {
  ScenarioSpec spec{.kind = ScenarioKind::heston_2d,
                    .driver = builtin_driver("heston_price", {{"mu", mu}}),
                    .theta0 = std::move(theta0),
                    .y0 = Vector::Zero(2),
                    .cir = params,
                    .volatility = heston_loading()};
  return spec;
}

ScenarioSpec constant_vol_scenario(Matrix volatility, DriverSpec driver, Vector theta0) {
  const auto d_y = volatility.rows();
  ScenarioSpec spec{.kind = ScenarioKind::constant_vol,
                    .driver = std::move(driver),
                    .theta0 = std::move(theta0),
                    .y0 = Vector::Zero(d_y),
                    .volatility = std::move(volatility)};
  return spec;
}

std::vector<double> simulate_vasicek_exact(double a, double b, double sigma, double x0,
                                           std::int64_t n, double h, const NormalSource& draw) {
  if (!(a > 0.0)) throw ConfigError("a", "must be positive");
  if (!(h > 0.0)) throw ConfigError("h", "must be positive");
  if (sigma < 0.0) throw ConfigError("sigma", "must be nonnegative");
  if (n < 0) throw ConfigError("n", "must be nonnegative");

  const double decay = std::exp(-a * h);
  const double sd = sigma * std::sqrt(-std::expm1(-2.0 * a * h) / (2.0 * a));
  std::vector<double> path(static_cast<std::size_t>(n) + 1);
  path[0] = x0;
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    path[i + 1] = b + (path[i] - b) * decay + sd * draw();
  }
  return path;
}

std::vector<double> simulate_vasicek_exact(double a, double b, double sigma, double x0,
                                           std::int64_t n, double h, Rng& rng) {
  return simulate_vasicek_exact(a, b, sigma, x0, n, h, [&rng] { return rng.normal(); });
}

std::vector<double> simulate_cir_full_truncation(double L, double beta, double sigma, double nu0,
                                                 std::int64_t n, double h,
                                                 const NormalSource& draw) {
  if (!(L > 0.0)) throw ConfigError("L", "must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta", "must be positive");
  if (sigma < 0.0) throw ConfigError("sigma", "must be nonnegative");
  if (nu0 < 0.0) throw ConfigError("nu0", "must be nonnegative");
  if (!(h > 0.0)) throw ConfigError("h", "must be positive");
  if (n < 0) throw ConfigError("n", "must be nonnegative");

  const double sqrt_h = std::sqrt(h);
  std::vector<double> path(static_cast<std::size_t>(n) + 1);
  path[0] = nu0;
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double pos = std::max(path[i], 0.0);
    path[i + 1] = path[i] + L * (beta - pos) * h + sigma * std::sqrt(pos) * sqrt_h * draw();
  }
  return path;
}

std::vector<double> simulate_cir_full_truncation(double L, double beta, double sigma, double nu0,
                                                 std::int64_t n, double h, Rng& rng) {
  return simulate_cir_full_truncation(L, beta, sigma, nu0, n, h, [&rng] { return rng.normal(); });
}

ObservationRecord simulate_scenario(const ScenarioSpec& spec, std::int64_t n, double h,
                                    const NormalSource& factor_draw,
                                    const NormalSource& noise_draw, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("n", "must be positive");
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h", "must be positive and finite");

  const int d_x = spec.d_x();
  const int d_y = spec.d_y();
  const int d_w = spec.d_w();
  const std::int64_t steps = n * spec.substeps;
  const double dt = h / spec.substeps;
  const double sqrt_dt = std::sqrt(dt);

  // With shared noise the factor draws are replayed as the Y increments.
  std::vector<double> factor_xi;
  NormalSource recording = [&] {
    const double xi = factor_draw();
    factor_xi.push_back(xi);
    return xi;
  };
  const NormalSource& factor_source = spec.shared_noise ? recording : factor_draw;
  if (spec.shared_noise) factor_xi.reserve(static_cast<std::size_t>(steps));

  std::vector<double> factor;
  switch (spec.kind) {
    case ScenarioKind::vasicek_1d:
      factor = simulate_vasicek_exact(spec.vasicek.a, spec.vasicek.b, spec.vasicek.sigma,
                                      spec.vasicek.x0, steps, dt, factor_source);
      break;
    case ScenarioKind::heston_2d:
      factor = simulate_cir_full_truncation(spec.cir.L, spec.cir.beta, spec.cir.sigma,
                                            spec.cir.nu0, steps, dt, factor_source);
      break;
    case ScenarioKind::constant_vol:
      break;
  }

  ObservationRecord obs;
  obs.n = n;
  obs.h = h;
  obs.seed = seed;
  obs.scenario_name = spec.name();
  obs.x_path.resize(d_x == 0 ? 0 : n + 1, d_x);
  obs.y_path.resize(n + 1, d_y);

  Vector x(d_x);
  Vector y = spec.y0;
  Vector psi(d_y);
  Vector xi(d_w);
  Matrix vol = spec.kind == ScenarioKind::vasicek_1d ? Matrix(1, 1) : spec.volatility;
  Matrix z = vol * vol.transpose();

  for (std::int64_t i = 0; i <= steps; ++i) {
    if (d_x > 0) x[0] = factor[static_cast<std::size_t>(i)];
    if (i % spec.substeps == 0) {
      const std::int64_t row = i / spec.substeps;
      obs.y_path.row(row) = y.transpose();
      if (d_x > 0) obs.x_path.row(row) = x.transpose();
    }
    if (i == steps) break;

    if (spec.kind == ScenarioKind::vasicek_1d) {
      const double zz = std::abs(x[0]) + spec.vol_offset;
      vol(0, 0) = std::sqrt(zz);
      z(0, 0) = zz;
    }
    spec.driver.eval_into(x, y, z, spec.theta0, psi);
    if (spec.shared_noise) {
      xi[0] = factor_xi[static_cast<std::size_t>(i)];
    } else {
      for (int w = 0; w < d_w; ++w) xi[w] = noise_draw();
    }
    xi *= sqrt_dt;
    y += psi * dt;
    y.noalias() += vol * xi;
    if (!y.allFinite()) throw SimulationBlowup(i + 1, "non-finite Y in scenario " + spec.name());
  }
  if (d_x > 0 && !obs.x_path.allFinite()) {
    throw SimulationBlowup(steps, "non-finite factor path in scenario " + spec.name());
  }
  return obs;
}

ObservationRecord simulate_scenario(const ScenarioSpec& spec, std::int64_t n, double h,
                                    std::uint64_t seed) {
  Rng factor_rng(derive_seed(seed, {0}));
  Rng noise_rng(derive_seed(seed, {1}));
  return simulate_scenario(
      spec, n, h, [&factor_rng] { return factor_rng.normal(); },
      [&noise_rng] { return noise_rng.normal(); }, seed);
}

}  // namespace ebsde
