#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ebsde/drivers.hpp"
#include "ebsde/linalg.hpp"
#include "ebsde/rng.hpp"

namespace ebsde {

/// Discrete observations (X_{kh}, Y_{kh}), k = 0..n, on a uniform grid.
struct ObservationRecord {
  std::int64_t n = 0;
  double h = 0.0;
  PathMatrix x_path;  // (n+1) x d_x, zero columns when there is no factor
  PathMatrix y_path;  // (n+1) x d_y
  std::uint64_t seed = 0;
  std::string scenario_name;

  int d_x() const noexcept { return static_cast<int>(x_path.cols()); }
  int d_y() const noexcept { return static_cast<int>(y_path.cols()); }

  /// Throws DimError on a shape mismatch and ConfigError on bad n, h or non-finite entries.
  void validate() const;
};

enum class ScenarioKind { vasicek_1d, heston_2d, constant_vol };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct VasicekParams {
  double a = 2.0;
  double b = 0.3;
  double sigma = 0.025;
  double x0 = 0.3;
};

struct CirParams {
  double L = 1.0;
  double beta = 1.5;
  double sigma = 0.5;
  double nu0 = 1.5;
};

/// Data-generating process. The factor is Vasicek (vasicek_1d), CIR
/// (heston_2d) or absent (constant_vol); Y follows
///   dY = psi(X, Y, V V^T, theta0) dt + V dW.
struct ScenarioSpec {
  ScenarioKind kind;
  DriverSpec driver;
  Vector theta0;
  Vector y0;
  VasicekParams vasicek{};
  CirParams cir{};
  // vasicek_1d: V = sqrt(|x| + vol_offset).
  double vol_offset = 0.1;
  // heston_2d and constant_vol: constant d_y x d_w loading.
  Matrix volatility{};
  int substeps = 1;
  // vasicek_1d only: drive X and Y with the same Brownian motion.
  bool shared_noise = false;

  std::string name() const { return to_string(kind); }
  int d_x() const noexcept { return kind == ScenarioKind::constant_vol ? 0 : 1; }
  int d_y() const noexcept { return kind == ScenarioKind::vasicek_1d ? 1 : static_cast<int>(volatility.rows()); }
  int d_w() const noexcept { return kind == ScenarioKind::vasicek_1d ? 1 : static_cast<int>(volatility.cols()); }

  void validate() const;
};

/// Vasicek factor with dY = theta sqrt(|X| + 0.1) dt + sqrt(|X| + 0.1) dW, Y0 = 1.
ScenarioSpec vasicek_scenario(double theta0 = 1.0, VasicekParams params = {});

/// CIR variance with the two-dimensional price driver, V = [[0.4, 0], [0.4, 0.4]].
ScenarioSpec heston_scenario(Vector theta0, double mu = 0.0, CirParams params = {});

/// No factor and a constant loading V; the driver must have d_x = 0.
ScenarioSpec constant_vol_scenario(Matrix volatility, DriverSpec driver, Vector theta0);

/// Default loading of the two-dimensional price example.
Matrix heston_loading();

using NormalSource = std::function<double()>;

/// Exact Gaussian transitions of dX = a (b - X) dt + sigma dW. Returns n+1 values.
std::vector<double> simulate_vasicek_exact(double a, double b, double sigma, double x0,
                                           std::int64_t n, double h, Rng& rng);
std::vector<double> simulate_vasicek_exact(double a, double b, double sigma, double x0,
                                           std::int64_t n, double h, const NormalSource& draw);

/// Full-truncation Euler for dnu = L (beta - nu) dt + sigma sqrt(nu) dW.
std::vector<double> simulate_cir_full_truncation(double L, double beta, double sigma, double nu0,
                                                 std::int64_t n, double h, Rng& rng);
std::vector<double> simulate_cir_full_truncation(double L, double beta, double sigma, double nu0,
                                                 std::int64_t n, double h,
                                                 const NormalSource& draw);

/// Pure function of (spec, n, h, seed). The factor and the Y noise use
/// separate streams derived from the seed.
ObservationRecord simulate_scenario(const ScenarioSpec& spec, std::int64_t n, double h,
                                    std::uint64_t seed);

/// Same integration with caller-supplied normal draws for the factor and for Y.
ObservationRecord simulate_scenario(const ScenarioSpec& spec, std::int64_t n, double h,
                                    const NormalSource& factor_draw,
                                    const NormalSource& noise_draw, std::uint64_t seed = 0);

}  // namespace ebsde
