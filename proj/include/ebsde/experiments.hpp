#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ebsde/blocks_estimator.hpp"
#include "ebsde/drivers.hpp"
#include "ebsde/rates.hpp"
#include "ebsde/sde_sim.hpp"

namespace ebsde {

struct ExperimentConfig {
  ScenarioSpec scenario;
  ThetaBox theta_box;
  std::vector<std::int64_t> n_set;
  std::vector<std::pair<int, int>> lk_pairs;  // (l, k)
  int reps = 0;
  std::uint64_t base_seed = 0;
  bool allow_invalid_rates = false;
  EstimatorOptions estimator{};

  /// Throws ConfigError naming the offending entry.
  void validate() const;
};

struct ReplicationResult {
  std::int64_t n = 0;
  int l = 0;
  int k = 0;
  int rep_index = 0;
  double h = 0.0;
  std::int64_t c = 0;
  Vector theta_hat;
  bool converged = false;
  Vector std_errors;
  Matrix gamma_hat;
  std::uint64_t seed = 0;
  std::string error;  // non-empty when the replication failed
};

/// Fixed 64-bit mix of (base_seed, n, l, k, rep).
std::uint64_t replication_seed(std::uint64_t base_seed, std::int64_t n, int l, int k, int rep);

/// One simulate-and-estimate cycle; failures are captured in the result.
ReplicationResult run_replication(const ExperimentConfig& config, std::int64_t n, int l, int k,
                                  int rep);

/// All (n, (l, k), rep) cells, ordered by (n, l, k, rep). Runs on up to
/// `threads` workers (0: hardware concurrency); output does not depend on it.
std::vector<ReplicationResult> run_replications(const ExperimentConfig& config,
                                                unsigned threads = 0);

/// Mean relative error per (k, l), laid out with rows k = 1..18 and columns
/// l = 13..19. Cells outside the admissible rate set stay empty.
class ErrorTable {
 public:
  static constexpr int kRows = kGridMaxK;
  static constexpr int kCols = kGridMaxL - kGridMinL + 1;

  std::optional<double> at(int k, int l) const;
  void set(int k, int l, double value);
  std::string to_csv() const;

 private:
  std::array<std::array<std::optional<double>, kCols>, kRows> cells_{};
};

/// Cell (k, l) = mean over n of the per-n mean of |theta_hat - theta0| / |theta0|.
/// Scalar theta only; throws MetricUndefined when theta0 == 0.
ErrorTable error_table(const std::vector<ReplicationResult>& results, double theta0);

/// MAE(n) = mean over replications and components of |theta_hat_j - theta0_j|.
std::vector<std::pair<std::int64_t, double>> mae_curve(
    const std::vector<ReplicationResult>& results, VectorCRef theta0);

struct NormalitySummary {
  Vector mean;
  Vector sd;  // sample convention, n - 1 denominator
  Vector ks_stat;
  int reps = 0;
};

/// Standardizes s_i = gamma^{1/2} sqrt(n h) (theta_hat_i - theta0) over the
/// finite results recorded at this (n, h) and summarizes each component.
/// Throws DegenerateGamma when gamma is not symmetric positive definite.
NormalitySummary normality_summary(const std::vector<ReplicationResult>& results,
                                   MatrixCRef gamma, VectorCRef theta0, std::int64_t n, double h);

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and N(0, 1).
double ks_statistic_normal(std::vector<double> samples);

std::string replications_csv(const std::vector<ReplicationResult>& results);
std::string mae_curve_csv(const std::vector<std::pair<std::int64_t, double>>& curve);

struct NormalityRow {
  std::int64_t n;
  int l;
  int k;
  NormalitySummary summary;
};
std::string normality_csv(const std::vector<NormalityRow>& rows);

}  // namespace ebsde
