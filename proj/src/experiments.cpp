#include "ebsde/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "ebsde/errors.hpp"

namespace ebsde {

namespace {

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

void ExperimentConfig::validate() const {
  scenario.validate();
  if (theta_box.dim() != scenario.driver.d_theta()) {
    throw ConfigError("estimator.lower", "theta box dimension differs from the driver's d_theta");
  }
  if (!theta_box.contains(scenario.theta0)) {
    throw ConfigError("scenario.theta0", "true parameter lies outside the theta box");
  }
  if (n_set.empty()) throw ConfigError("experiment.n_set", "must not be empty");
  for (auto n : n_set) {
    if (n < 10) throw ConfigError("experiment.n_set", "every n must be >= 10");
  }
  if (lk_pairs.empty()) throw ConfigError("rates.pairs", "must not be empty");
  for (const auto& [l, k] : lk_pairs) {
    if (l < 1 || k < 1) throw ConfigError("rates.pairs", "l and k must be positive");
    if (!allow_invalid_rates && !check_rate_conditions(l, k).valid) {
      throw ConfigError("rates.pairs", "(l=" + std::to_string(l) + ", k=" + std::to_string(k) +
                                           ") violates the rate conditions");
    }
  }
  if (reps < 0) throw ConfigError("experiment.reps", "must be nonnegative");
}

std::uint64_t replication_seed(std::uint64_t base_seed, std::int64_t n, int l, int k, int rep) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(l),
                                 static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep)});
}

ReplicationResult run_replication(const ExperimentConfig& config, std::int64_t n, int l, int k,
                                  int rep) {
  const int d_theta = config.scenario.driver.d_theta();
  ReplicationResult out;
  out.n = n;
  out.l = l;
  out.k = k;
  out.rep_index = rep;
  out.seed = replication_seed(config.base_seed, n, l, k, rep);
  out.theta_hat = Vector::Constant(d_theta, std::numeric_limits<double>::quiet_NaN());
  out.std_errors = out.theta_hat;
  out.gamma_hat = Matrix::Constant(d_theta, d_theta, std::numeric_limits<double>::quiet_NaN());

  const RateSchedule rates = schedule(n, l, k);
  out.h = rates.h;
  out.c = rates.c;
  try {
    const ObservationRecord obs = simulate_scenario(config.scenario, n, rates.h, out.seed);
    const BlockScheme scheme = build_blocks(n, rates.c);
    EstimationResult est =
        maximize_quasi_lik(obs, scheme, config.scenario.driver, config.theta_box, config.estimator);
    out.theta_hat = std::move(est.theta_hat);
    out.std_errors = std::move(est.std_errors);
    out.gamma_hat = std::move(est.gamma_hat);
    out.converged = est.converged;
  } catch (const Error& e) {
    out.converged = false;
    out.error = e.what();
  }
  return out;
}

std::vector<ReplicationResult> run_replications(const ExperimentConfig& config, unsigned threads) {
  config.validate();
  std::vector<std::int64_t> ns = config.n_set;
  std::vector<std::pair<int, int>> pairs = config.lk_pairs;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  struct Cell {
    std::int64_t n;
    int l;
    int k;
    int rep;
  };
  std::vector<Cell> cells;
  cells.reserve(ns.size() * pairs.size() * static_cast<std::size_t>(config.reps));
  for (auto n : ns) {
    for (const auto& [l, k] : pairs) {
      for (int rep = 0; rep < config.reps; ++rep) cells.push_back({n, l, k, rep});
    }
  }

  std::vector<ReplicationResult> results(cells.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, cells.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      results[i] = run_replication(config, c.n, c.l, c.k, c.rep);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

std::optional<double> ErrorTable::at(int k, int l) const {
  if (k < 1 || k > kRows || l < kGridMinL || l > kGridMaxL) return std::nullopt;
  return cells_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(l - kGridMinL)];
}

void ErrorTable::set(int k, int l, double value) {
  if (k < 1 || k > kRows || l < kGridMinL || l > kGridMaxL) {
    throw IndexError("error table cell (k=" + std::to_string(k) + ", l=" + std::to_string(l) +
                     ") outside the grid");
  }
  cells_[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(l - kGridMinL)] = value;
}

std::string ErrorTable::to_csv() const {
  std::string csv = "k";
  for (int l = kGridMinL; l <= kGridMaxL; ++l) csv += "," + std::to_string(l);
  csv += "\n";
  for (int k = 1; k <= kRows; ++k) {
    csv += std::to_string(k);
    for (int l = kGridMinL; l <= kGridMaxL; ++l) {
      csv += ",";
      if (auto v = at(k, l)) csv += fmt_double(*v);
    }
    csv += "\n";
  }
  return csv;
}

ErrorTable error_table(const std::vector<ReplicationResult>& results, double theta0) {
  if (theta0 == 0.0) throw MetricUndefined("relative error is undefined for theta0 = 0");
  // (l, k) -> n -> (sum, count)
  std::map<std::pair<int, int>, std::map<std::int64_t, std::pair<double, int>>> acc;
  for (const auto& r : results) {
    if (r.theta_hat.size() != 1) throw DimError("error table needs a scalar parameter");
    if (!std::isfinite(r.theta_hat[0])) continue;
    auto& slot = acc[{r.l, r.k}][r.n];
    slot.first += std::abs(r.theta_hat[0] - theta0) / std::abs(theta0);
    slot.second += 1;
  }
  ErrorTable table;
  for (const auto& [lk, per_n] : acc) {
    const auto [l, k] = lk;
    if (!check_rate_conditions(l, k).valid || k > ErrorTable::kRows) continue;
    double total = 0.0;
    for (const auto& [n, sum_count] : per_n) total += sum_count.first / sum_count.second;
    table.set(k, l, total / static_cast<double>(per_n.size()));
  }
  return table;
}

std::vector<std::pair<std::int64_t, double>> mae_curve(
    const std::vector<ReplicationResult>& results, VectorCRef theta0) {
  std::map<std::int64_t, std::pair<double, std::int64_t>> acc;
  for (const auto& r : results) {
    if (r.theta_hat.size() != theta0.size()) throw DimError("theta0 length differs from estimates");
    if (!r.theta_hat.allFinite()) continue;
    auto& slot = acc[r.n];
    slot.first += (r.theta_hat - theta0).cwiseAbs().sum();
    slot.second += r.theta_hat.size();
  }
  std::vector<std::pair<std::int64_t, double>> curve;
  curve.reserve(acc.size());
  for (const auto& [n, sum_count] : acc) {
    curve.emplace_back(n, sum_count.first / static_cast<double>(sum_count.second));
  }
  return curve;
}

double ks_statistic_normal(std::vector<double> samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(samples.begin(), samples.end());
  const auto count = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-samples[i] / std::sqrt(2.0));
    d = std::max(d, static_cast<double>(i + 1) / count - cdf);
    d = std::max(d, cdf - static_cast<double>(i) / count);
  }
  return d;
}

NormalitySummary normality_summary(const std::vector<ReplicationResult>& results,
                                   MatrixCRef gamma, VectorCRef theta0, std::int64_t n, double h) {
  const auto d = theta0.size();
  if (gamma.rows() != d || gamma.cols() != d) throw DimError("gamma must be d_theta x d_theta");
  if (!gamma.isApprox(gamma.transpose(), 1e-12)) throw DegenerateGamma("gamma is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gamma);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
    throw DegenerateGamma("gamma is not positive definite");
  }
  const Matrix root = eig.operatorSqrt();
  const double scale = std::sqrt(static_cast<double>(n) * h);

  std::vector<Vector> standardized;
  for (const auto& r : results) {
    if (r.n != n || std::abs(r.h - h) > 1e-12 * h || !r.theta_hat.allFinite()) continue;
    if (r.theta_hat.size() != d) throw DimError("theta0 length differs from estimates");
    standardized.push_back(scale * (root * (r.theta_hat - theta0)));
  }

  NormalitySummary out;
  out.reps = static_cast<int>(standardized.size());
  out.mean = Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
  out.sd = out.mean;
  out.ks_stat = out.mean;
  if (standardized.empty()) return out;

  const auto count = static_cast<double>(standardized.size());
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> column;
    column.reserve(standardized.size());
    for (const auto& s : standardized) column.push_back(s[j]);
    const double mean = std::accumulate(column.begin(), column.end(), 0.0) / count;
    double ss = 0.0;
    for (double v : column) ss += (v - mean) * (v - mean);
    out.mean[j] = mean;
    out.sd[j] = column.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    out.ks_stat[j] = ks_statistic_normal(std::move(column));
  }
  return out;
}

std::string replications_csv(const std::vector<ReplicationResult>& results) {
  const Eigen::Index d = results.empty() ? 0 : results.front().theta_hat.size();
  std::string csv = "n,l,k,rep,seed,h,c,converged";
  for (Eigen::Index j = 1; j <= d; ++j) csv += fmt::format(",theta_{}", j);
  for (Eigen::Index j = 1; j <= d; ++j) csv += fmt::format(",se_{}", j);
  csv += ",error\n";
  for (const auto& r : results) {
    csv += fmt::format("{},{},{},{},{},{},{},{}", r.n, r.l, r.k, r.rep_index, r.seed,
                       fmt_double(r.h), r.c, r.converged ? 1 : 0);
    for (Eigen::Index j = 0; j < d; ++j) csv += "," + fmt_double(r.theta_hat[j]);
    for (Eigen::Index j = 0; j < d; ++j) csv += "," + fmt_double(r.std_errors[j]);
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    csv += "," + error + "\n";
  }
  return csv;
}

std::string mae_curve_csv(const std::vector<std::pair<std::int64_t, double>>& curve) {
  std::string csv = "n,mae\n";
  for (const auto& [n, mae] : curve) csv += fmt::format("{},{}\n", n, fmt_double(mae));
  return csv;
}

std::string normality_csv(const std::vector<NormalityRow>& rows) {
  std::string csv = "n,l,k,component,mean,sd,ks_stat,reps\n";
  for (const auto& row : rows) {
    for (Eigen::Index j = 0; j < row.summary.mean.size(); ++j) {
      csv += fmt::format("{},{},{},{},{},{},{},{}\n", row.n, row.l, row.k, j + 1,
                         fmt_double(row.summary.mean[j]), fmt_double(row.summary.sd[j]),
                         fmt_double(row.summary.ks_stat[j]), row.summary.reps);
    }
  }
  return csv;
}

}  // namespace ebsde
