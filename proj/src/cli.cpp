#include "ebsde/cli.hpp"

#include <filesystem>
#include <ostream>
#include <thread>

#include "CLI11.hpp"

#include "ebsde/config.hpp"
#include "ebsde/errors.hpp"
#include "ebsde/experiments.hpp"
#include "ebsde/io.hpp"
#include "ebsde/rates.hpp"

namespace ebsde {

namespace {

namespace fs = std::filesystem;

struct Invocation {
  std::string config_path;
  std::string data_path;
  std::string out_dir = "out";
  unsigned threads = 0;
  std::vector<std::string> overrides;
};

Json load_effective_config(const Invocation& inv, std::vector<std::string>& notes) {
  if (inv.config_path.empty()) throw ConfigError("--config", "required for this subcommand");
  Json config = load_config(inv.config_path);
  for (const auto& assignment : inv.overrides) apply_override(config, assignment);
  return normalize_config(config, &notes);
}

void write_meta(const fs::path& dir, const std::string& subcommand, const Json& config,
                const std::vector<std::string>& notes) {
  Json meta = {{"tool", "ebsde"},
               {"version", kVersion},
               {"subcommand", subcommand},
               {"sd_convention", "sample (n-1 denominator)"},
               {"notes", notes},
               {"config", config}};
  write_file_atomic(dir / "run_meta.json", meta.dump(2) + "\n");
}

const Json* first_pair(const Json& config) {
  if (!config.contains("rates") || !config["rates"].contains("pairs")) return nullptr;
  const Json& pairs = config["rates"]["pairs"];
  if (!pairs.is_array() || pairs.empty()) return nullptr;
  const Json& p = pairs[0];
  if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
    throw ConfigError("rates.pairs", "expected an array of [l, k] integer pairs");
  }
  return &p;
}

double step_for(const Json& config, std::int64_t n) {
  const Json& rates = config["rates"];
  if (rates.contains("h")) {
    if (!rates["h"].is_number()) throw ConfigError("rates.h", "expected a number");
    return rates["h"].get<double>();
  }
  const Json* pair = first_pair(config);
  if (pair == nullptr) throw ConfigError("rates", "give either rates.h or rates.pairs");
  return schedule(n, (*pair)[0].get<int>(), (*pair)[1].get<int>()).h;
}

std::int64_t block_length_for(const Json& config, std::int64_t n) {
  const Json& rates = config["rates"];
  if (rates.contains("c")) {
    if (!rates["c"].is_number_integer()) throw ConfigError("rates.c", "expected an integer");
    return rates["c"].get<std::int64_t>();
  }
  const Json* pair = first_pair(config);
  if (pair == nullptr) throw ConfigError("rates", "give either rates.c or rates.pairs");
  return schedule(n, (*pair)[0].get<int>(), (*pair)[1].get<int>()).c;
}

int cmd_rates(std::ostream& out, std::ostream& err) {
  out << rate_grid_csv();
  err << "note: rate condition a) uses the inclusive bound k <= 2l - 20\n";
  return 0;
}

int cmd_simulate(const Invocation& inv, std::ostream& out) {
  std::vector<std::string> notes;
  const Json config = load_effective_config(inv, notes);
  if (!config.contains("scenario")) throw ConfigError("scenario", "missing required entry");
  const ScenarioSpec spec = scenario_from_config(config);
  if (!config.contains("simulate") || !config["simulate"].contains("n") ||
      !config["simulate"]["n"].is_number_integer()) {
    throw ConfigError("simulate.n", "missing required integer entry");
  }
  const auto n = config["simulate"]["n"].get<std::int64_t>();
  std::uint64_t seed = 0;
  if (config["simulate"].contains("seed")) {
    if (!config["simulate"]["seed"].is_number_integer()) {
      throw ConfigError("simulate.seed", "expected an integer");
    }
    seed = config["simulate"]["seed"].get<std::uint64_t>();
  }
  const double h = step_for(config, n);
  const ObservationRecord obs = simulate_scenario(spec, n, h, seed);
  const fs::path dir = inv.out_dir;
  write_file_atomic(dir / "observations.csv", observation_csv(obs));
  write_meta(dir, "simulate", config, notes);
  out << "wrote " << (dir / "observations.csv").string() << " (n=" << n << ", h=" << h << ")\n";
  return 0;
}

int cmd_estimate(const Invocation& inv, std::ostream& out) {
  std::vector<std::string> notes;
  const Json config = load_effective_config(inv, notes);
  std::string data = inv.data_path;
  if (data.empty() && config.contains("estimate") && config["estimate"].contains("data")) {
    if (!config["estimate"]["data"].is_string()) throw ConfigError("estimate.data", "expected a path");
    data = config["estimate"]["data"].get<std::string>();
  }
  if (data.empty()) throw ConfigError("--data", "no observation file given");

  ObservationRecord obs = read_observation_csv(data);
  if (config["rates"].contains("h")) obs.h = step_for(config, obs.n);
  const DriverSpec driver = driver_from_config(config);
  const ThetaBox box = theta_box_from_config(config);
  const EstimatorOptions opts = estimator_options_from_config(config);
  const BlockScheme scheme = build_blocks(obs.n, block_length_for(config, obs.n));

  const EstimationResult result = maximize_quasi_lik(obs, scheme, driver, box, opts);
  Json doc = to_json(result);
  doc["n"] = obs.n;
  doc["h"] = obs.h;
  doc["c"] = scheme.c();
  doc["driver"] = driver.name();
  const fs::path dir = inv.out_dir;
  write_file_atomic(dir / "estimate.json", doc.dump(2) + "\n");
  write_meta(dir, "estimate", config, notes);
  out << doc.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const Invocation& inv, std::ostream& out) {
  std::vector<std::string> notes;
  const Json config = load_effective_config(inv, notes);
  const ExperimentConfig experiment = experiment_from_config(config);
  const auto results = run_replications(experiment, inv.threads);

  const fs::path dir = inv.out_dir;
  write_file_atomic(dir / "replications.csv", replications_csv(results));

  const Vector& theta0 = experiment.scenario.theta0;
  if (theta0.size() == 1 && theta0[0] != 0.0) {
    write_file_atomic(dir / "error_table.csv", error_table(results, theta0[0]).to_csv());
  } else {
    notes.emplace_back("error_table.csv skipped: the relative error needs a nonzero scalar theta0");
  }
  write_file_atomic(dir / "mae_curve.csv", mae_curve_csv(mae_curve(results, theta0)));

  const Matrix configured_gamma = normality_gamma_from_config(config);
  if (configured_gamma.size() == 0) {
    notes.emplace_back("normality: gamma is the replication mean of the plug-in estimate");
  }
  std::vector<NormalityRow> rows;
  for (std::size_t i = 0; i < results.size();) {
    std::size_t j = i;
    Matrix gamma_sum = Matrix::Zero(theta0.size(), theta0.size());
    int finite = 0;
    while (j < results.size() && results[j].n == results[i].n && results[j].l == results[i].l &&
           results[j].k == results[i].k) {
      if (results[j].gamma_hat.allFinite()) {
        gamma_sum += results[j].gamma_hat;
        ++finite;
      }
      ++j;
    }
    const auto& head = results[i];
    Matrix gamma = configured_gamma;
    if (gamma.size() == 0 && finite > 0) gamma = gamma_sum / finite;
    try {
      if (gamma.size() == 0) throw DegenerateGamma("no finite plug-in estimate");
      const std::vector<ReplicationResult> group(results.begin() + static_cast<std::ptrdiff_t>(i),
                                                 results.begin() + static_cast<std::ptrdiff_t>(j));
      rows.push_back({head.n, head.l, head.k,
                      normality_summary(group, gamma, theta0, head.n, head.h)});
    } catch (const DegenerateGamma& e) {
      notes.push_back("normality skipped for n=" + std::to_string(head.n) + ", l=" +
                      std::to_string(head.l) + ", k=" + std::to_string(head.k) + ": " + e.what());
    }
    i = j;
  }
  write_file_atomic(dir / "normality.csv", normality_csv(rows));
  write_meta(dir, "experiment", config, notes);

  std::size_t failed = 0;
  for (const auto& r : results) failed += r.error.empty() ? 0 : 1;
  out << "ran " << results.size() << " replications (" << failed << " failed) into "
      << dir.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drift estimation for ergodic BSDEs from discrete observations", "ebsde"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Invocation inv;
  auto add_common = [&inv](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "JSON config file");
    sub->add_option("--out", inv.out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", inv.threads, "worker threads (0: hardware count)");
    sub->add_option("--set", inv.overrides, "override a config entry, key=value")
        ->take_all()
        ->allow_extra_args(false);
  };
  CLI::App* simulate = app.add_subcommand("simulate", "simulate an observation record");
  CLI::App* estimate = app.add_subcommand("estimate", "estimate theta from an observation CSV");
  CLI::App* experiment = app.add_subcommand("experiment", "run a Monte Carlo experiment");
  CLI::App* rates = app.add_subcommand("rates", "print the admissible (l, k) grid");
  for (CLI::App* sub : {simulate, estimate, experiment, rates}) add_common(sub);
  estimate->add_option("--data", inv.data_path, "observation CSV written by `simulate`");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::Success&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*rates) return cmd_rates(out, err);
    if (*simulate) return cmd_simulate(inv, out);
    if (*estimate) return cmd_estimate(inv, out);
    if (*experiment) return cmd_experiment(inv, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NameError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace ebsde
