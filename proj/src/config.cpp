#include "ebsde/config.hpp"

#include <fstream>
#include <sstream>

#include "ebsde/errors.hpp"

namespace ebsde {

namespace {

// Walks a dotted path; nullptr when any segment is missing.
const Json* find(const Json& root, const std::string& dotted) {
  const Json* node = &root;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object()) return nullptr;
    auto it = node->find(part);
    if (it == node->end()) return nullptr;
    node = &*it;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return node;
}

const Json& require(const Json& root, const std::string& key) {
  const Json* node = find(root, key);
  if (node == nullptr || node->is_null()) throw ConfigError(key, "missing required entry");
  return *node;
}

double number(const Json& root, const std::string& key) {
  const Json& node = require(root, key);
  if (!node.is_number()) throw ConfigError(key, "expected a number");
  return node.get<double>();
}

std::int64_t integer(const Json& root, const std::string& key) {
  const Json& node = require(root, key);
  if (!node.is_number_integer()) throw ConfigError(key, "expected an integer");
  return node.get<std::int64_t>();
}

bool boolean(const Json& root, const std::string& key) {
  const Json& node = require(root, key);
  if (!node.is_boolean()) throw ConfigError(key, "expected true or false");
  return node.get<bool>();
}

std::string string(const Json& root, const std::string& key) {
  const Json& node = require(root, key);
  if (!node.is_string()) throw ConfigError(key, "expected a string");
  return node.get<std::string>();
}

Vector vector(const Json& root, const std::string& key) {
  const Json& node = require(root, key);
  if (!node.is_array()) throw ConfigError(key, "expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) {
    if (!node[i].is_number()) throw ConfigError(key, "expected an array of numbers");
    out[static_cast<Eigen::Index>(i)] = node[i].get<double>();
  }
  return out;
}

Matrix matrix(const Json& root, const std::string& key) {
  const Json& node = require(root, key);
  if (!node.is_array() || node.empty() || !node[0].is_array()) {
    throw ConfigError(key, "expected a non-empty array of rows");
  }
  const auto rows = node.size();
  const auto cols = node[0].size();
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!node[i].is_array() || node[i].size() != cols) throw ConfigError(key, "ragged matrix");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!node[i][j].is_number()) throw ConfigError(key, "expected numbers");
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = node[i][j].get<double>();
    }
  }
  return out;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void set_default(Json& section, const std::string& key, Json value) {
  if (!section.contains(key) || section[key].is_null()) section[key] = std::move(value);
}

Json& section(Json& root, const std::string& key) {
  if (!root.contains(key) || root[key].is_null()) root[key] = Json::object();
  if (!root[key].is_object()) throw ConfigError(key, "expected an object");
  return root[key];
}

}  // namespace

Json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("--config", "invalid JSON in '" + path.string() + "': " + e.what());
  }
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set", "expected key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  Json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set", "empty segment in key '" + key + "'");
    if (node->is_null()) *node = Json::object();
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

Json normalize_config(const Json& config, std::vector<std::string>* notes) {
  if (!config.is_object()) throw ConfigError("", "config must be a JSON object");
  Json out = config;
  auto note = [notes](std::string text) {
    if (notes != nullptr) notes->push_back(std::move(text));
  };

  std::string scenario_name;
  if (out.contains("scenario") && !out["scenario"].is_null()) {
    Json& sc = section(out, "scenario");
    scenario_name = string(out, "scenario.name");
    const ScenarioKind kind = scenario_kind_from_string(scenario_name);
    Json& factor = section(sc, "factor");
    switch (kind) {
      case ScenarioKind::vasicek_1d: {
        const VasicekParams p{};
        set_default(factor, "a", p.a);
        set_default(factor, "b", p.b);
        set_default(factor, "sigma", p.sigma);
        set_default(factor, "x0", p.x0);
        set_default(sc, "vol_offset", 0.1);
        set_default(sc, "theta0", Json::array({1.0}));
        set_default(sc, "y0", Json::array({1.0}));
        break;
      }
      case ScenarioKind::heston_2d: {
        const CirParams p{};
        set_default(factor, "L", p.L);
        set_default(factor, "beta", p.beta);
        set_default(factor, "sigma", p.sigma);
        set_default(factor, "nu0", p.nu0);
        set_default(sc, "volatility", to_json(heston_loading()));
        set_default(sc, "theta0", Json::array({5.0, 5.0}));
        set_default(sc, "y0", Json::array({0.0, 0.0}));
        break;
      }
      case ScenarioKind::constant_vol: {
        const Matrix vol = matrix(out, "scenario.volatility");
        set_default(sc, "y0", Json(std::vector<double>(static_cast<std::size_t>(vol.rows()), 0.0)));
        break;
      }
    }
    set_default(sc, "substeps", 1);
    set_default(sc, "shared_noise", false);
  }

  Json& drv = section(out, "driver");
  if (!drv.contains("name") || drv["name"].is_null()) {
    if (scenario_name == "vasicek_1d") {
      drv["name"] = "vasicek_sqrt";
    } else if (scenario_name == "heston_2d") {
      drv["name"] = "heston_price";
    } else if (scenario_name == "constant_vol") {
      const Matrix vol = matrix(out, "scenario.volatility");
      drv["name"] = "zero";
      set_default(section(drv, "params"), "d_y", static_cast<int>(vol.rows()));
    } else {
      throw ConfigError("driver.name", "missing required entry");
    }
  }
  Json& params = section(drv, "params");
  if (string(out, "driver.name") == "heston_price" && !params.contains("mu")) {
    params["mu"] = 0.0;
    note("driver.params.mu was not given; heston_price uses mu = 0");
  }

  if (scenario_name == "constant_vol") {
    const int d_theta = builtin_driver(string(out, "driver.name"),
                                       [&] {
                                         ParamMap p;
                                         for (auto& [k, v] : params.items()) {
                                           if (v.is_number()) p[k] = v.get<double>();
                                         }
                                         return p;
                                       }())
                            .d_theta();
    set_default(out["scenario"], "theta0",
                Json(std::vector<double>(static_cast<std::size_t>(d_theta), 0.0)));
  }

  Json& rates = section(out, "rates");
  if (!rates.contains("pairs") && rates.contains("l") && rates.contains("k")) {
    rates["pairs"] = Json::array({Json::array({rates["l"], rates["k"]})});
    rates.erase("l");
    rates.erase("k");
  }
  note("rate condition a) uses the inclusive bound k <= 2l - 20");

  Json& est = section(out, "estimator");
  const EstimatorOptions defaults{};
  set_default(est, "max_iter", defaults.max_iter);
  set_default(est, "grad_tol", defaults.grad_tol);
  set_default(est, "grid_points", defaults.grid_points);

  if (out.contains("experiment") && !out["experiment"].is_null()) {
    Json& ex = section(out, "experiment");
    set_default(ex, "base_seed", 0);
    set_default(ex, "allow_invalid_rates", false);
    if (!ex.contains("normality_gamma")) {
      // Analytic information where the model gives it in closed form.
      Json gamma = nullptr;
      const std::string driver_name = string(out, "driver.name");
      if (scenario_name == "vasicek_1d" && driver_name == "vasicek_sqrt") {
        const Json& p = out["driver"]["params"];
        const double offset = p.contains("offset") ? p["offset"].get<double>() : 0.1;
        if (offset == number(out, "scenario.vol_offset")) gamma = Json::array({Json::array({1.0})});
      } else if (scenario_name == "heston_2d" && driver_name == "heston_price" &&
                 number(out, "driver.params.mu") == 0.0 &&
                 matrix(out, "scenario.volatility").rows() == 2) {
        const double beta = number(out, "scenario.factor.beta");
        gamma = Json::array({Json::array({beta, 0.0}), Json::array({0.0, beta})});
      }
      ex["normality_gamma"] = gamma;
    }
  }
  return out;
}

DriverSpec driver_from_config(const Json& config) {
  const std::string name = string(config, "driver.name");
  ParamMap params;
  if (const Json* p = find(config, "driver.params"); p != nullptr && !p->is_null()) {
    if (!p->is_object()) throw ConfigError("driver.params", "expected an object");
    for (const auto& [key, value] : p->items()) {
      if (!value.is_number()) throw ConfigError("driver.params." + key, "expected a number");
      params[key] = value.get<double>();
    }
  }
  try {
    return builtin_driver(name, params);
  } catch (const NameError& e) {
    throw ConfigError("driver.name", e.what());
  }
}

ScenarioSpec scenario_from_config(const Json& config) {
  const ScenarioKind kind = scenario_kind_from_string(string(config, "scenario.name"));
  ScenarioSpec spec{.kind = kind,
                    .driver = driver_from_config(config),
                    .theta0 = vector(config, "scenario.theta0"),
                    .y0 = vector(config, "scenario.y0")};
  spec.substeps = static_cast<int>(integer(config, "scenario.substeps"));
  spec.shared_noise = boolean(config, "scenario.shared_noise");
  switch (kind) {
    case ScenarioKind::vasicek_1d:
      spec.vasicek = {.a = number(config, "scenario.factor.a"),
                      .b = number(config, "scenario.factor.b"),
                      .sigma = number(config, "scenario.factor.sigma"),
                      .x0 = number(config, "scenario.factor.x0")};
      spec.vol_offset = number(config, "scenario.vol_offset");
      break;
    case ScenarioKind::heston_2d:
      spec.cir = {.L = number(config, "scenario.factor.L"),
                  .beta = number(config, "scenario.factor.beta"),
                  .sigma = number(config, "scenario.factor.sigma"),
                  .nu0 = number(config, "scenario.factor.nu0")};
      spec.volatility = matrix(config, "scenario.volatility");
      break;
    case ScenarioKind::constant_vol:
      spec.volatility = matrix(config, "scenario.volatility");
      break;
  }
  spec.validate();
  return spec;
}

ThetaBox theta_box_from_config(const Json& config) {
  const Vector lower = vector(config, "estimator.lower");
  const Vector upper = vector(config, "estimator.upper");
  try {
    return ThetaBox(lower, upper);
  } catch (const ConfigError& e) {
    throw ConfigError("estimator.lower", e.what());
  }
}

EstimatorOptions estimator_options_from_config(const Json& config) {
  EstimatorOptions opts;
  opts.max_iter = static_cast<int>(integer(config, "estimator.max_iter"));
  opts.grad_tol = number(config, "estimator.grad_tol");
  opts.grid_points = static_cast<int>(integer(config, "estimator.grid_points"));
  if (opts.max_iter < 1) throw ConfigError("estimator.max_iter", "must be positive");
  if (!(opts.grad_tol > 0.0)) throw ConfigError("estimator.grad_tol", "must be positive");
  if (opts.grid_points < 1) throw ConfigError("estimator.grid_points", "must be positive");
  return opts;
}

ExperimentConfig experiment_from_config(const Json& config) {
  std::vector<std::int64_t> n_set;
  const Json& ns = require(config, "experiment.n_set");
  if (!ns.is_array()) throw ConfigError("experiment.n_set", "expected an array of integers");
  for (const auto& v : ns) {
    if (!v.is_number_integer()) throw ConfigError("experiment.n_set", "expected integers");
    n_set.push_back(v.get<std::int64_t>());
  }
  std::vector<std::pair<int, int>> pairs;
  const Json& ps = require(config, "rates.pairs");
  if (!ps.is_array()) throw ConfigError("rates.pairs", "expected an array of [l, k] pairs");
  for (const auto& p : ps) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
      throw ConfigError("rates.pairs", "expected an array of [l, k] integer pairs");
    }
    pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  }
  const std::int64_t reps = integer(config, "experiment.reps");
  if (reps < 0 || reps > 1'000'000) throw ConfigError("experiment.reps", "out of range");
  const std::int64_t seed = integer(config, "experiment.base_seed");

  ExperimentConfig out{.scenario = scenario_from_config(config),
                       .theta_box = theta_box_from_config(config),
                       .n_set = std::move(n_set),
                       .lk_pairs = std::move(pairs),
                       .reps = static_cast<int>(reps),
                       .base_seed = static_cast<std::uint64_t>(seed),
                       .allow_invalid_rates = boolean(config, "experiment.allow_invalid_rates"),
                       .estimator = estimator_options_from_config(config)};
  out.validate();
  return out;
}

Matrix normality_gamma_from_config(const Json& config) {
  const Json* node = find(config, "experiment.normality_gamma");
  if (node == nullptr || node->is_null()) return {};
  return matrix(config, "experiment.normality_gamma");
}

}  // namespace ebsde
