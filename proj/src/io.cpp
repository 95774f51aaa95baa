#include "ebsde/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "ebsde/errors.hpp"

namespace ebsde {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string observation_csv(const ObservationRecord& obs) {
  std::string csv = "k,t";
  for (int j = 1; j <= obs.d_x(); ++j) csv += fmt::format(",x_{}", j);
  for (int j = 1; j <= obs.d_y(); ++j) csv += fmt::format(",y_{}", j);
  csv += "\n";
  csv.reserve(csv.size() + static_cast<std::size_t>(obs.n + 1) * 24 * (2 + obs.d_x() + obs.d_y()));
  for (std::int64_t k = 0; k <= obs.n; ++k) {
    csv += fmt::format("{},{:.17g}", k, static_cast<double>(k) * obs.h);
    for (int j = 0; j < obs.d_x(); ++j) csv += fmt::format(",{:.17g}", obs.x_path(k, j));
    for (int j = 0; j < obs.d_y(); ++j) csv += fmt::format(",{:.17g}", obs.y_path(k, j));
    csv += '\n';
  }
  return csv;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::int64_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("--data", "bad number '" + s + "' in row " + std::to_string(row));
  }
}

}  // namespace

ObservationRecord read_observation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--data", "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("--data", "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "k" || header[1] != "t") {
    throw ConfigError("--data", "header must start with k,t");
  }
  int d_x = 0;
  int d_y = 0;
  for (std::size_t i = 2; i < header.size(); ++i) {
    if (header[i] == fmt::format("x_{}", d_x + 1) && d_y == 0) {
      ++d_x;
    } else if (header[i] == fmt::format("y_{}", d_y + 1)) {
      ++d_y;
    } else {
      throw ConfigError("--data", "unexpected column '" + header[i] + "'");
    }
  }
  if (d_y == 0) throw ConfigError("--data", "no y columns");

  std::vector<double> t;
  std::vector<double> values;
  const std::size_t width = header.size();
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != width) {
      throw ConfigError("--data", "row " + std::to_string(row) + " has the wrong number of fields");
    }
    if (parse_double(fields[0], row) != static_cast<double>(row)) {
      throw ConfigError("--data", "k column must count 0, 1, 2, ...");
    }
    t.push_back(parse_double(fields[1], row));
    for (std::size_t i = 2; i < width; ++i) values.push_back(parse_double(fields[i], row));
    ++row;
  }
  if (row < 2) throw ConfigError("--data", "need at least two observations");

  ObservationRecord obs;
  obs.n = row - 1;
  obs.h = t[1] - t[0];
  obs.scenario_name = path.stem().string();
  if (!(obs.h > 0.0)) throw ConfigError("--data", "t must be increasing");
  for (std::int64_t k = 0; k <= obs.n; ++k) {
    const double expected = static_cast<double>(k) * obs.h;
    if (std::abs(t[static_cast<std::size_t>(k)] - expected) > 1e-9 * std::max(1.0, expected)) {
      throw ConfigError("--data", "time grid is not uniform at row " + std::to_string(k));
    }
  }
  obs.x_path.resize(d_x == 0 ? 0 : obs.n + 1, d_x);
  obs.y_path.resize(obs.n + 1, d_y);
  for (std::int64_t k = 0; k <= obs.n; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * (width - 2);
    for (int j = 0; j < d_x; ++j) obs.x_path(k, j) = values[base + static_cast<std::size_t>(j)];
    for (int j = 0; j < d_y; ++j) {
      obs.y_path(k, j) = values[base + static_cast<std::size_t>(d_x + j)];
    }
  }
  obs.validate();
  return obs;
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const EstimationResult& result) {
  nlohmann::json theta = nlohmann::json::array();
  nlohmann::json se = nlohmann::json::array();
  nlohmann::json gamma = nlohmann::json::array();
  for (Eigen::Index j = 0; j < result.theta_hat.size(); ++j) {
    theta.push_back(number_or_null(result.theta_hat[j]));
    se.push_back(number_or_null(result.std_errors[j]));
  }
  for (Eigen::Index i = 0; i < result.gamma_hat.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < result.gamma_hat.cols(); ++j) {
      row.push_back(number_or_null(result.gamma_hat(i, j)));
    }
    gamma.push_back(std::move(row));
  }
  return {{"theta_hat", theta},
          {"h_value", number_or_null(result.h_value)},
          {"gamma_hat", gamma},
          {"std_errors", se},
          {"iterations", result.iterations},
          {"starts", result.starts},
          {"converged", result.converged},
          {"on_boundary", result.on_boundary},
          {"grad_norm", number_or_null(result.grad_norm)},
          {"dropped_blocks", result.dropped_blocks},
          {"used_blocks", result.used_blocks}};
}

}  // namespace ebsde
