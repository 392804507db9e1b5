#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclecert/attraction.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/existence.hpp"
#include "cyclecert/sync_error.hpp"
#include "cyclecert/vector_field.hpp"

namespace cyclecert {

/// Everything a command needs. Fields left unset fall back to the preset
/// (if any) and then to the defaults below.
struct RunConfig {
  std::string preset;
  nlohmann::json system = {{"id", "vanderpol"}};
  std::optional<Vector> x0;  // default: first unit vector
  double h = 1e-4;
  double delta0 = 0.1;
  double gamma = 0.015;
  double max_time = 100.0;
  int n_s = 5;
  int n_ball = 8;
  double pad_factor = 1.0;
  std::size_t lambda_stride = 10;
  int passes = 2;
  int samples = 11;
  std::uint64_t seed = 0;
  std::size_t steps = 0;  // simulate: 0 means run to the first return
  std::vector<double> h_list;
  std::optional<Vector> y0;
  double periods = 5.0;
  double ref_factor = 0.01;
  std::optional<double> expected_d;
  std::string out = "out";
};

inline Vector parse_vector(const std::string& text) {
  std::vector<double> v;
  std::string item;
  for (std::size_t pos = 0; pos <= text.size(); ++pos) {
    if (pos == text.size() || text[pos] == ',') {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (used != item.size() && item.find_first_not_of(" \t", used) != std::string::npos)
          throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kInput, "bad number list: '" + text + "'");
      }
      item.clear();
    } else {
      item += text[pos];
    }
  }
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<std::string> preset_names() { return {"vdp-example1", "vdp-example2", "vdp-fine"}; }

inline RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.system = {{"id", "vanderpol"}, {"params", {{"p", 0.3}}}};
  c.x0 = parse_vector("1.8929,-0.5383");
  c.h = 1e-4;
  c.delta0 = 0.1;
  c.gamma = 0.015;
  if (name == "vdp-example1") return c;
  if (name == "vdp-example2") {
    c.y0 = parse_vector("1.8037,-0.5057");
    c.h_list = {5e-4, 2.5e-4, 1.25e-4};
    c.samples = 11;
    c.expected_d = -0.34;
    return c;
  }
  if (name == "vdp-fine") {
    c.h = 5e-5;
    c.y0 = parse_vector("1.8037,-0.5057");
    c.expected_d = -0.34;
    return c;
  }
  throw Error(ErrorKind::kInput, "unknown preset '" + name + "'");
}

/// Applies the keys present in `j` on top of `c`. Unknown keys are errors.
inline RunConfig apply_json(RunConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kInput, "run configuration must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      if (key == "system") c.system = value;
      else if (key == "x0") c.x0 = Eigen::Map<const Vector>(value.get<std::vector<double>>().data(), static_cast<Eigen::Index>(value.size()));
      else if (key == "y0") c.y0 = Eigen::Map<const Vector>(value.get<std::vector<double>>().data(), static_cast<Eigen::Index>(value.size()));
      else if (key == "h") c.h = value.get<double>();
      else if (key == "delta0") c.delta0 = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "max_time") c.max_time = value.get<double>();
      else if (key == "n_s") c.n_s = value.get<int>();
      else if (key == "n_ball") c.n_ball = value.get<int>();
      else if (key == "pad_factor") c.pad_factor = value.get<double>();
      else if (key == "lambda_stride") c.lambda_stride = value.get<std::size_t>();
      else if (key == "passes") c.passes = value.get<int>();
      else if (key == "samples") c.samples = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "steps") c.steps = value.get<std::size_t>();
      else if (key == "h_list") c.h_list = value.get<std::vector<double>>();
      else if (key == "periods") c.periods = value.get<double>();
      else if (key == "ref_factor") c.ref_factor = value.get<double>();
      else if (key == "expected_d") c.expected_d = value.get<double>();
      else if (key == "out") c.out = value.get<std::string>();
      else throw Error(ErrorKind::kInput, "unknown configuration key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("bad configuration value: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open configuration '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("configuration is not valid JSON: ") + e.what());
  }
  RunConfig base = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : RunConfig{};
  return apply_json(std::move(base), j);
}

inline void validate(const RunConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::kInput, std::string(name) + " must be positive");
  };
  positive(c.h, "h");
  positive(c.delta0, "delta0");
  positive(c.gamma, "gamma");
  positive(c.max_time, "max_time");
  positive(c.pad_factor + 1.0, "pad_factor + 1");
  positive(c.periods, "periods");
  positive(c.ref_factor, "ref_factor");
  for (double h : c.h_list) positive(h, "h_list entries");
  if (c.n_s < 2 || c.n_ball < 1 || c.passes < 1 || c.samples < 1 || c.lambda_stride < 1)
    throw Error(ErrorKind::kInput, "sampling counts must be positive (n_s >= 2)");
}

inline VectorField system_of(const RunConfig& c) { return load_system(c.system); }

inline Vector start_point(const RunConfig& c, const VectorField& field) {
  Vector x0 = c.x0 ? *c.x0 : Vector(Vector::Unit(field.dim(), 0));
  if (x0.size() != field.dim()) throw Error(ErrorKind::kInput, "x0 dimension does not match the system");
  return x0;
}

inline ExistenceConfig existence_config(const RunConfig& c) {
  ExistenceConfig e;
  e.h = c.h;
  e.delta0 = c.delta0;
  e.gamma = c.gamma;
  e.max_time = c.max_time;
  e.tube.gamma = c.gamma;
  e.tube.lambda_sampling.n_s = c.n_s;
  e.tube.lambda_sampling.n_ball = c.n_ball;
  e.tube.lambda_sampling.pad_factor = c.pad_factor;
  e.tube.ab_sampling.n_s = c.n_s;
  e.tube.ab_sampling.pad_factor = c.pad_factor;
  e.tube.lambda_stride = c.lambda_stride;
  e.tube.passes = c.passes;
  e.constants_stride = c.lambda_stride;
  e.eta.n_samples = c.samples;
  e.eta.seed = c.seed;
  return e;
}

inline AttractionConfig attraction_config(const RunConfig& c) {
  AttractionConfig a;
  a.n_samples = c.samples;
  a.seed = c.seed;
  a.expected_d = c.expected_d;
  return a;
}

inline ErrorCurveConfig error_curve_config(const RunConfig& c) {
  ErrorCurveConfig e;
  e.existence = existence_config(c);
  e.periods = c.periods;
  e.ref_factor = c.ref_factor;
  return e;
}

}  // namespace cyclecert
