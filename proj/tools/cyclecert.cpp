#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cyclecert/cyclecert.hpp"

namespace fs = std::filesystem;
using namespace cyclecert;

namespace {

struct Flags {
  std::string preset;
  std::string config;
  std::string system;
  std::vector<std::string> params;
  std::string h;
  std::optional<double> delta0;
  std::optional<double> gamma;
  std::string x0;
  std::string y0;
  std::optional<int> samples;
  std::optional<std::size_t> stride;
  std::optional<std::size_t> steps;
  std::optional<double> periods;
  std::optional<std::uint64_t> seed;
  std::string out;
};

enum class Command { kSimulate, kExistence, kAttraction, kErrorCurve, kConstants };

nlohmann::json system_json(const Flags& f, nlohmann::json current) {
  if (!f.system.empty()) {
    const auto ids = registry_ids();
    if (std::find(ids.begin(), ids.end(), f.system) != ids.end()) {
      current = {{"id", f.system}};
    } else {
      std::ifstream in(f.system);
      if (!in) throw Error(ErrorKind::kInput, "'" + f.system + "' is neither a built-in system nor a readable file");
      try {
        current = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::kInput, std::string("system file is not valid JSON: ") + e.what());
      }
    }
  }
  for (const auto& kv : f.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kInput, "--param expects name=value");
    const Vector v = parse_vector(kv.substr(eq + 1));
    if (v.size() != 1) throw Error(ErrorKind::kInput, "--param expects a single number");
    current["params"][kv.substr(0, eq)] = v[0];
  }
  return current;
}

RunConfig resolve(const Flags& f, Command cmd) {
  RunConfig c;
  if (!f.config.empty()) c = load_run_config(f.config);
  if (!f.preset.empty()) c = preset(f.preset);
  if (!f.config.empty() && !f.preset.empty()) {
    std::ifstream in(f.config);
    c = apply_json(c, nlohmann::json::parse(in));
  }
  c.system = system_json(f, c.system);
  if (!f.h.empty()) {
    const Vector hs = parse_vector(f.h);
    if (cmd == Command::kErrorCurve) {
      c.h_list.assign(hs.data(), hs.data() + hs.size());
    } else {
      if (hs.size() != 1) throw Error(ErrorKind::kInput, "--h takes a single value for this command");
      c.h = hs[0];
    }
  }
  if (f.delta0) c.delta0 = *f.delta0;
  if (f.gamma) c.gamma = *f.gamma;
  if (!f.x0.empty()) c.x0 = parse_vector(f.x0);
  if (!f.y0.empty()) c.y0 = parse_vector(f.y0);
  if (f.samples) c.samples = *f.samples;
  if (f.stride) c.lambda_stride = *f.stride;
  if (f.steps) c.steps = *f.steps;
  if (f.periods) c.periods = *f.periods;
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  validate(c);
  return c;
}

void say(const std::string& line) { std::cout << line << std::endl; }

int run_simulate(const RunConfig& c) {
  const VectorField field = system_of(c);
  const Vector x0 = start_point(c, field);
  const Section s0 = section_through(field, x0);
  const Exclusion excl = default_exclusion(c.h, c.delta0);
  std::size_t steps = c.steps;
  if (steps == 0) {
    const auto first = stream_returns(field, x0, c.h, s0, excl, c.max_time);
    steps = first.empty() ? static_cast<std::size_t>(std::ceil(c.max_time / c.h)) : first.front().step_index + 1;
  }
  const EulerTrajectory traj = simulate(field, x0, c.h, steps);
  const auto crossings = detect_crossings(traj, s0, excl);
  const fs::path out(c.out);
  write_atomic(out / "trajectory.csv", trajectory_csv(traj));
  write_atomic(out / "crossings.csv", crossings_csv(crossings, field.dim(), c.h));
  Json returns = Json::array();
  for (const auto& cr : crossings) {
    const auto r = to_return_time(cr, c.h);
    returns.push_back({{"R", r.R}, {"N", r.N}, {"point", to_json(r.point)}});
  }
  write_json(out / "simulate.json", {{"kind", "simulate"},
                                     {"system", field.name()},
                                     {"params", to_json(field.params())},
                                     {"x0", to_json(x0)},
                                     {"h", c.h},
                                     {"steps", traj.steps()},
                                     {"horizon", traj.horizon()},
                                     {"returns", returns}});
  say("simulated " + std::to_string(traj.steps()) + " steps, " + std::to_string(crossings.size()) +
      " return(s); output in " + out.string());
  return 0;
}

void write_existence(const fs::path& out, const ExistenceCertificate& cert) {
  write_json(out / "existence.json", to_json(cert));
  if (cert.tube && cert.trajectory) {
    write_atomic(out / "tube.csv", tube_csv(*cert.tube, *cert.trajectory));
    write_atomic(out / "steps.csv", steps_csv(*cert.tube));
  }
}

int run_existence(const RunConfig& c) {
  const VectorField field = system_of(c);
  const ExistenceCertificate cert = certify_existence(field, start_point(c, field), existence_config(c));
  write_existence(fs::path(c.out), cert);
  say("existence: " + std::string(cert.certified ? "certified" : "failed") + " (" + cert.reason + ")");
  return cert.certified ? 0 : 1;
}

int run_attraction(const RunConfig& c) {
  const VectorField field = system_of(c);
  const ExistenceConfig ec = existence_config(c);
  const ExistenceCertificate cert = certify_existence(field, start_point(c, field), ec);
  const fs::path out(c.out);
  write_existence(out, cert);
  AttractionCertificate att;
  if (cert.certified) {
    att = certify_attraction(cert, field, ec, attraction_config(c));
  } else {
    // Refused: report why, plus the sweep when a tube exists, for diagnosis.
    att.reason = "precondition: existence not certified (" + cert.reason + ")";
    if (cert.tube && cert.constants) {
      const Sweep sweep = sweep_Y0(field, cert.tube->Y0, c.samples, cert.constants->M_f, ec, c.seed);
      att.d = sweep.d;
      att.samples = sweep.samples;
      if (cert.constants->a > 0.0) {
        att.D = compute_D(*cert.constants, cert.gamma);
        att.Dh = att.D * cert.h;
      }
      att.expected_d = c.expected_d;
      if (c.expected_d) att.gap = att.d - *c.expected_d;
    }
  }
  write_json(out / "attraction.json", to_json(att, cert));
  say("attraction: " + std::string(att.certified ? "certified" : "failed") + " (" + att.reason + "), d = " +
      fmt(att.d));
  return att.certified ? 0 : 1;
}

int run_error_curve(const RunConfig& c) {
  if (c.h_list.empty()) throw Error(ErrorKind::kInput, "error-curve needs --h with a list of step sizes");
  if (!c.y0) throw Error(ErrorKind::kInput, "error-curve needs --y0");
  const VectorField field = system_of(c);
  const Vector x0 = start_point(c, field);
  if (c.y0->size() != field.dim()) throw Error(ErrorKind::kInput, "y0 dimension does not match the system");
  const ErrorCurveReport report = error_curve_experiment(field, x0, *c.y0, c.h_list, error_curve_config(c));
  const fs::path out(c.out);
  Json summary = to_json(report);
  for (std::size_t k = 0; k < report.curves.size(); ++k) {
    const std::string name = "error_curve_" + std::to_string(k + 1) + ".csv";
    write_atomic(out / name, error_curve_csv(report.curves[k]));
    summary["curves"][k]["csv"] = name;
  }
  write_json(out / "error_curve.json", summary);
  for (const auto& cv : report.curves)
    say("h = " + fmt(cv.h) + ": tail = " + fmt(cv.tail_max) + ", D h = " + fmt(cv.Dh));
  say(std::string("error-curve: ") + (report.pass ? "pass" : "fail"));
  return report.pass ? 0 : 1;
}

int run_constants(const RunConfig& c) {
  const VectorField field = system_of(c);
  const ExistenceCertificate cert = certify_existence(field, start_point(c, field), existence_config(c));
  Json j = {{"kind", "constants"},
            {"system", cert.system},
            {"params", to_json(cert.params)},
            {"x0", to_json(cert.x0)},
            {"h", cert.h},
            {"delta0", cert.delta0},
            {"gamma", cert.gamma},
            {"established", cert.constants.has_value()},
            {"reason", cert.reason}};
  if (cert.constants) {
    j["constants"] = to_json(*cert.constants);
    j["mu_perp_range"] = {cert.mu_perp_min, cert.mu_perp_max};
    if (cert.constants->a > 0.0) j["D"] = compute_D(*cert.constants, cert.gamma);
  }
  write_json(fs::path(c.out) / "constants.json", j);
  say(std::string("constants: ") + (cert.constants ? "established" : "not established (" + cert.reason + ")"));
  return cert.constants ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical limit-cycle certification with Euler tubes"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  Flags flags;
  std::optional<Command> command;
  auto add = [&](const char* name, const char* help, Command cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--preset", flags.preset, "Named parameter set (vdp-example1, vdp-example2, vdp-fine)");
    sub->add_option("--config", flags.config, "Run configuration JSON file");
    sub->add_option("--system", flags.system, "Built-in system id or system definition JSON file");
    sub->add_option("--param", flags.params, "System parameter override name=value (repeatable)");
    sub->add_option("--h", flags.h, "Step size (error-curve: comma-separated list)");
    sub->add_option("--delta0", flags.delta0, "Initial tube radius");
    sub->add_option("--gamma", flags.gamma, "Regularization floor");
    sub->add_option("--x0", flags.x0, "Initial point, comma-separated");
    sub->add_option("--y0", flags.y0, "Reference start point for error-curve");
    sub->add_option("--samples", flags.samples, "Section samples (return times, attraction sweep)");
    sub->add_option("--stride", flags.stride, "Lambda recomputation stride");
    sub->add_option("--steps", flags.steps, "simulate: number of steps (default: up to the first return)");
    sub->add_option("--periods", flags.periods, "error-curve: horizon in loops");
    sub->add_option("--seed", flags.seed, "Seed for sample placement");
    sub->add_option("--out", flags.out, "Output directory");
    sub->callback([&command, cmd] { command = cmd; });
  };
  add("simulate", "Euler trajectory and section crossings", Command::kSimulate);
  add("certify-existence", "Tube construction and existence certificate", Command::kExistence);
  add("certify-attraction", "Averaged-contraction sweep and attraction certificate", Command::kAttraction);
  add("error-curve", "Synchronized error against a fine reference for several step sizes", Command::kErrorCurve);
  add("constants", "Estimate L, speeds, theta' bounds and return times", Command::kConstants);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string out_dir = flags.out.empty() ? "out" : flags.out;
  try {
    const RunConfig c = resolve(flags, *command);
    out_dir = c.out;
    switch (*command) {
      case Command::kSimulate: return run_simulate(c);
      case Command::kExistence: return run_existence(c);
      case Command::kAttraction: return run_attraction(c);
      case Command::kErrorCurve: return run_error_curve(c);
      case Command::kConstants: return run_constants(c);
    }
  } catch (const Error& e) {
    const Json j = error_json(std::string(to_string(e.kind())), e.what());
    std::cerr << j.dump() << std::endl;
    try {
      write_json(fs::path(out_dir) / "error.json", j);
    } catch (...) {
    }
    return 2;
  } catch (const std::exception& e) {
    const Json j = error_json("internal", e.what());
    std::cerr << j.dump() << std::endl;
    try {
      write_json(fs::path(out_dir) / "error.json", j);
    } catch (...) {
    }
    return 2;
  }
  return 2;
}
