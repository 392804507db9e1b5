#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cyclecert/constants.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/transverse.hpp"
#include "cyclecert/tube.hpp"
#include "cyclecert/vector_field.hpp"

namespace cyclecert {

struct ExistenceConfig {
  double h = 1e-4;
  double delta0 = 0.1;
  double gamma = 0.015;
  double max_time = 100.0;  // give up looking for a return after this time
  std::optional<Exclusion> exclusion;
  TubeConfig tube;          // tube.gamma is overwritten by `gamma`
  std::size_t constants_stride = 10;
  double lipschitz_safety = 1.0;
  int region_iterations = 4;
  int inclusion_samples = 64;
  bool run_eta = true;
  EtaConfig eta;  // horizon 0 means 2 R1 + 1
};

struct ExistenceCertificate {
  std::string system;
  Params params;
  Vector x0;
  double h = 0.0;
  double delta0 = 0.0;
  double gamma = 0.0;

  bool certified = false;
  std::string reason;  // "certified", a violated condition, or an error kind
  std::string message;

  std::shared_ptr<const EulerTrajectory> trajectory;
  std::optional<ReturnTime> first_return;
  std::optional<Tube> tube;
  std::optional<StepCondition> step;
  std::optional<InclusionResult> inclusion;
  std::optional<EtaEstimate> eta;
  std::optional<GlobalConstants> constants;
  double mu_perp_min = 0.0;
  double mu_perp_max = 0.0;
  bool alignment_warning = false;
};

namespace detail {

inline ExistenceCertificate make_failed(ExistenceCertificate cert, const Error& e) {
  cert.certified = false;
  cert.reason = std::string(to_string(e.kind()));
  cert.message = e.what();
  return cert;
}

}  // namespace detail

/// Runs the full existence pipeline from x0: first return to the section
/// through x0, working-region constants, tube, step condition, return
/// inclusion and the return-time sweep. Blocking errors become a failed
/// verdict whose reason names the error kind.
inline ExistenceCertificate certify_existence(const VectorField& field, const Vector& x0,
                                              const ExistenceConfig& config) {
  ExistenceCertificate cert;
  cert.system = field.name();
  cert.params = field.params();
  cert.x0 = x0;
  cert.h = config.h;
  cert.delta0 = config.delta0;
  cert.gamma = config.gamma;
  if (!(config.h > 0.0) || !(config.delta0 > 0.0))
    throw Error(ErrorKind::kInput, "h and delta0 must be positive");
  if (!(config.gamma > 0.0)) throw Error(ErrorKind::kInput, "gamma must be positive");
  if (x0.size() != field.dim()) throw Error(ErrorKind::kInput, "x0 dimension does not match the system");

  try {
    const Exclusion excl = config.exclusion.value_or(default_exclusion(config.h, config.delta0));
    const Section s0 = section_through(field, x0);
    const auto streamed = stream_returns(field, x0, config.h, s0, excl, config.max_time);
    if (streamed.empty()) {
      cert.reason = "no-return";
      cert.message = "no return to the initial section within the search horizon";
      return cert;
    }
    const std::size_t n1_guess = streamed.front().step_index + 1;
    auto traj = std::make_shared<EulerTrajectory>(simulate(field, x0, config.h, n1_guess + 1));
    cert.trajectory = traj;
    const auto returns = return_times(*traj, s0, 1, excl);
    if (returns.returns.empty()) throw Error(ErrorKind::kNumeric, "stored trajectory lost the first return");
    const ReturnTime ret = returns.returns.front();
    cert.first_return = ret;
    const std::size_t n1 = ret.N;

    TubeConfig tc = config.tube;
    tc.gamma = config.gamma;
    const double m_floor = tc.lambda_sampling.m_floor;

    // Working region: the tube of radius r around the loop. r starts at
    // delta0 and grows when the built tube is wider.
    GlobalConstants k;
    double r = config.delta0;
    double M_f = 0.0;
    std::optional<Tube> tube;
    int iterations = 0;
    std::size_t region_samples = 0;
    const int max_iterations = std::max(1, config.region_iterations);
    for (; iterations < max_iterations; ++iterations) {
      const auto pts = tube_sample_points(*traj, n1, [r](std::size_t) { return r; }, config.constants_stride);
      region_samples = pts.size();
      k.L = estimate_lipschitz(field, pts, config.lipschitz_safety);
      const SpeedBounds sb = estimate_speed_bounds(field, pts, m_floor);
      if (sb.equilibrium_flag) throw Error(ErrorKind::kEquilibrium, "equilibrium inside the working region");
      M_f = std::max(M_f, sb.M);
      tube = build_tube(*traj, ret, config.delta0, M_f, tc);
      double max_mt = 0.0;
      for (const auto& seg : tube->segments) max_mt = std::max(max_mt, seg.M_tilde);
      const bool wide = tube->delta_max() > r;
      const bool fast = max_mt > M_f;
      if ((!wide && !fast) || iterations + 1 == max_iterations) break;
      r = std::max(r, 1.1 * tube->delta_max());
      M_f = std::max(M_f, max_mt);
    }
    k.M_f = M_f;

    // Tube constants: speeds on the tube with its actual radii.
    const Tube& t = *tube;
    auto node_radius = [&t](std::size_t i) {
      return i < t.N1 ? t.segments[i].delta_start : t.delta_end();
    };
    const auto tube_pts = tube_sample_points(*traj, n1, node_radius, config.constants_stride);
    const SpeedBounds tb = estimate_speed_bounds(field, tube_pts, m_floor);
    k.M_C = tb.M;
    k.m = tb.m;
    k.a = std::numeric_limits<double>::infinity();
    k.b = 0.0;
    k.max_M_tilde = 0.0;
    for (const auto& seg : t.segments) {
      k.a = std::min(k.a, seg.a);
      k.b = std::max(k.b, seg.b);
      k.max_M_tilde = std::max(k.max_M_tilde, seg.M_tilde);
    }
    cert.mu_perp_min = std::numeric_limits<double>::infinity();
    cert.mu_perp_max = -std::numeric_limits<double>::infinity();
    for (const auto& seg : t.segments) {
      cert.mu_perp_min = std::min(cert.mu_perp_min, seg.mu_perp_node);
      cert.mu_perp_max = std::max(cert.mu_perp_max, seg.mu_perp_node);
    }
    const double mu_last =
        transverse_measure(field, traj->node(n1), tc.lambda_sampling.method, m_floor).mu_perp;
    cert.mu_perp_min = std::min(cert.mu_perp_min, mu_last);
    cert.mu_perp_max = std::max(cert.mu_perp_max, mu_last);
    cert.alignment_warning = t.min_alignment < 0.9;

    k.provenance = {
        {"region", {{"kind", "tube"}, {"radius", r}, {"node_stride", config.constants_stride},
                    {"samples", region_samples}, {"iterations", iterations + 1}}},
        {"L", {{"method", "max spectral norm of J over region samples"}, {"safety", config.lipschitz_safety}}},
        {"M_f", {{"method", "max |f| over region samples"}}},
        {"M_C", {{"method", "max |f| over tube samples at radii delta_i"}, {"samples", tube_pts.size()}}},
        {"m", {{"method", "min |f| over tube samples at radii delta_i"}}},
        {"M_tilde", {{"method", "max |f| along each step plus padding"}, {"n_s", tc.lambda_sampling.n_s},
                     {"pad_factor", tc.lambda_sampling.pad_factor}}},
        {"a_b", {{"method", "theta' on offsets delta and delta/2, padded by neighbour variation"},
                 {"n_s", tc.ab_sampling.n_s}, {"pad_factor", tc.ab_sampling.pad_factor},
                 {"passes", tc.passes}}},
        {"Lambda", {{"method", "max mu_perp over slice samples plus padding"}, {"n_s", tc.lambda_sampling.n_s},
                    {"n_ball", tc.lambda_sampling.n_ball}, {"pad_factor", tc.lambda_sampling.pad_factor},
                    {"stride", tc.lambda_stride}, {"alpha_mode", to_string(tc.alpha_mode)}}},
    };

    cert.step = check_step_condition(t, k.L, k.M_f);
    cert.inclusion = check_return_inclusion(t, *traj, config.inclusion_samples);

    if (config.run_eta) {
      EtaConfig ec = config.eta;
      if (!(ec.horizon > 0.0)) ec.horizon = 2.0 * ret.R + 1.0;
      cert.eta = estimate_eta(field, t.Y0, config.h, ec, excl);
      k.eta = cert.eta->eta;
      k.T_lo = cert.eta->T_lo;
      k.T_hi = cert.eta->T_hi;
      k.R_prime = cert.eta->R_prime;
      k.provenance["eta"] = {{"method", "half the minimum fine-step first return over section samples"},
                             {"samples", ec.n_samples},
                             {"fine_step", cert.eta->h_fine},
                             {"horizon", ec.horizon},
                             {"seed", ec.seed}};
    }
    cert.constants = k;
    cert.tube = std::move(tube);

    if (!cert.step->holds) {
      cert.reason = "eq:h violated";
      cert.message = "step condition fails at step " + std::to_string(cert.step->argmin);
    } else if (!cert.inclusion->holds) {
      cert.reason = "eq:new violated";
      cert.message = "return slice is not contained in the initial section disk";
    } else if (!cert.eta || !cert.eta->established) {
      cert.reason = "eta not established";
    } else {
      cert.certified = true;
      cert.reason = "certified";
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInput) throw;
    return detail::make_failed(std::move(cert), e);
  }
  return cert;
}

}  // namespace cyclecert
