#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cyclecert/constants.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/existence.hpp"
#include "cyclecert/parallel.hpp"
#include "cyclecert/transverse.hpp"
#include "cyclecert/tube.hpp"

namespace cyclecert {

/// Accumulated exponent over the first loop from z:
/// K(z, s) = h sum_{k<N1} sigma_k + s sigma_{N1}, evaluated at s = 0 and h.
struct ContractionExponent {
  Vector z;
  double K0 = 0.0;
  double Kh = 0.0;
  double K_max = 0.0;
  std::size_t N1 = 0;
  double R1 = 0.0;
  double sigma_last = 0.0;
};

/// Exponent from a built tube.
inline ContractionExponent contraction_exponent(const Tube& tube, const Vector& z) {
  ContractionExponent out;
  out.z = z;
  out.N1 = tube.N1;
  out.R1 = tube.R1;
  out.sigma_last = tube.segment(tube.N1).sigma;
  out.K0 = tube.exponent(tube.N1 - 1);
  out.Kh = out.K0 + tube.h * out.sigma_last;
  out.K_max = std::max(out.K0, out.Kh);
  return out;
}

/// Runs the tube pipeline from z (a point of the initial section disk
/// `Y0`) with the rates of `config` and speed bound M_f.
inline ContractionExponent contraction_exponent(const VectorField& field, const Vector& z, const SectionDisk& Y0,
                                                double M_f, const ExistenceConfig& config) {
  const Section s0{Y0.center, Y0.normal};
  if (!s0.contains(z, 1e-9) || (z - Y0.center).norm() > Y0.radius * (1.0 + 1e-12))
    throw Error(ErrorKind::kPrecondition, "start point is not in the initial section disk");
  const Exclusion excl = config.exclusion.value_or(default_exclusion(config.h, config.delta0));
  const auto streamed = stream_returns(field, z, config.h, s0, excl, config.max_time);
  if (streamed.empty()) throw Error(ErrorKind::kNoReturn, "no return from a section sample");
  const EulerTrajectory traj = simulate(field, z, config.h, streamed.front().step_index + 2);
  const auto rt = return_times(traj, s0, 1, excl);
  if (rt.returns.empty()) throw Error(ErrorKind::kNumeric, "stored trajectory lost the first return");
  TubeConfig tc = config.tube;
  tc.gamma = config.gamma;
  const Tube tube = build_tube(traj, rt.returns.front(), config.delta0, M_f, tc);
  return contraction_exponent(tube, z);
}

struct Sweep {
  double d = -std::numeric_limits<double>::infinity();
  std::vector<ContractionExponent> samples;
};

/// d = max over samples of Y0 of K_max. Samples always include the center
/// and, in the plane, both endpoints of the section segment.
inline Sweep sweep_Y0(const VectorField& field, const SectionDisk& Y0, int n_samples, double M_f,
                      const ExistenceConfig& config, std::uint64_t seed = 0) {
  if (n_samples < 1) throw Error(ErrorKind::kInput, "need at least one sample");
  const auto points = section_disk_samples(Y0, n_samples, seed);
  Sweep out;
  out.samples.resize(points.size());
  parallel_for(points.size(), [&](std::size_t k) {
    out.samples[k] = contraction_exponent(field, points[k], Y0, M_f, config);
  });
  for (const auto& s : out.samples) out.d = std::max(out.d, s.K_max);
  return out;
}

/// D = M_C (2L / (gamma a) + b + 1).
inline double compute_D(double M_C, double L, double gamma, double a, double b) {
  if (!(a > 0.0)) throw Error(ErrorKind::kInvalidReparametrization, "a must be positive");
  if (!(gamma > 0.0)) throw Error(ErrorKind::kInput, "gamma must be positive");
  return M_C * (2.0 * L / (gamma * a) + b + 1.0);
}

inline double compute_D(const GlobalConstants& k, double gamma) { return compute_D(k.M_C, k.L, gamma, k.a, k.b); }

// ---------------------------------------------------------------------------
// Weighted integral of mu_perp along one period

struct IntegralResult {
  double value = 0.0;
  double period = 0.0;
  std::size_t samples = 0;
};

inline double rho_weight(double mu_perp, double gamma) { return mu_perp < gamma ? 0.5 : 1.5; }

/// Trapezoid rule for rho(t) mu_perp(t) over samples (times[k], points[k]).
inline IntegralResult integral_criterion(const VectorField& field, std::span<const double> times,
                                         std::span<const Vector> points, double gamma,
                                         MeasureMethod method = MeasureMethod::kAuto) {
  if (times.size() != points.size() || times.size() < 2)
    throw Error(ErrorKind::kInput, "integral needs at least two matching samples");
  IntegralResult out;
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double mu = transverse_measure(field, points[k], method).mu_perp;
    const double g = rho_weight(mu, gamma) * mu;
    if (k > 0) out.value += 0.5 * (times[k] - times[k - 1]) * (g + prev);
    prev = g;
  }
  out.period = times.back() - times.front();
  out.samples = times.size();
  return out;
}

/// Streams a fine-step trajectory from x0 around one loop (to its first
/// return to the section through x0) and integrates rho mu_perp along it.
inline IntegralResult integral_criterion(const VectorField& field, const Vector& x0, double h_fine, double gamma,
                                         const Exclusion& exclusion, double max_time,
                                         MeasureMethod method = MeasureMethod::kAuto) {
  const Section s0 = section_through(field, x0);
  EulerStepper stepper(field, x0, h_fine);
  CrossingScanner scanner(field, s0, exclusion, h_fine);
  IntegralResult out;
  double prev = 0.0;
  {
    const double mu = transverse_measure(field, x0, method).mu_perp;
    prev = rho_weight(mu, gamma) * mu;
  }
  const auto n_steps = static_cast<std::size_t>(std::ceil(max_time / h_fine));
  for (std::size_t i = 0; i < n_steps; ++i) {
    const auto crossing = scanner.feed(i, stepper.x(), stepper.f(), stepper.next());
    const Vector& end = crossing ? crossing->point : stepper.next();
    const double dt = crossing ? crossing->s_star : h_fine;
    const double mu = transverse_measure(field, end, method).mu_perp;
    const double g = rho_weight(mu, gamma) * mu;
    out.value += 0.5 * dt * (g + prev);
    prev = g;
    ++out.samples;
    if (crossing) {
      out.period = crossing->time;
      return out;
    }
    stepper.advance();
  }
  throw Error(ErrorKind::kNoReturn, "no return while integrating along the loop");
}

// ---------------------------------------------------------------------------

struct AttractionConfig {
  int n_samples = 11;
  std::uint64_t seed = 0;
  double integral_step_factor = 0.1;  // integration step = factor * h
  std::optional<double> expected_d;   // reference value reported as a gap
};

struct AttractionCertificate {
  bool certified = false;
  std::string reason;
  std::string message;
  double d = 0.0;
  std::vector<ContractionExponent> samples;
  double D = 0.0;
  double Dh = 0.0;
  std::optional<IntegralResult> integral;
  std::optional<double> expected_d;
  std::optional<double> gap;
  double eta = 0.0;
  double T_lo = 0.0;
  double T_hi = 0.0;
  double R_prime = 0.0;
  bool bounds_established = false;
};

/// Averaged-contraction sweep over Y0, D and the informational integral.
/// Requires a certified existence certificate.
inline AttractionCertificate certify_attraction(const ExistenceCertificate& existence, const VectorField& field,
                                                const ExistenceConfig& existence_config,
                                                const AttractionConfig& config) {
  if (!existence.certified || !existence.tube || !existence.constants)
    throw Error(ErrorKind::kPrecondition, "existence certificate is not certified");
  const Tube& tube = *existence.tube;
  const GlobalConstants& k = *existence.constants;
  AttractionCertificate out;
  const Sweep sweep = sweep_Y0(field, tube.Y0, config.n_samples, k.M_f, existence_config, config.seed);
  out.d = sweep.d;
  out.samples = sweep.samples;
  out.D = compute_D(k, existence.gamma);
  out.Dh = out.D * existence.h;
  out.expected_d = config.expected_d;
  if (config.expected_d) out.gap = out.d - *config.expected_d;
  const Exclusion excl =
      existence_config.exclusion.value_or(default_exclusion(existence.h, existence.delta0));
  const double h_int = existence.h * config.integral_step_factor;
  const Exclusion fine_excl{excl.t_min * config.integral_step_factor, excl.r_excl};
  out.integral = integral_criterion(field, existence.x0, h_int, existence.gamma, fine_excl,
                                    existence_config.max_time, existence_config.tube.lambda_sampling.method);
  if (existence.eta) {
    out.eta = existence.eta->eta;
    out.T_lo = existence.eta->T_lo;
    out.T_hi = existence.eta->T_hi;
    out.R_prime = existence.eta->R_prime;
    out.bounds_established = existence.eta->established;
  }
  if (!(out.d < 0.0)) {
    out.reason = "eq:newrelax violated";
    out.message = "accumulated exponent is not negative on every sample";
  } else if (!out.bounds_established) {
    out.reason = "return-time bounds not established";
  } else {
    out.certified = true;
    out.reason = "certified";
  }
  return out;
}

}  // namespace cyclecert
