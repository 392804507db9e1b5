#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/geometry.hpp"
#include "cyclecert/parallel.hpp"
#include "cyclecert/transverse.hpp"
#include "cyclecert/vector_field.hpp"

namespace cyclecert {

/// Axis-aligned working region.
struct RegionBox {
  Vector lo;
  Vector hi;

  static RegionBox bounding(std::span<const Vector> points, double margin) {
    if (points.empty()) throw Error(ErrorKind::kInput, "cannot bound an empty point set");
    RegionBox box{points.front(), points.front()};
    for (const auto& p : points) {
      box.lo = box.lo.cwiseMin(p);
      box.hi = box.hi.cwiseMax(p);
    }
    box.lo.array() -= margin;
    box.hi.array() += margin;
    return box;
  }

  bool contains(const Vector& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }

  /// Tensor grid with `intervals` cells per axis ((intervals+1)^n points).
  /// Doubling `intervals` yields a superset of the points.
  std::vector<Vector> grid(int intervals) const {
    if (intervals < 1) throw Error(ErrorKind::kInput, "grid needs at least one interval");
    if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
      throw Error(ErrorKind::kInput, "empty region");
    const auto n = lo.size();
    std::vector<Vector> out;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    for (;;) {
      Vector p(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double q = static_cast<double>(idx[static_cast<std::size_t>(k)]) / static_cast<double>(intervals);
        p[k] = lo[k] + (hi[k] - lo[k]) * q;
      }
      out.push_back(std::move(p));
      Eigen::Index k = 0;
      while (k < n && ++idx[static_cast<std::size_t>(k)] > intervals) idx[static_cast<std::size_t>(k++)] = 0;
      if (k == n) break;
    }
    return out;
  }
};

inline double spectral_norm(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m.transpose() * m, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

/// Max spectral norm of J over the sample points, times `safety`.
inline double estimate_lipschitz(const VectorField& field, std::span<const Vector> points, double safety = 1.0) {
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, spectral_norm(field.eval_jacobian(p)));
  return best * safety;
}

inline double estimate_lipschitz(const VectorField& field, const RegionBox& region, int intervals,
                                 double safety = 1.0) {
  const auto pts = region.grid(intervals);
  return estimate_lipschitz(field, pts, safety);
}

struct SpeedBounds {
  double m = 0.0;
  double M = 0.0;
  bool equilibrium_flag = false;
  std::size_t samples = 0;
};

inline SpeedBounds estimate_speed_bounds(const VectorField& field, std::span<const Vector> points,
                                         double m_floor = kDefaultMFloor) {
  if (points.empty()) throw Error(ErrorKind::kInput, "no sample points");
  SpeedBounds out{std::numeric_limits<double>::infinity(), 0.0, false, points.size()};
  Vector f(field.dim());
  for (const auto& p : points) {
    field.eval_f(p, f);
    const double speed = f.norm();
    out.m = std::min(out.m, speed);
    out.M = std::max(out.M, speed);
  }
  out.equilibrium_flag = out.m < m_floor;
  return out;
}

inline SpeedBounds estimate_speed_bounds(const VectorField& field, const RegionBox& region, int intervals,
                                         double m_floor = kDefaultMFloor) {
  const auto pts = region.grid(intervals);
  return estimate_speed_bounds(field, pts, m_floor);
}

/// Points of the tube around nodes [0, last_node] (every `stride`-th node
/// plus the last): each center plus offsets of radius(i) and radius(i)/2
/// along the section directions.
inline std::vector<Vector> tube_sample_points(const EulerTrajectory& traj, std::size_t last_node,
                                              const std::function<double(std::size_t)>& radius,
                                              std::size_t stride) {
  stride = std::max<std::size_t>(stride, 1);
  last_node = std::min(last_node, traj.steps());
  std::vector<Vector> out;
  auto add = [&](std::size_t i) {
    const Vector& c = traj.node(i);
    out.push_back(c);
    const double r = radius(i);
    if (r <= 0.0) return;
    const Matrix basis = transverse_basis(traj.f_node(i));
    for (const auto& d : sphere_directions(basis, 2 * static_cast<int>(basis.cols()))) {
      out.push_back(c + r * d);
      out.push_back(c + 0.5 * r * d);
    }
  };
  for (std::size_t i = 0; i < last_node; i += stride) add(i);
  add(last_node);
  return out;
}

// ---------------------------------------------------------------------------
// Reparametrization rate
//
// Differentiating <xi(theta(s)) - x_i(s), f(x_i(s))> = 0 in s gives
//   theta' <f(xi), f(x_i(s))> - <f(x_i), f(x_i(s))>
//     + <xi - x_i(s), J(x_i(s)) f(x_i)> = 0.

inline double theta_dot(const VectorField& field, const Vector& x_i, const Vector& f_i, double s,
                        const Vector& xi, double m_floor = kDefaultMFloor) {
  const Vector c = x_i + s * f_i;
  const Vector fc = field.eval_f(c);
  const Vector offset = xi - c;
  if (std::abs(offset.dot(fc)) > 1e-8 * fc.norm() * (1.0 + offset.norm()))
    throw Error(ErrorKind::kInput, "theta_dot: point is not on the moving section");
  const double denom = field.eval_f(xi).dot(fc);
  if (!(std::abs(denom) >= m_floor * fc.norm()))
    throw Error(ErrorKind::kTransversalityLoss, "flow at the synchronized point is tangent to the section");
  const double numer = f_i.dot(fc) - offset.dot(field.eval_jacobian(c) * f_i);
  return numer / denom;
}

struct AbSampling {
  int n_s = 5;
  double pad_factor = 1.0;
  double m_floor = kDefaultMFloor;
};

struct AbBounds {
  double a = 1.0;
  double b = 1.0;
  double theta_min = 1.0;
  double theta_max = 1.0;
  double margin = 0.0;
  std::size_t evaluations = 0;
};

/// Bounds of theta' over segments [first, first + count) with section
/// offsets up to radius(elapsed time) in both directions along every
/// section basis vector (and at half that magnitude).
inline AbBounds estimate_ab(const VectorField& field, const EulerTrajectory& traj, std::size_t first,
                            std::size_t count, const std::function<double(double)>& radius,
                            const AbSampling& sampling) {
  const double h = traj.h();
  const double t0 = static_cast<double>(first) * h;
  const double span = static_cast<double>(count) * h;
  AbBounds out;
  out.theta_min = std::numeric_limits<double>::infinity();
  out.theta_max = -std::numeric_limits<double>::infinity();
  double variation = 0.0;
  std::vector<double> prev_row;
  for (double dt : linspace(0.0, span, std::max(sampling.n_s, 2))) {
    const double t = std::min(t0 + dt, traj.horizon());
    auto [i, s] = traj.locate(t);
    const Vector& x_i = traj.node(i);
    const Vector& f_i = traj.f_node(i);
    const Vector c = traj.segment_point(i, s);
    const Vector fc = field.eval_f(c);
    if (!(fc.norm() > sampling.m_floor))
      throw Error(ErrorKind::kEquilibrium, "trajectory passes too close to an equilibrium");
    const Matrix basis = transverse_basis(fc);
    const double r = radius(dt);
    if (!(r >= 0.0)) throw Error(ErrorKind::kInput, "offset radius must be non-negative");
    std::vector<double> row{theta_dot(field, x_i, f_i, s, c, sampling.m_floor)};
    if (r > 0.0) {
      for (const auto& d : sphere_directions(basis, 2 * static_cast<int>(basis.cols()))) {
        row.push_back(theta_dot(field, x_i, f_i, s, c + 0.5 * r * d, sampling.m_floor));
        row.push_back(theta_dot(field, x_i, f_i, s, c + r * d, sampling.m_floor));
      }
    }
    for (std::size_t m = 1; m < row.size(); ++m) {
      // Pairs are (half, full) per direction; half connects to the center.
      const std::size_t nb = (m % 2 == 1) ? 0 : m - 1;
      variation = std::max(variation, std::abs(row[m] - row[nb]));
    }
    if (prev_row.size() == row.size()) {
      for (std::size_t m = 0; m < row.size(); ++m)
        variation = std::max(variation, std::abs(row[m] - prev_row[m]));
    }
    for (double v : row) {
      out.theta_min = std::min(out.theta_min, v);
      out.theta_max = std::max(out.theta_max, v);
    }
    out.evaluations += row.size();
    prev_row = std::move(row);
  }
  out.margin = sampling.pad_factor * variation;
  out.a = out.theta_min - out.margin;
  out.b = out.theta_max + out.margin;
  if (!(out.a > 0.0))
    throw Error(ErrorKind::kInvalidReparametrization,
                "theta' lower bound is not positive (step too large or tube too wide)");
  return out;
}

inline AbBounds estimate_ab(const VectorField& field, const EulerTrajectory& traj, std::size_t i,
                            const std::function<double(double)>& radius, const AbSampling& sampling = {}) {
  return estimate_ab(field, traj, i, 1, radius, sampling);
}

// ---------------------------------------------------------------------------
// Return-time bounds

/// B(center, radius) intersected with the hyperplane through `center`
/// orthogonal to `normal`.
struct SectionDisk {
  Vector center;
  double radius = 0.0;
  Vector normal;
};

/// Deterministic sample of a section disk. Planar disks are segments sampled
/// evenly with both endpoints and the center (an even count is raised by one
/// so the center is included). Higher dimensions: center, +-radius along each
/// basis direction, then seeded uniform points.
inline std::vector<Vector> section_disk_samples(const SectionDisk& disk, int n, std::uint64_t seed = 0) {
  if (n < 1) throw Error(ErrorKind::kInput, "need at least one sample");
  if (n == 1 || disk.radius == 0.0) return {disk.center};
  const Matrix basis = transverse_basis(disk.normal);
  std::vector<Vector> out;
  if (basis.cols() == 1) {
    const int count = n % 2 == 1 ? n : n + 1;
    for (double t : linspace(-1.0, 1.0, count)) out.push_back(disk.center + t * disk.radius * basis.col(0));
    return out;
  }
  out.push_back(disk.center);
  for (Eigen::Index k = 0; k < basis.cols() && static_cast<int>(out.size()) < n; ++k) {
    out.push_back(disk.center + disk.radius * basis.col(k));
    if (static_cast<int>(out.size()) < n) out.push_back(disk.center - disk.radius * basis.col(k));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double m = static_cast<double>(basis.cols());
  while (static_cast<int>(out.size()) < n) {
    Vector g(basis.cols());
    for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = gauss(rng);
    const double rr = disk.radius * std::pow(unif(rng), 1.0 / m);
    out.push_back(disk.center + rr * (basis * g.normalized()));
  }
  return out;
}

struct EtaConfig {
  int n_samples = 11;
  double fine_factor = 0.1;  // fine step = fine_factor * h
  double horizon = 0.0;      // 0: chosen by the caller
  std::uint64_t seed = 0;
};

struct EtaEstimate {
  double eta = 0.0;
  double T_lo = 0.0;
  double T_hi = 0.0;
  double R_prime = 0.0;
  double h_fine = 0.0;
  std::vector<double> fine_returns;
  std::vector<double> euler_returns;
  bool established = false;
};

/// First-return sweep over samples of the section disk: fine-step returns
/// give eta = min/2, T' = min and T'' = max; step-h Euler returns give R'.
inline EtaEstimate estimate_eta(const VectorField& field, const SectionDisk& disk, double h,
                                const EtaConfig& config, const Exclusion& exclusion) {
  if (!(config.horizon > 0.0)) throw Error(ErrorKind::kInput, "return-time sweep needs a positive horizon");
  const auto samples = section_disk_samples(disk, config.n_samples, config.seed);
  const Section section{disk.center, disk.normal};
  EtaEstimate out;
  out.h_fine = h * config.fine_factor;
  const Exclusion fine_excl{exclusion.t_min * config.fine_factor, exclusion.r_excl};
  out.fine_returns.assign(samples.size(), 0.0);
  out.euler_returns.assign(samples.size(), 0.0);
  parallel_for(samples.size(), [&](std::size_t k) {
    auto fine = stream_returns(field, samples[k], out.h_fine, section, fine_excl, config.horizon);
    if (fine.empty()) throw IndexedError(ErrorKind::kNoReturn, "section sample does not return", k);
    out.fine_returns[k] = fine.front().time;
    auto coarse = stream_returns(field, samples[k], h, section, exclusion, config.horizon);
    if (coarse.empty()) throw IndexedError(ErrorKind::kNoReturn, "section sample does not return", k);
    out.euler_returns[k] = coarse.front().time;
  });
  out.T_lo = *std::min_element(out.fine_returns.begin(), out.fine_returns.end());
  out.T_hi = *std::max_element(out.fine_returns.begin(), out.fine_returns.end());
  out.R_prime = *std::max_element(out.euler_returns.begin(), out.euler_returns.end());
  out.eta = 0.5 * out.T_lo;
  out.established = out.eta > 0.0;
  return out;
}

// ---------------------------------------------------------------------------

/// Scalars consumed by the certificates. `provenance` records how each was
/// obtained (sample counts, strides, padding); none is formally rigorous.
struct GlobalConstants {
  double L = 0.0;
  double M_f = 0.0;
  double M_C = 0.0;
  double m = 0.0;
  double max_M_tilde = 0.0;
  double a = 1.0;
  double b = 1.0;
  double eta = 0.0;
  double T_lo = 0.0;
  double T_hi = 0.0;
  double R_prime = 0.0;
  nlohmann::json provenance = nlohmann::json::object();
};

}  // namespace cyclecert
