#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "cyclecert/constants.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/geometry.hpp"
#include "cyclecert/transverse.hpp"

namespace cyclecert {

/// kReset starts each step's reachability slice at the current tube radius
/// (alpha_i = delta_i); kCumulative chains alpha_{i+1} = alpha_i + b M_f h
/// from alpha_0 = delta_0 over the whole loop.
enum class AlphaMode { kReset, kCumulative };

inline const char* to_string(AlphaMode m) { return m == AlphaMode::kReset ? "reset" : "cumulative"; }

struct TubeConfig {
  double gamma = 0.015;
  SliceSampling lambda_sampling;
  AbSampling ab_sampling;
  std::size_t lambda_stride = 10;
  int passes = 2;
  AlphaMode alpha_mode = AlphaMode::kReset;
  std::optional<double> forced_sigma;  // test hook: constant rate on every step
};

/// Step `index` (1-based) of the tube, covering t in [(index-1)h, index h].
struct TubeSegment {
  std::size_t index = 0;
  double alpha_start = 0.0;
  double alpha_rate = 0.0;  // b M_f
  double delta_start = 0.0;
  double delta_end = 0.0;
  double lambda = 0.0;
  double lambda_padding = 0.0;
  double sigma = 0.0;
  SigmaBranch branch = SigmaBranch::kRegularized;
  double a = 1.0;
  double b = 1.0;
  double M_tilde = 0.0;
  double mu_perp_node = 0.0;  // mu_perp at the step's start node

  double alpha(double s) const { return alpha_start + alpha_rate * s; }
  double delta(double s) const { return delta_start * std::exp(sigma * s); }
};

struct PassSummary {
  int pass = 0;
  double delta_end = 0.0;
  double delta_min = 0.0;
  double delta_max = 0.0;
  double a_min = 0.0;
  double b_max = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

struct Tube {
  double h = 0.0;
  double delta0 = 0.0;
  double gamma = 0.0;
  SectionDisk Y0;
  double R1 = 0.0;
  std::size_t N1 = 0;
  std::vector<TubeSegment> segments;
  std::vector<PassSummary> passes;
  double min_alignment = 1.0;

  const TubeSegment& segment(std::size_t index) const { return segments.at(index - 1); }

  double delta_end() const { return segments.back().delta_end; }

  double delta_min() const {
    double m = delta0;
    for (const auto& s : segments) m = std::min({m, s.delta_start, s.delta_end});
    return m;
  }

  double delta_max() const {
    double m = delta0;
    for (const auto& s : segments) m = std::max({m, s.delta_start, s.delta_end});
    return m;
  }

  /// delta(t) for t in [0, N1 h].
  double delta_at(double t) const {
    const auto [index, s] = locate(t);
    return segment(index).delta(s);
  }

  /// (1-based step index, offset) of t in [0, N1 h]; node times map to the
  /// start of the following step, the final node to the end of step N1.
  std::pair<std::size_t, double> locate(double t) const {
    if (!(t >= 0.0) || t > static_cast<double>(N1) * h * (1.0 + 1e-12))
      throw Error(ErrorKind::kOutOfRange, "time outside the tube");
    const double q = t / h;
    const double nearest = std::round(q);
    std::size_t i;
    double s;
    if (std::abs(q - nearest) <= 1e-9) {
      i = static_cast<std::size_t>(nearest);
      s = 0.0;
    } else {
      i = static_cast<std::size_t>(std::floor(q));
      s = t - static_cast<double>(i) * h;
    }
    if (i >= N1) return {N1, h};
    return {i + 1, std::clamp(s, 0.0, h)};
  }

  /// h * sum_{k=1}^{i} sigma_k with compensated summation (0 for i = 0).
  double exponent(std::size_t i) const {
    double sum = 0.0, comp = 0.0;
    for (std::size_t k = 0; k < i; ++k) {
      const double v = segments.at(k).sigma;
      const double t = sum + v;
      comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
      sum = t;
    }
    return h * (sum + comp);
  }
};

/// Builds the tube over steps 1..N1 of the first return.
///
/// Each pass walks the steps in windows of lambda_stride: it bounds theta'
/// (pass 1 uses a = b = 1; later passes sample offsets up to the previous
/// pass's radius), bounds mu_perp over the window's slices of radius
/// alpha(s), derives sigma and advances delta_{i+1} = delta_i e^{sigma h}.
inline Tube build_tube(const EulerTrajectory& traj, const ReturnTime& first_return, double delta0,
                       double M_f, const TubeConfig& config) {
  if (!(delta0 > 0.0)) throw Error(ErrorKind::kInput, "delta0 must be positive");
  if (!(M_f > 0.0)) throw Error(ErrorKind::kInput, "M_f must be positive");
  if (config.lambda_stride < 1 || config.passes < 1) throw Error(ErrorKind::kInput, "bad tube configuration");
  if (first_return.N < 1 || first_return.N > traj.steps())
    throw Error(ErrorKind::kInput, "first return lies outside the trajectory");
  const VectorField& field = traj.field();
  const double h = traj.h();

  Tube tube;
  tube.h = h;
  tube.delta0 = delta0;
  tube.gamma = config.gamma;
  tube.Y0 = SectionDisk{traj.x0(), delta0, traj.f_node(0)};
  tube.R1 = first_return.R;
  tube.N1 = first_return.N;
  const std::size_t n1 = tube.N1;
  tube.segments.resize(n1);

  // Pass-independent per-step data.
  const auto& ls = config.lambda_sampling;
  Vector f(field.dim());
  for (std::size_t i = 0; i < n1; ++i) {
    TubeSegment& seg = tube.segments[i];
    seg.index = i + 1;
    double top = 0.0, prev = -1.0, variation = 0.0;
    for (double s : linspace(0.0, h, std::max(ls.n_s, 2))) {
      field.eval_f(traj.segment_point(i, s), f);
      const double speed = f.norm();
      top = std::max(top, speed);
      if (prev >= 0.0) variation = std::max(variation, std::abs(speed - prev));
      prev = speed;
    }
    seg.M_tilde = top + ls.pad_factor * variation;
    const auto spec = transverse_measure(field, traj.node(i), ls.method, ls.m_floor);
    seg.mu_perp_node = spec.mu_perp;
    tube.min_alignment = std::min(tube.min_alignment, spec.alignment);
  }

  std::vector<double> prev_delta;  // delta_i per node from the previous pass
  std::vector<double> prev_sigma;
  for (int pass = 1; pass <= config.passes; ++pass) {
    double delta = delta0;
    double alpha = delta0;
    std::vector<double> node_delta(n1 + 1);
    node_delta[0] = delta0;
    for (std::size_t first = 0; first < n1; first += config.lambda_stride) {
      const std::size_t count = std::min(config.lambda_stride, n1 - first);
      AbBounds ab;
      if (pass > 1) {
        double r = 0.0;
        double grow = 0.0;
        for (std::size_t k = first; k <= first + count; ++k) r = std::max(r, prev_delta[k]);
        for (std::size_t k = first; k < first + count; ++k) grow = std::max(grow, prev_sigma[k]);
        r = std::max(r, delta * std::exp(grow * static_cast<double>(count) * h));
        ab = estimate_ab(field, traj, first, count, [r](double) { return r; }, config.ab_sampling);
      }
      const double radius_start = config.alpha_mode == AlphaMode::kReset ? delta : alpha;
      const double rate = ab.b * M_f;
      LambdaBound lb = lambda_over_window(field, traj, first, count, radius_start, rate, ls);
      tube.min_alignment = std::min(tube.min_alignment, lb.min_alignment);
      SigmaRate sr;
      if (config.forced_sigma) {
        sr.sigma = *config.forced_sigma;
        sr.branch = sr.sigma < 0.0 ? SigmaBranch::kContracting : SigmaBranch::kRegularized;
      } else {
        sr = sigma_rate(lb.lambda, ab.a, ab.b, config.gamma, first + 1);
      }
      for (std::size_t i = first; i < first + count; ++i) {
        TubeSegment& seg = tube.segments[i];
        seg.alpha_start = config.alpha_mode == AlphaMode::kReset ? delta : alpha;
        seg.alpha_rate = rate;
        seg.delta_start = delta;
        seg.delta_end = delta * std::exp(sr.sigma * h);
        seg.lambda = lb.lambda;
        seg.lambda_padding = lb.padding;
        seg.sigma = sr.sigma;
        seg.branch = sr.branch;
        seg.a = ab.a;
        seg.b = ab.b;
        delta = seg.delta_end;
        alpha = seg.alpha_start + rate * h;
        node_delta[i + 1] = delta;
        if (!(delta > 0.0) || !std::isfinite(delta))
          throw IndexedError(ErrorKind::kNumeric, "tube radius left (0, inf)", i + 1);
      }
    }
    PassSummary summary;
    summary.pass = pass;
    summary.delta_end = delta;
    summary.delta_min = tube.delta_min();
    summary.delta_max = tube.delta_max();
    summary.a_min = std::numeric_limits<double>::infinity();
    summary.b_max = 0.0;
    summary.lambda_min = std::numeric_limits<double>::infinity();
    summary.lambda_max = -std::numeric_limits<double>::infinity();
    prev_sigma.assign(n1, 0.0);
    for (std::size_t i = 0; i < n1; ++i) {
      const auto& seg = tube.segments[i];
      summary.a_min = std::min(summary.a_min, seg.a);
      summary.b_max = std::max(summary.b_max, seg.b);
      summary.lambda_min = std::min(summary.lambda_min, seg.lambda);
      summary.lambda_max = std::max(summary.lambda_max, seg.lambda);
      prev_sigma[i] = seg.sigma;
    }
    tube.passes.push_back(summary);
    prev_delta = std::move(node_delta);
  }
  return tube;
}

// ---------------------------------------------------------------------------
// Existence conditions

struct StepCondition {
  std::vector<double> margins;  // per step, 1-based step k at margins[k-1]
  std::vector<double> rhs;
  double min_margin = 0.0;
  std::size_t argmin = 0;  // 1-based step index
  double max_rhs = 0.0;
  bool holds = false;
};

/// Per step i: min_s delta_{i-1}(s) - h (M~_i (2L / (gamma a_i) + 1) + b_i M_f).
inline StepCondition check_step_condition(const Tube& tube, double L, double M_f) {
  StepCondition out;
  out.min_margin = std::numeric_limits<double>::infinity();
  for (const auto& seg : tube.segments) {
    const double lowest = seg.sigma < 0.0 ? seg.delta_end : seg.delta_start;
    const double rhs =
        tube.h * (seg.M_tilde * (2.0 * L / (tube.gamma * seg.a) + 1.0) + seg.b * M_f);
    const double margin = lowest - rhs;
    out.rhs.push_back(rhs);
    out.margins.push_back(margin);
    out.max_rhs = std::max(out.max_rhs, rhs);
    if (margin < out.min_margin) {
      out.min_margin = margin;
      out.argmin = seg.index;
    }
  }
  out.holds = out.min_margin >= 0.0;
  return out;
}

struct GeometricInclusion {
  bool holds = true;
  std::size_t points_checked = 0;
  std::size_t slices_empty = 0;
  double max_distance = 0.0;  // largest |z - x0| over checked points
};

struct InclusionResult {
  double distance = 0.0;  // |x(R1) - x0|
  double delta_R1 = 0.0;
  double delta0 = 0.0;
  double lhs = 0.0;
  bool holds = false;
  GeometricInclusion geometric;
};

/// Sufficient test |x(R1) - x0| + delta(R1) < delta0, plus a direct check
/// that sampled points of the last step's slices cut by the initial section
/// stay within B(x0, delta0).
inline InclusionResult check_return_inclusion(const Tube& tube, const EulerTrajectory& traj,
                                              int slice_samples = 64) {
  InclusionResult out;
  const Vector& x0 = tube.Y0.center;
  const Vector& n0 = tube.Y0.normal;
  const std::size_t last = tube.N1 - 1;
  const TubeSegment& seg = tube.segment(tube.N1);
  const double s_return = tube.R1 - static_cast<double>(last) * tube.h;
  out.distance = (traj.segment_point(last, s_return) - x0).norm();
  out.delta_R1 = seg.delta(s_return);
  out.delta0 = tube.delta0;
  out.lhs = out.distance + out.delta_R1;
  out.holds = out.lhs < out.delta0;

  const VectorField& field = traj.field();
  const Eigen::Index n = x0.size();
  // The return parameter itself is always included: there the slice center
  // lies on S0, so the slice meets S0 even when both are nearly parallel.
  auto params = linspace(0.0, tube.h, slice_samples);
  params.push_back(std::clamp(s_return, 0.0, tube.h));
  for (double s : params) {
    const Vector c = traj.segment_point(last, s);
    const Vector fc = field.eval_f(c);
    const double radius = seg.delta(s);
    Matrix A(2, n);
    A.row(0) = fc.transpose();
    A.row(1) = n0.transpose();
    const Eigen::Matrix2d gram = A * A.transpose();
    std::vector<Vector> pts;
    if (std::abs(gram.determinant()) <= 1e-14 * gram.norm() * gram.norm()) {
      // Slice plane parallel to S0: either disjoint from it or lying in it.
      if (std::abs(n0.dot(x0 - c)) > 1e-12 * n0.norm() * (1.0 + c.norm())) {
        ++out.geometric.slices_empty;
        continue;
      }
      pts.push_back(c);
      for (const auto& d : sphere_directions(transverse_basis(fc), 2 * static_cast<int>(n - 1)))
        pts.push_back(c + radius * d);
    } else {
      // Point of both hyperplanes nearest to c.
      const Eigen::Vector2d rhs(0.0, n0.dot(x0 - c));
      const Vector q = c + A.transpose() * gram.ldlt().solve(rhs);
      const double r2 = radius * radius - (q - c).squaredNorm();
      if (r2 < 0.0) {
        ++out.geometric.slices_empty;
        continue;
      }
      pts.push_back(q);
      if (n > 2) {
        Eigen::HouseholderQR<Matrix> qr(A.transpose());
        const Matrix full = qr.householderQ() * Matrix::Identity(n, n);
        const Matrix null_basis = full.rightCols(n - 2);
        for (const auto& d : sphere_directions(null_basis, 2 * static_cast<int>(n - 2)))
          pts.push_back(q + std::sqrt(r2) * d);
      }
    }
    for (const auto& z : pts) {
      const double dist = (z - x0).norm();
      out.geometric.max_distance = std::max(out.geometric.max_distance, dist);
      ++out.geometric.points_checked;
      if (dist > tube.delta0) out.geometric.holds = false;
    }
  }
  return out;
}

}  // namespace cyclecert
