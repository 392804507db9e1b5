#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "cyclecert/attraction.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/existence.hpp"
#include "cyclecert/parallel.hpp"
#include "cyclecert/tube.hpp"

namespace cyclecert {

/// Fine-step Euler solution from y0, generated on demand and dense-evaluable
/// on its own linear segments. Stands in for the exact flow.
class ReferenceSolution {
 public:
  ReferenceSolution(const VectorField& field, const Vector& y0, double h_ref)
      : stepper_(field, y0, h_ref) {
    nodes_.push_back({stepper_.x(), stepper_.f()});
  }

  double h() const { return stepper_.h(); }

  /// Node k (k >= first retained index).
  const Vector& node(std::size_t k) { return entry(k).x; }
  const Vector& f_node(std::size_t k) { return entry(k).f; }

  Vector segment_point(std::size_t k, double s) {
    const Entry& e = entry(k);
    return e.x + s * e.f;
  }

  /// Drops nodes before k; they can no longer be queried.
  void release_before(std::size_t k) {
    while (base_ < k && nodes_.size() > 1) {
      nodes_.pop_front();
      ++base_;
    }
  }

 private:
  struct Entry {
    Vector x;
    Vector f;
  };

  const Entry& entry(std::size_t k) {
    if (k < base_) throw Error(ErrorKind::kOutOfRange, "reference node already released");
    while (base_ + nodes_.size() <= k) {
      stepper_.advance();
      nodes_.push_back({stepper_.x(), stepper_.f()});
    }
    return nodes_[k - base_];
  }

  EulerStepper stepper_;
  std::deque<Entry> nodes_;
  std::size_t base_ = 0;
};

struct SyncErrorSeries {
  double h = 0.0;
  double h_ref = 0.0;
  std::vector<double> t;
  std::vector<double> theta;
  std::vector<double> error;
  std::vector<double> residual;  // |<xi(theta) - x(t), f(x(t))>| / |f(x(t))|
  std::vector<double> bound;     // max(delta(t), D h) when a tube is attached

  std::size_t size() const { return t.size(); }
};

/// Tracks theta(t) along the reference: for each target point x with flow
/// f_x it finds the first theta >= the previous one where
/// <xi(theta) - x, f_x> changes sign from negative, solving exactly on the
/// linear reference segment.
class Synchronizer {
 public:
  Synchronizer(ReferenceSolution& reference, double window) : ref_(reference), window_(window) {}

  struct Result {
    double theta = 0.0;
    double error = 0.0;
    double residual = 0.0;
  };

  Result sync(const Vector& x, const Vector& fx, std::size_t j) {
    const double hr = ref_.h();
    const double fnorm = fx.norm();
    const double theta_prev = theta_;
    auto g = [&](const Vector& p) { return (p - x).dot(fx); };
    std::size_t k = k_;
    double s0 = s_;
    Vector p = s0 == 0.0 ? ref_.node(k) : ref_.segment_point(k, s0);
    double g_lo = g(p);
    Result out;
    if (g_lo >= 0.0) {
      // Already at or past the section: keep theta (it may not decrease).
      out.theta = theta_prev;
    } else {
      for (;;) {
        const Vector& end = ref_.node(k + 1);
        const double g1 = g(end);
        if (g1 >= 0.0) {
          const double s = s0 + (hr - s0) * (-g_lo / (g1 - g_lo));
          if (s >= hr) {
            p = end;
            ++k;
            s0 = 0.0;
            out.theta = static_cast<double>(k) * hr;
          } else {
            p = ref_.segment_point(k, s);
            s0 = s;
            out.theta = (static_cast<double>(k) + s / hr) * hr;
          }
          break;
        }
        ++k;
        s0 = 0.0;
        g_lo = g1;
        if (static_cast<double>(k) * hr > theta_prev + window_)
          throw IndexedError(ErrorKind::kSynchronizationLost, "no synchronizing root within the window", j);
      }
    }
    k_ = k;
    s_ = s0;
    theta_ = out.theta;
    ref_.release_before(k_);
    out.error = (p - x).norm();
    out.residual = fnorm > 0.0 ? std::abs(g(p)) / fnorm : 0.0;
    return out;
  }

 private:
  ReferenceSolution& ref_;
  double window_;
  std::size_t k_ = 0;
  double s_ = 0.0;
  double theta_ = 0.0;
};

/// Synchronized error between a stored Euler trajectory and the reference,
/// sampled at the Euler nodes.
inline SyncErrorSeries synchronize(ReferenceSolution& reference, const EulerTrajectory& traj,
                                   double window_factor = 3.0) {
  SyncErrorSeries out;
  out.h = traj.h();
  out.h_ref = reference.h();
  Synchronizer sync(reference, window_factor * traj.h());
  for (std::size_t j = 0; j <= traj.steps(); ++j) {
    const auto r = sync.sync(traj.node(j), traj.f_node(j), j);
    out.t.push_back(static_cast<double>(j) * traj.h());
    out.theta.push_back(r.theta);
    out.error.push_back(r.error);
    out.residual.push_back(r.residual);
  }
  return out;
}

/// Same, streaming n_steps Euler steps from x0 instead of storing them.
inline SyncErrorSeries synchronize(ReferenceSolution& reference, const VectorField& field, const Vector& x0,
                                   double h, std::size_t n_steps, double window_factor = 3.0) {
  SyncErrorSeries out;
  out.h = h;
  out.h_ref = reference.h();
  Synchronizer sync(reference, window_factor * h);
  EulerStepper stepper(field, x0, h);
  out.t.reserve(n_steps + 1);
  out.theta.reserve(n_steps + 1);
  out.error.reserve(n_steps + 1);
  out.residual.reserve(n_steps + 1);
  for (std::size_t j = 0;; ++j) {
    const auto r = sync.sync(stepper.x(), stepper.f(), j);
    out.t.push_back(stepper.time());
    out.theta.push_back(r.theta);
    out.error.push_back(r.error);
    out.residual.push_back(r.residual);
    if (j == n_steps) break;
    stepper.advance();
  }
  return out;
}

/// Step-condition floor h (M~_i (2L/(gamma a_i)+1) + b_i M_f) of step i.
inline double step_floor(const Tube& tube, const TubeSegment& seg, double L, double M_f) {
  return tube.h * (seg.M_tilde * (2.0 * L / (tube.gamma * seg.a) + 1.0) + seg.b * M_f);
}

/// Indices j with t_j <= N1 h whose error exceeds max(delta(t_j), floor_i);
/// with include_floor = false the bound is delta(t_j) alone (tube membership).
inline std::vector<std::size_t> tube_membership_check(const SyncErrorSeries& series, const Tube& tube, double L,
                                                      double M_f, bool include_floor = true) {
  std::vector<std::size_t> out;
  const double end = static_cast<double>(tube.N1) * tube.h;
  for (std::size_t j = 0; j < series.size(); ++j) {
    if (series.t[j] > end * (1.0 + 1e-12)) break;
    const auto [index, s] = tube.locate(std::min(series.t[j], end));
    const TubeSegment& seg = tube.segment(index);
    double bound = seg.delta(s);
    if (include_floor) bound = std::max(bound, step_floor(tube, seg, L, M_f));
    if (series.error[j] > bound) out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error-floor experiment

struct ErrorCurveConfig {
  ExistenceConfig existence;
  double periods = 5.0;
  double ref_factor = 0.01;  // h_ref = ref_factor * h
  double tail_fraction = 0.2;
  double window_factor = 3.0;
  bool richardson = true;
};

struct ErrorCurve {
  double h = 0.0;
  SyncErrorSeries series;
  double tail_max = 0.0;
  double D = std::numeric_limits<double>::quiet_NaN();
  double Dh = std::numeric_limits<double>::quiet_NaN();
  bool tail_below_Dh = false;
  bool existence_certified = false;
  std::string existence_reason;
};

struct ErrorCurveReport {
  double horizon = 0.0;
  double tail_start = 0.0;
  std::vector<ErrorCurve> curves;
  bool ordered = false;       // tails strictly decrease along the h list (sorted by h descending)
  double ratio_spread = 0.0;  // max(tail/h) / min(tail/h)
  bool ratio_ok = false;
  bool all_below_Dh = false;
  std::optional<double> richardson_max_diff;
  bool pass = false;
};

/// Max |xi_{h_ref} - xi_{h_ref/2}| at the coarse reference nodes up to horizon.
inline double richardson_reference_gap(const VectorField& field, const Vector& y0, double h_ref, double horizon) {
  EulerStepper coarse(field, y0, h_ref);
  EulerStepper fine(field, y0, 0.5 * h_ref);
  const auto n = static_cast<std::size_t>(std::ceil(horizon / h_ref));
  double gap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    coarse.advance();
    fine.advance();
    fine.advance();
    gap = std::max(gap, (coarse.x() - fine.x()).norm());
  }
  return gap;
}

/// For each h: certify existence from x0 (for D and the tube), synchronize
/// the Euler trajectory from x0 against a fine reference from y0 over
/// `periods` loops, and take the max error over the final tail fraction.
inline ErrorCurveReport error_curve_experiment(const VectorField& field, const Vector& x0, const Vector& y0,
                                               const std::vector<double>& h_list, const ErrorCurveConfig& config) {
  if (h_list.empty()) throw Error(ErrorKind::kInput, "empty step-size list");
  for (double h : h_list)
    if (!(h > 0.0)) throw Error(ErrorKind::kInput, "step sizes must be positive");
  ErrorCurveReport report;
  report.curves.resize(h_list.size());
  std::vector<ExistenceCertificate> certs(h_list.size());
  parallel_for(h_list.size(), [&](std::size_t k) {
    ExistenceConfig ec = config.existence;
    ec.h = h_list[k];
    ec.exclusion.reset();
    certs[k] = certify_existence(field, x0, ec);
  });
  if (!certs.front().first_return) throw Error(ErrorKind::kNoReturn, "no return from x0");
  report.horizon = config.periods * certs.front().first_return->R;
  report.tail_start = (1.0 - config.tail_fraction) * report.horizon;

  parallel_for(h_list.size(), [&](std::size_t k) {
    const double h = h_list[k];
    ErrorCurve& c = report.curves[k];
    const ExistenceCertificate& cert = certs[k];
    c.h = h;
    c.existence_certified = cert.certified;
    c.existence_reason = cert.reason;
    if (cert.constants && cert.constants->a > 0.0) {
      c.D = compute_D(*cert.constants, cert.gamma);
      c.Dh = c.D * h;
    }
    ReferenceSolution ref(field, y0, config.ref_factor * h);
    const auto n = static_cast<std::size_t>(std::ceil(report.horizon / h));
    c.series = synchronize(ref, field, x0, h, n, config.window_factor);
    c.series.bound.resize(c.series.size());
    for (std::size_t j = 0; j < c.series.size(); ++j) {
      double b = c.Dh;
      if (cert.tube && c.series.t[j] <= static_cast<double>(cert.tube->N1) * h)
        b = std::max(cert.tube->delta_at(c.series.t[j]), c.Dh);
      c.series.bound[j] = b;
      if (c.series.t[j] >= report.tail_start) c.tail_max = std::max(c.tail_max, c.series.error[j]);
    }
    c.tail_below_Dh = c.tail_max <= c.Dh;
  });

  std::vector<std::size_t> order(h_list.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return h_list[a] > h_list[b]; });
  report.ordered = true;
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto& big = report.curves[order[k - 1]];
    const auto& small = report.curves[order[k]];
    if (big.h > small.h && !(big.tail_max > small.tail_max)) report.ordered = false;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  report.all_below_Dh = true;
  for (const auto& c : report.curves) {
    lo = std::min(lo, c.tail_max / c.h);
    hi = std::max(hi, c.tail_max / c.h);
    report.all_below_Dh = report.all_below_Dh && c.tail_below_Dh;
  }
  report.ratio_spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  report.ratio_ok = report.ratio_spread <= 3.0;
  if (config.richardson)
    report.richardson_max_diff = richardson_reference_gap(field, y0, config.ref_factor * h_list[order.front()],
                                                          report.horizon);
  report.pass = report.ordered && report.ratio_ok && report.all_below_Dh;
  return report;
}

}  // namespace cyclecert
