#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "cyclecert/errors.hpp"
#include "cyclecert/vector_field.hpp"

namespace cyclecert {

/// Hyperplane {z : <z - anchor, normal> = 0}.
struct Section {
  Vector anchor;
  Vector normal;

  double offset(const Vector& z) const { return (z - anchor).dot(normal); }
  bool contains(const Vector& z, double tol) const {
    return std::abs(offset(z)) <= tol * normal.norm() * (1.0 + z.norm());
  }
};

/// The section through `x` orthogonal to f(x).
inline Section section_through(const VectorField& field, const Vector& x) {
  Vector normal = field.eval_f(x);
  if (!(normal.norm() > 0.0)) throw Error(ErrorKind::kEquilibrium, "section normal f(x) vanishes");
  return Section{x, std::move(normal)};
}

/// Explicit Euler solution with nodes x_{i+1} = x_i + h f(x_i) and dense
/// output x_i(s) = x_i + s f(x_i), s in [0, h].
class EulerTrajectory {
 public:
  EulerTrajectory(VectorField field, double h, std::vector<Vector> nodes, std::vector<Vector> f_nodes)
      : field_(std::move(field)), h_(h), nodes_(std::move(nodes)), f_nodes_(std::move(f_nodes)) {}

  const VectorField& field() const { return field_; }
  double h() const { return h_; }
  std::size_t steps() const { return nodes_.size() - 1; }
  double horizon() const { return static_cast<double>(steps()) * h_; }
  const Vector& x0() const { return nodes_.front(); }
  const Vector& node(std::size_t i) const { return nodes_.at(i); }
  const Vector& f_node(std::size_t i) const { return f_nodes_.at(i); }
  const std::vector<Vector>& nodes() const { return nodes_; }

  Vector segment_point(std::size_t i, double s) const { return nodes_[i] + s * f_nodes_[i]; }

  /// Segment index and in-segment offset of time t. Node times map to
  /// (i, 0) except the final node, which maps to (N-1, h).
  std::pair<std::size_t, double> locate(double t) const {
    if (!(t >= 0.0) || t > horizon() * (1.0 + 1e-15))
      throw Error(ErrorKind::kOutOfRange, "time outside [0, horizon]");
    const double q = t / h_;
    std::size_t i = static_cast<std::size_t>(std::floor(q));
    const double nearest = std::round(q);
    if (std::abs(q - nearest) <= 1e-12 * std::max(1.0, q)) i = static_cast<std::size_t>(nearest);
    if (i >= steps()) return {steps() - 1, h_};
    double s = t - static_cast<double>(i) * h_;
    if (std::abs(q - nearest) <= 1e-12 * std::max(1.0, q)) s = 0.0;
    return {i, std::max(0.0, s)};
  }

  Vector dense_point(double t) const {
    const auto [i, s] = locate(t);
    if (s == 0.0) return nodes_[i];
    if (i == steps() - 1 && s == h_) return nodes_.back();
    return segment_point(i, s);
  }

 private:
  VectorField field_;
  double h_;
  std::vector<Vector> nodes_;
  std::vector<Vector> f_nodes_;
};

inline EulerTrajectory simulate(const VectorField& field, const Vector& x0, double h, std::size_t n_steps) {
  if (!(h > 0.0)) throw Error(ErrorKind::kInput, "step size h must be positive");
  if (n_steps < 1) throw Error(ErrorKind::kInput, "need at least one step");
  std::vector<Vector> nodes;
  std::vector<Vector> f_nodes;
  nodes.reserve(n_steps + 1);
  f_nodes.reserve(n_steps + 1);
  nodes.push_back(x0);
  Vector f(field.dim());
  for (std::size_t i = 0; i <= n_steps; ++i) {
    try {
      field.eval_f(nodes[i], f);
    } catch (const Error&) {
      throw IndexedError(ErrorKind::kDiverged, "Euler trajectory left the finite domain", i);
    }
    f_nodes.push_back(f);
    if (i == n_steps) break;
    nodes.push_back(nodes[i] + h * f);
  }
  return EulerTrajectory(field, h, std::move(nodes), std::move(f_nodes));
}

// ---------------------------------------------------------------------------
// Section crossings

/// Masks the start of a run: crossings before t_min, or before the
/// trajectory first leaves B(anchor, r_excl), are ignored.
struct Exclusion {
  double t_min = 0.0;
  double r_excl = 0.0;
};

inline Exclusion default_exclusion(double h, double delta0) { return {10.0 * h, 0.5 * delta0}; }

struct Crossing {
  std::size_t step_index = 0;
  double s_star = 0.0;
  double time = 0.0;
  Vector point;
  double direction_dot = 0.0;
};

/// Incremental crossing test shared by stored and streamed trajectories.
/// A crossing is a transition g < 0 -> g >= 0 of g = <x - anchor, normal>
/// whose flow direction agrees with f(anchor).
class CrossingScanner {
 public:
  CrossingScanner(const VectorField& field, Section section, Exclusion exclusion, double h)
      : field_(field),
        section_(std::move(section)),
        exclusion_(exclusion),
        h_(h),
        f_anchor_(field.eval_f(section_.anchor)),
        f_point_(field.dim()) {
    if (!(section_.normal.norm() > 0.0)) throw Error(ErrorKind::kInput, "section normal must be nonzero");
  }

  std::optional<Crossing> feed(std::size_t i, const Vector& x_i, const Vector& f_i, const Vector& x_next) {
    if (!left_ && (x_i - section_.anchor).norm() > exclusion_.r_excl) left_ = true;
    const double g0 = section_.offset(x_i);
    const double g1 = section_.offset(x_next);
    if (!left_ || !(g0 < 0.0 && g1 >= 0.0)) return std::nullopt;
    const double s = (-g0 / (g1 - g0)) * h_;
    const double t = static_cast<double>(i) * h_ + s;
    if (t < exclusion_.t_min) return std::nullopt;
    Crossing c;
    c.step_index = i;
    c.s_star = s;
    c.time = t;
    c.point = x_i + s * f_i;
    field_.eval_f(c.point, f_point_);
    c.direction_dot = f_anchor_.dot(f_point_);
    if (!(c.direction_dot > 0.0)) return std::nullopt;
    return c;
  }

 private:
  const VectorField& field_;
  Section section_;
  Exclusion exclusion_;
  double h_;
  Vector f_anchor_;
  Vector f_point_;
  bool left_ = false;
};

inline std::vector<Crossing> detect_crossings(const EulerTrajectory& traj, const Section& section,
                                              const Exclusion& exclusion) {
  CrossingScanner scanner(traj.field(), section, exclusion, traj.h());
  std::vector<Crossing> out;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    if (auto c = scanner.feed(i, traj.node(i), traj.f_node(i), traj.node(i + 1))) out.push_back(std::move(*c));
  }
  return out;
}

struct ReturnTime {
  double R = 0.0;
  std::size_t N = 0;
  Vector point;
};

struct ReturnTimes {
  std::vector<ReturnTime> returns;
  bool partial = false;
};

inline ReturnTime to_return_time(const Crossing& c, double h) {
  ReturnTime r{c.time, c.step_index + 1, c.point};
  // R lies in ((N-1)h, Nh] since the in-segment offset lies in (0, h].
  if (!(c.s_star > 0.0 && c.s_star <= h))
    throw Error(ErrorKind::kNumeric, "return time outside its step interval");
  return r;
}

inline ReturnTimes return_times(const EulerTrajectory& traj, const Section& section, std::size_t p_max,
                                const Exclusion& exclusion) {
  ReturnTimes out;
  for (const auto& c : detect_crossings(traj, section, exclusion)) {
    if (out.returns.size() >= p_max) break;
    out.returns.push_back(to_return_time(c, traj.h()));
  }
  out.partial = out.returns.size() < p_max;
  return out;
}

/// Streams Euler steps without storing them; used for long or fine-step
/// runs where only the crossings (or the current state) are needed.
class EulerStepper {
 public:
  EulerStepper(const VectorField& field, Vector x0, double h)
      : field_(field), h_(h), x_(std::move(x0)), f_(field.dim()), next_(field.dim()) {
    if (!(h_ > 0.0)) throw Error(ErrorKind::kInput, "step size h must be positive");
    eval();
  }

  std::size_t index() const { return index_; }
  double time() const { return static_cast<double>(index_) * h_; }
  double h() const { return h_; }
  const Vector& x() const { return x_; }
  const Vector& f() const { return f_; }
  /// End node of the current segment.
  const Vector& next() const { return next_; }

  void advance() {
    x_.swap(next_);
    ++index_;
    eval();
  }

 private:
  void eval() {
    try {
      field_.eval_f(x_, f_);
    } catch (const Error&) {
      throw IndexedError(ErrorKind::kDiverged, "Euler trajectory left the finite domain", index_);
    }
    next_ = x_ + h_ * f_;
  }

  const VectorField& field_;
  double h_;
  Vector x_;
  Vector f_;
  Vector next_;
  std::size_t index_ = 0;
};

/// First `p_max` returns of the Euler trajectory from x0 to `section`,
/// streamed up to `horizon`.
inline std::vector<Crossing> stream_returns(const VectorField& field, const Vector& x0, double h,
                                            const Section& section, const Exclusion& exclusion,
                                            double horizon, std::size_t p_max = 1) {
  EulerStepper stepper(field, x0, h);
  CrossingScanner scanner(field, section, exclusion, h);
  std::vector<Crossing> out;
  const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / h));
  for (std::size_t i = 0; i < n_steps && out.size() < p_max; ++i) {
    if (auto c = scanner.feed(i, stepper.x(), stepper.f(), stepper.next())) out.push_back(std::move(*c));
    stepper.advance();
  }
  return out;
}

}  // namespace cyclecert
