#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/geometry.hpp"
#include "cyclecert/vector_field.hpp"

namespace cyclecert {

/// kAuto picks projection in the plane and eigenvector matching for n >= 3.
enum class MeasureMethod { kAuto, kProjection, kEigenvectorMatch };

inline constexpr double kDefaultMFloor = 1e-8;

inline Matrix symmetric_part(const Matrix& jac) {
  if (jac.rows() != jac.cols()) throw Error(ErrorKind::kInput, "symmetric part needs a square matrix");
  return 0.5 * (jac + jac.transpose());
}

struct TransverseSpectrum {
  Vector eigenvalues;  // ascending
  int tangent_index = 0;
  double mu = 0.0;
  double mu_perp = 0.0;
  double alignment = 0.0;  // |cos| between tangent eigenvector and f/|f|
};

/// Spectrum of the symmetric part of `jac` split along the flow direction
/// `flow`. The tangent eigenvector is the one best aligned with `flow`; ties
/// go to the larger eigenvalue.
inline TransverseSpectrum transverse_spectrum(const Matrix& jac, const Vector& flow,
                                              MeasureMethod method = MeasureMethod::kAuto,
                                              double m_floor = kDefaultMFloor) {
  const Eigen::Index n = jac.rows();
  if (n < 2) throw Error(ErrorKind::kInput, "transverse measure needs dimension >= 2");
  const double speed = flow.norm();
  if (!(speed > m_floor)) throw Error(ErrorKind::kEquilibrium, "|f(x)| below m_floor");
  if (method == MeasureMethod::kAuto)
    method = n == 2 ? MeasureMethod::kProjection : MeasureMethod::kEigenvectorMatch;

  const Matrix sym = symmetric_part(jac);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  TransverseSpectrum out;
  out.eigenvalues = eig.eigenvalues();
  out.mu = out.eigenvalues.maxCoeff();

  const Vector dir = flow / speed;
  double best = -1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double align = std::abs(eig.eigenvectors().col(k).dot(dir));
    // Eigenvalues ascend, so >= on ties keeps the larger eigenvalue.
    if (align >= best - 1e-12) {
      best = std::max(best, align);
      out.tangent_index = static_cast<int>(k);
    }
  }
  out.alignment = std::min(1.0, best);

  if (method == MeasureMethod::kProjection) {
    if (n == 2) {
      const double w0 = -dir[1], w1 = dir[0];
      out.mu_perp = w0 * (sym(0, 0) * w0 + sym(0, 1) * w1) + w1 * (sym(1, 0) * w0 + sym(1, 1) * w1);
    } else {
      const Matrix q = transverse_basis(flow);
      const Matrix reduced = q.transpose() * sym * q;
      Eigen::SelfAdjointEigenSolver<Matrix> reig(0.5 * (reduced + reduced.transpose()),
                                                 Eigen::EigenvaluesOnly);
      out.mu_perp = reig.eigenvalues().maxCoeff();
    }
  } else {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != out.tangent_index) m = std::max(m, out.eigenvalues[k]);
    out.mu_perp = m;
  }
  return out;
}

inline TransverseSpectrum transverse_measure(const VectorField& field, const Vector& x,
                                             MeasureMethod method = MeasureMethod::kAuto,
                                             double m_floor = kDefaultMFloor) {
  return transverse_spectrum(field.eval_jacobian(x), field.eval_f(x), method, m_floor);
}

// ---------------------------------------------------------------------------
// Slice bound

struct SliceSampling {
  int n_s = 5;
  int n_ball = 8;
  double pad_factor = 1.0;
  MeasureMethod method = MeasureMethod::kAuto;
  double m_floor = kDefaultMFloor;
};

/// Section slice B(center, radius) cut by the hyperplane orthogonal to
/// f(center).
struct SlicePoint {
  Vector center;
  double radius = 0.0;
};

struct LambdaBound {
  std::size_t segment_index = 0;
  double lambda = 0.0;
  double sampled_max = 0.0;
  double padding = 0.0;
  std::size_t samples_used = 0;
  double min_alignment = 1.0;
};

/// Offsets (as multiples of the slice radius) of the in-slice sample points.
/// Planar slices are segments sampled at n_ball + 1 evenly spaced points;
/// higher-dimensional slices use the center plus n_ball boundary directions.
inline std::vector<Vector> slice_offsets(const Matrix& basis, int n_ball) {
  std::vector<Vector> out;
  if (basis.cols() == 1) {
    for (double t : linspace(-1.0, 1.0, n_ball + 1)) out.push_back(t * basis.col(0));
    return out;
  }
  out.push_back(Vector::Zero(basis.rows()));
  for (auto& d : sphere_directions(basis, n_ball)) out.push_back(std::move(d));
  return out;
}

/// Upper estimate of sup mu_perp over a family of slices: the sampled max
/// plus pad_factor times the largest change between neighbouring samples.
inline LambdaBound lambda_over_slices(const VectorField& field, std::span<const SlicePoint> slices,
                                      const SliceSampling& sampling) {
  if (slices.empty()) throw Error(ErrorKind::kInput, "no slices to sample");
  LambdaBound out;
  out.sampled_max = -std::numeric_limits<double>::infinity();
  double variation = 0.0;
  std::vector<double> prev_row;
  Vector f(field.dim());
  for (const auto& slice : slices) {
    if (!(slice.radius >= 0.0)) throw Error(ErrorKind::kInput, "slice radius must be non-negative");
    field.eval_f(slice.center, f);
    if (!(f.norm() > sampling.m_floor))
      throw Error(ErrorKind::kEquilibrium, "slice center too close to an equilibrium");
    const Matrix basis = transverse_basis(f);
    const auto offsets = slice_offsets(basis, sampling.n_ball);
    std::vector<double> row;
    row.reserve(offsets.size());
    for (const auto& u : offsets) {
      const Vector z = slice.center + slice.radius * u;
      const auto spec = transverse_measure(field, z, sampling.method, sampling.m_floor);
      row.push_back(spec.mu_perp);
      out.min_alignment = std::min(out.min_alignment, spec.alignment);
      out.sampled_max = std::max(out.sampled_max, spec.mu_perp);
    }
    // Neighbours: consecutive points of a planar slice, center-to-boundary
    // otherwise, and the same offset on the previous slice.
    for (std::size_t m = 1; m < row.size(); ++m) {
      const std::size_t nb = basis.cols() == 1 ? m - 1 : 0;
      variation = std::max(variation, std::abs(row[m] - row[nb]));
    }
    if (!prev_row.empty()) {
      for (std::size_t m = 0; m < row.size(); ++m)
        variation = std::max(variation, std::abs(row[m] - prev_row[m]));
    }
    out.samples_used += row.size();
    prev_row = std::move(row);
  }
  out.padding = sampling.pad_factor * variation;
  out.lambda = out.sampled_max + out.padding;
  return out;
}

/// Slices along segments [first, first + count) of `traj`: n_s centers evenly
/// spread in time, radius radius_start + radius_rate * (elapsed time).
inline LambdaBound lambda_over_window(const VectorField& field, const EulerTrajectory& traj,
                                      std::size_t first, std::size_t count, double radius_start,
                                      double radius_rate, const SliceSampling& sampling) {
  const double h = traj.h();
  const double t0 = static_cast<double>(first) * h;
  const double span = static_cast<double>(count) * h;
  std::vector<SlicePoint> slices;
  for (double dt : linspace(0.0, span, std::max(sampling.n_s, 2))) {
    const double t = std::min(t0 + dt, traj.horizon());
    slices.push_back({traj.dense_point(t), radius_start + radius_rate * dt});
  }
  LambdaBound out = lambda_over_slices(field, slices, sampling);
  out.segment_index = first + 1;
  return out;
}

// ---------------------------------------------------------------------------
// Regularized rate

enum class SigmaBranch { kContracting, kRegularized };

inline const char* to_string(SigmaBranch b) {
  return b == SigmaBranch::kContracting ? "contracting" : "regularized";
}

struct SigmaRate {
  std::size_t segment_index = 0;
  double sigma = 0.0;
  SigmaBranch branch = SigmaBranch::kRegularized;
};

/// sigma = a*Lambda/2 when Lambda < -gamma, else 3b*max(|Lambda|, gamma)/2.
inline SigmaRate sigma_rate(double lambda, double a, double b, double gamma, std::size_t segment_index = 0) {
  if (!std::isfinite(lambda)) throw Error(ErrorKind::kNumeric, "non-finite Lambda");
  if (!(a > 0.0)) throw Error(ErrorKind::kInvalidReparametrization, "lower reparametrization bound a must be > 0");
  if (!(b >= a) || !std::isfinite(b)) throw Error(ErrorKind::kInput, "need a <= b < inf");
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw Error(ErrorKind::kInput, "gamma must be a positive finite number");
  SigmaRate out;
  out.segment_index = segment_index;
  if (lambda < -gamma) {
    out.branch = SigmaBranch::kContracting;
    out.sigma = 0.5 * a * lambda;
  } else {
    out.branch = SigmaBranch::kRegularized;
    out.sigma = 1.5 * b * std::max(std::abs(lambda), gamma);
  }
  if (!(std::abs(out.sigma) >= 0.5 * gamma * a))
    throw Error(ErrorKind::kNumeric, "rate violates |sigma| >= gamma*a/2");
  return out;
}

}  // namespace cyclecert
