#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cyclecert/errors.hpp"
#include "cyclecert/vector_field.hpp"

namespace cyclecert {

/// Orthonormal basis (as columns) of the hyperplane orthogonal to `v`.
/// In the plane this is the single column (-v2, v1)/|v|.
inline Matrix transverse_basis(const Vector& v) {
  const Eigen::Index n = v.size();
  const double norm = v.norm();
  if (!(norm > 0.0)) throw Error(ErrorKind::kEquilibrium, "cannot build a transverse basis of a zero vector");
  if (n == 2) {
    Matrix q(2, 1);
    q << -v[1] / norm, v[0] / norm;
    return q;
  }
  Eigen::HouseholderQR<Matrix> qr(v);
  Matrix full = qr.householderQ() * Matrix::Identity(n, n);
  return full.rightCols(n - 1);
}

/// Deterministic unit directions spanning a subspace given by orthonormal
/// columns: +-each column first, then normalized sums of column pairs.
inline std::vector<Vector> sphere_directions(const Matrix& basis, int count) {
  std::vector<Vector> out;
  const Eigen::Index m = basis.cols();
  if (m == 0 || count <= 0) return out;
  for (Eigen::Index k = 0; k < m && static_cast<int>(out.size()) < count; ++k) {
    out.push_back(basis.col(k));
    if (static_cast<int>(out.size()) < count) out.push_back(-basis.col(k));
  }
  for (Eigen::Index a = 0; a < m && static_cast<int>(out.size()) < count; ++a) {
    for (Eigen::Index b = a + 1; b < m && static_cast<int>(out.size()) < count; ++b) {
      for (double sa : {1.0, -1.0}) {
        for (double sb : {1.0, -1.0}) {
          if (static_cast<int>(out.size()) >= count) break;
          Vector d = sa * basis.col(a) + sb * basis.col(b);
          out.push_back(d.normalized());
        }
      }
    }
  }
  return out;
}

/// Evenly spaced values in [lo, hi]; a single value yields the midpoint.
inline std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out;
  if (count <= 0) return out;
  if (count == 1) return {0.5 * (lo + hi)};
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k)
    out.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1));
  return out;
}

}  // namespace cyclecert
