#include <gtest/gtest.h>

#include <random>

#include "cyclecert/euler.hpp"
#include "cyclecert/transverse.hpp"
#include "cyclecert/vector_field.hpp"
#include "oracles.hpp"

using namespace cyclecert;

namespace {

Vector vec(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(SymmetricPart, Examples) {
  Matrix skew(2, 2);
  skew << 0, 1, -1, 0;
  EXPECT_TRUE(symmetric_part(skew).isZero(0.0));
  EXPECT_EQ(symmetric_part(-Matrix::Identity(3, 3)), -Matrix::Identity(3, 3));
  const auto field = make_system("vanderpol", {{"p", 0.3}});
  const Matrix s = symmetric_part(field.eval_jacobian(vec(1.8929, -0.5383)));
  const double p = 0.3, u1 = 1.8929, u2 = -0.5383;
  EXPECT_NEAR(s(0, 1), 0.5 * (1 - 2 * p * u1 * u2 - 1), 1e-15);
  EXPECT_NEAR(s(0, 1), 0.3057, 1e-4);
  EXPECT_EQ(s(0, 1), s(1, 0));
  EXPECT_NEAR(s(1, 1), -0.7749, 1e-4);
  EXPECT_THROW(symmetric_part(Matrix::Zero(2, 3)), Error);
}

TEST(TransverseMeasure, HarmonicAndLinear) {
  const auto harm = make_system("harmonic");
  const auto lin = make_system("linear-stable");
  for (const Vector& x : {vec(1, 0), vec(-0.3, 2.0)}) {
    const auto h = transverse_measure(harm, x);
    EXPECT_NEAR(h.mu, 0.0, 1e-15);
    EXPECT_NEAR(h.mu_perp, 0.0, 1e-15);
    const auto l = transverse_measure(lin, x);
    EXPECT_NEAR(l.mu, -1.0, 1e-15);
    EXPECT_NEAR(l.mu_perp, -1.0, 1e-15);
    EXPECT_NEAR(transverse_measure(lin, x, MeasureMethod::kEigenvectorMatch).mu_perp, -1.0, 1e-15);
  }
  EXPECT_THROW(transverse_measure(lin, vec(0, 0)), Error);
  try {
    transverse_measure(lin, vec(1e-12, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEquilibrium);
  }
}

TEST(TransverseMeasure, MuIsLargestEigenvalueOnRandomMatrices) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = trial % 2 == 0 ? 2 : 3;
    Matrix j(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) j(r, c) = u(rng);
    Vector f(n);
    for (int r = 0; r < n; ++r) f[r] = u(rng);
    const Matrix s = 0.5 * (j + j.transpose());
    double expect;
    if (n == 2) {
      expect = oracle::max_eig_sym2(s(0, 0), s(0, 1), s(1, 1));
    } else {
      std::array<double, 9> a{};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[static_cast<std::size_t>(3 * r + c)] = s(r, c);
      expect = oracle::max_eig_sym3(a);
    }
    for (auto method : {MeasureMethod::kProjection, MeasureMethod::kEigenvectorMatch}) {
      const auto spec = transverse_spectrum(j, f, method);
      EXPECT_NEAR(spec.mu, expect, 1e-9 * (1 + std::abs(expect))) << trial;
      EXPECT_LE(spec.mu_perp, spec.mu + 1e-12) << trial;
      EXPECT_GE(spec.alignment, 0.0);
      EXPECT_LE(spec.alignment, 1.0);
    }
    if (n == 2) {
      // Projection: the Rayleigh quotient on the unit normal of f.
      const Vector w = vec(-f[1], f[0]).normalized();
      EXPECT_NEAR(transverse_spectrum(j, f, MeasureMethod::kProjection).mu_perp, w.dot(s * w), 1e-12);
    }
  }
}

TEST(TransverseMeasure, MethodsAgreeOnPlantedEigenvector) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 3;
    Matrix a(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) a(r, c) = u(rng);
    const Eigen::HouseholderQR<Matrix> qr(a);
    const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    Vector lambda(n);
    for (int k = 0; k < n; ++k) lambda[k] = u(rng) + 3.0 * k;  // well separated
    const Matrix s = q * lambda.asDiagonal() * q.transpose();
    const Vector f = 1.7 * q.col(trial % n);
    const auto proj = transverse_spectrum(s, f, MeasureMethod::kProjection);
    const auto match = transverse_spectrum(s, f, MeasureMethod::kEigenvectorMatch);
    EXPECT_NEAR(proj.mu_perp, match.mu_perp, 1e-10) << trial;
    EXPECT_NEAR(match.alignment, 1.0, 1e-10);
    double expect = -1e300;
    for (int k = 0; k < n; ++k)
      if (k != trial % n) expect = std::max(expect, lambda[k]);
    EXPECT_NEAR(match.mu_perp, expect, 1e-10);
  }
}

TEST(TransverseMeasure, TieGoesToLargerEigenvalue) {
  Matrix s(2, 2);
  s << 1.0, 0.0, 0.0, -2.0;
  const auto spec = transverse_spectrum(s, vec(1, 1), MeasureMethod::kEigenvectorMatch);
  EXPECT_NEAR(spec.alignment, std::sqrt(0.5), 1e-12);
  EXPECT_EQ(spec.eigenvalues[spec.tangent_index], 1.0);
  EXPECT_EQ(spec.mu_perp, -2.0);
}

TEST(LambdaBound, ZeroRadiusAndConstantField) {
  const auto lin = make_system("linear-stable");
  const std::vector<SlicePoint> slices{{vec(1, 0), 0.3}, {vec(0.5, 0.5), 0.2}, {vec(-1, 2), 0.0}};
  const auto lb = lambda_over_slices(lin, slices, {});
  EXPECT_NEAR(lb.lambda, -1.0, 1e-15);
  EXPECT_NEAR(lb.padding, 0.0, 1e-14);

  const auto vdp = make_system("vanderpol");
  const auto traj = simulate(vdp, vec(1.8929, -0.5383), 1e-3, 50);
  const auto zero = lambda_over_window(vdp, traj, 10, 5, 0.0, 0.0, {});
  double sampled = -1e300;
  for (double t : linspace(10e-3, 15e-3, 5))
    sampled = std::max(sampled, transverse_measure(vdp, traj.dense_point(t)).mu_perp);
  EXPECT_NEAR(zero.sampled_max, sampled, 1e-12);
  EXPECT_GE(zero.lambda, zero.sampled_max);
  EXPECT_NEAR(zero.lambda, zero.sampled_max + zero.padding, 1e-15);
}

TEST(LambdaBound, DominatesEverySample) {
  const auto vdp = make_system("vanderpol");
  const auto traj = simulate(vdp, vec(1.8929, -0.5383), 1e-3, 100);
  SliceSampling sampling;
  const auto lb = lambda_over_window(vdp, traj, 20, 10, 0.05, 2.0, sampling);
  for (double dt : linspace(0.0, 10e-3, sampling.n_s)) {
    const Vector c = traj.dense_point(20e-3 + dt);
    const Matrix basis = transverse_basis(vdp.eval_f(c));
    for (const auto& off : slice_offsets(basis, sampling.n_ball))
      EXPECT_LE(transverse_measure(vdp, c + (0.05 + 2.0 * dt) * off).mu_perp, lb.lambda);
  }
}

TEST(LambdaBound, LargerRadiusNeverLowersSampledMaximum) {
  // Slice offsets are nested when n_ball doubles, and the planar offsets
  // scale with the radius, so compare radii r and 2r on a nested grid.
  for (const std::string id : {"vanderpol", "fitzhugh-nagumo", "unstable-focus"}) {
    const auto field = make_system(id);
    const Vector x0 = id == "fitzhugh-nagumo" ? vec(-1.0, 1.0) : vec(1.8929, -0.5383);
    const auto traj = simulate(field, x0, 1e-3, 3000);
    for (std::size_t first = 0; first < 3000; first += 250) {
      SliceSampling small;
      small.n_ball = 8;
      SliceSampling big = small;
      big.n_ball = 16;
      for (double r : {0.01, 0.05, 0.1}) {
        const auto a = lambda_over_window(field, traj, first, 10, r, 0.0, small);
        const auto b = lambda_over_window(field, traj, first, 10, 2 * r, 0.0, big);
        EXPECT_GE(b.sampled_max, a.sampled_max - 1e-15) << id << " " << first << " " << r;
      }
    }
  }
}

TEST(SigmaRate, Examples) {
  auto s = sigma_rate(-2.0, 0.9, 1.1, 0.015);
  EXPECT_EQ(s.branch, SigmaBranch::kContracting);
  EXPECT_DOUBLE_EQ(s.sigma, -0.9);
  s = sigma_rate(1.0, 0.9, 1.1, 0.015);
  EXPECT_EQ(s.branch, SigmaBranch::kRegularized);
  EXPECT_DOUBLE_EQ(s.sigma, 1.65);
  s = sigma_rate(-0.01, 0.9, 1.1, 0.015);
  EXPECT_EQ(s.branch, SigmaBranch::kRegularized);
  EXPECT_DOUBLE_EQ(s.sigma, 0.02475);
}

TEST(SigmaRate, RandomizedBranchRules) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> lam(-5.0, 5.0), a_dist(0.05, 2.0), gap(0.0, 1.0), g(1e-4, 0.5);
  for (int k = 0; k < 1000; ++k) {
    const double lambda = k % 10 == 0 ? -g(rng) : lam(rng);  // include the floor region
    const double a = a_dist(rng), b = a + gap(rng), gamma = g(rng);
    const auto s = sigma_rate(lambda, a, b, gamma);
    EXPECT_EQ(s.sigma < 0.0, s.branch == SigmaBranch::kContracting);
    EXPECT_GE(std::abs(s.sigma), 0.5 * gamma * a);
    if (lambda < -gamma) {
      EXPECT_DOUBLE_EQ(s.sigma, 0.5 * a * lambda);
    } else {
      EXPECT_DOUBLE_EQ(s.sigma, 1.5 * b * std::max(std::abs(lambda), gamma));
    }
  }
}

TEST(SigmaRate, Guards) {
  try {
    sigma_rate(1.0, 0.0, 1.0, 0.015);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidReparametrization);
  }
  EXPECT_THROW(sigma_rate(1.0, 1.0, 0.5, 0.015), Error);
  // Without the floor (gamma -> 0) no rate is produced.
  EXPECT_THROW(sigma_rate(0.0, 1.0, 1.0, 0.0), Error);
  EXPECT_THROW(sigma_rate(-1e-9, 1.0, 1.0, -0.1), Error);
}
