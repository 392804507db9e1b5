#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cyclecert/constants.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/vector_field.hpp"
#include "oracles.hpp"

using namespace cyclecert;

namespace {

Vector vec(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

oracle::Rhs oracle_rhs(const VectorField& field) {
  return [&field](const oracle::State& x) {
    const Vector f = field.eval_f(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())));
    return oracle::State(f.data(), f.data() + f.size());
  };
}

oracle::State to_state(const Vector& v) { return oracle::State(v.data(), v.data() + v.size()); }

}  // namespace

TEST(Lipschitz, LinearAndRotation) {
  const RegionBox box{vec(-2, -2), vec(2, 2)};
  EXPECT_NEAR(estimate_lipschitz(make_system("linear-stable"), box, 4), 1.0, 1e-14);
  EXPECT_NEAR(estimate_lipschitz(make_system("harmonic"), box, 4), 1.0, 1e-14);
  EXPECT_NEAR(estimate_lipschitz(make_system("linear-stable", {{"rate", 2.5}}), box, 4, 1.5), 3.75, 1e-13);
  EXPECT_EQ(estimate_lipschitz(make_system("constant-drift"), box, 4), 0.0);
}

TEST(Lipschitz, VanDerPolAgainstOracleEigenvalues) {
  const auto field = make_system("vanderpol", {{"p", 0.3}});
  const RegionBox box{vec(-2.5, -3), vec(2.5, 3)};
  double expect = 0.0;
  for (const auto& x : box.grid(8)) {
    const double u1 = x[0], u2 = x[1], p = 0.3;
    // ||J||_2^2 = largest eigenvalue of J^T J with J = [[0, 1], [j21, j22]].
    const double j21 = -2 * p * u1 * u2 - 1, j22 = p - p * u1 * u1;
    const double a = j21 * j21, b = j21 * j22, d = 1 + j22 * j22;
    expect = std::max(expect, std::sqrt(oracle::max_eig_sym2(a, b, d)));
  }
  EXPECT_NEAR(estimate_lipschitz(field, box, 8), expect, 1e-12 * expect);
}

TEST(SpeedBounds, BoxAndCircle) {
  const auto lin = make_system("linear-stable");
  const auto sb = estimate_speed_bounds(lin, RegionBox{vec(1, 1), vec(2, 2)}, 6);
  EXPECT_NEAR(sb.m, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(sb.M, 2 * std::sqrt(2.0), 1e-15);
  EXPECT_FALSE(sb.equilibrium_flag);
  EXPECT_EQ(sb.samples, 49u);

  std::vector<Vector> circle;
  for (double t : linspace(0.0, 2 * std::numbers::pi, 64)) circle.push_back(vec(std::cos(t), std::sin(t)));
  const auto hb = estimate_speed_bounds(make_system("harmonic"), circle);
  EXPECT_NEAR(hb.m, 1.0, 1e-15);
  EXPECT_NEAR(hb.M, 1.0, 1e-15);

  const auto eq = estimate_speed_bounds(lin, RegionBox{vec(-1, -1), vec(1, 1)}, 2);
  EXPECT_TRUE(eq.equilibrium_flag);
  EXPECT_EQ(eq.m, 0.0);
}

TEST(RegionBox, RefinedGridIsSupersetSoEstimatesAreMonotone) {
  const auto field = make_system("fitzhugh-nagumo");
  const RegionBox box{vec(-2, -1), vec(2, 1.5)};
  double prev_L = 0.0, prev_M = 0.0, prev_m = std::numeric_limits<double>::infinity();
  for (int k : {1, 2, 4, 8, 16}) {
    const double L = estimate_lipschitz(field, box, k);
    const auto sb = estimate_speed_bounds(field, box, k);
    EXPECT_GE(L, prev_L);
    EXPECT_GE(sb.M, prev_M);
    EXPECT_LE(sb.m, prev_m);
    prev_L = L;
    prev_M = sb.M;
    prev_m = sb.m;
  }
  EXPECT_TRUE(box.contains(vec(0, 0)));
  EXPECT_FALSE(box.contains(vec(0, 2)));
  const std::vector<Vector> pts{vec(0, 1), vec(-1, 3)};
  const auto b = RegionBox::bounding(pts, 0.5);
  EXPECT_EQ(b.lo, vec(-1.5, 0.5));
  EXPECT_EQ(b.hi, vec(0.5, 3.5));
}

TEST(TubeSamplePoints, RadiusAndStride) {
  const auto field = make_system("harmonic");
  const auto traj = simulate(field, vec(1, 0), 1e-2, 100);
  const auto pts = tube_sample_points(traj, 100, [](std::size_t) { return 0.1; }, 10);
  // 11 centers, each with two directions at two magnitudes.
  EXPECT_EQ(pts.size(), 11u * 5u);
  for (std::size_t k = 0; k < pts.size(); k += 5) {
    const Vector& c = pts[k];
    for (std::size_t m = 1; m < 5; ++m) {
      const double d = (pts[k + m] - c).norm();
      EXPECT_TRUE(std::abs(d - 0.1) < 1e-14 || std::abs(d - 0.05) < 1e-14);
    }
  }
  EXPECT_EQ(tube_sample_points(traj, 100, [](std::size_t) { return 0.0; }, 10).size(), 11u);
}

TEST(ThetaDot, TrivialCases) {
  const auto vdp = make_system("vanderpol");
  const Vector x = vec(1.8929, -0.5383);
  const Vector f = vdp.eval_f(x);
  // At s = 0 the synchronized point is the node itself.
  EXPECT_NEAR(theta_dot(vdp, x, f, 0.0, x), 1.0, 1e-15);
  // Constant drift: every point moves in lockstep with the section.
  const auto drift = make_system("constant-drift");
  const Vector fd = drift.eval_f(vec(0, 0));
  const Vector w = vec(-fd[1], fd[0]).normalized();
  EXPECT_NEAR(theta_dot(drift, vec(0, 0), fd, 0.3, 0.3 * fd + 0.7 * w), 1.0, 1e-14);
  // Rotation: radial offsets rotate rigidly.
  const auto harm = make_system("harmonic");
  EXPECT_NEAR(theta_dot(harm, vec(1, 0), vec(0, -1), 0.0, vec(1.4, 0)), 1.0, 1e-14);
  // Off-section points are rejected.
  EXPECT_THROW(theta_dot(harm, vec(1, 0), vec(0, -1), 0.0, vec(1, 0.5)), Error);
}

TEST(ThetaDot, MatchesFiniteDifferenceOfContinuedFlow) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-2.0, 2.0), sd(0.0, 0.01), off(-0.1, 0.1);
  int checked = 0;
  for (const std::string id : {"vanderpol", "fitzhugh-nagumo"}) {
    const auto field = make_system(id);
    const auto rhs = oracle_rhs(field);
    for (int trial = 0; trial < 50; ++trial) {
      const Vector x = vec(pos(rng), pos(rng));
      const Vector f = field.eval_f(x);
      if (f.norm() < 0.2) continue;
      const double s = sd(rng);
      const Vector c = x + s * f;
      const Vector fc = field.eval_f(c);
      const Vector xi = c + off(rng) * vec(-fc[1], fc[0]).normalized();
      const Vector fxi = field.eval_f(xi);
      if (std::abs(fxi.dot(fc)) < 0.2 * fxi.norm() * fc.norm()) continue;  // nearly tangent
      const double eps = 1e-4;
      const double tp = oracle::continued_theta(rhs, to_state(x), to_state(f), to_state(xi), s + eps);
      const double tm = oracle::continued_theta(rhs, to_state(x), to_state(f), to_state(xi), s - eps);
      const double fd = (tp - tm) / (2 * eps);
      const double td = theta_dot(field, x, f, s, xi);
      EXPECT_NEAR(td, fd, 1e-4 * (1 + std::abs(td))) << id << " " << trial;
      ++checked;
    }
  }
  EXPECT_GE(checked, 50);
}

TEST(EstimateAb, BracketsSamplesAndIsNearOneForLinearFlow) {
  const auto lin = make_system("linear-stable");
  const double h = 1e-3;
  const auto traj = simulate(lin, vec(1, 0.5), h, 200);
  const auto ab = estimate_ab(lin, traj, 0, 200, [](double) { return 0.05; }, {});
  EXPECT_LE(ab.a, ab.theta_min);
  EXPECT_LE(ab.theta_min, ab.theta_max);
  EXPECT_LE(ab.theta_max, ab.b);
  // theta' = 1/(1 - s) for x' = -x, with s in [0, h].
  EXPECT_GE(ab.theta_min, 1.0 - 1e-12);
  EXPECT_LE(ab.theta_max, 1.0 / (1.0 - h) + 1e-12);
  EXPECT_GE(ab.a, 1.0 - 2 * h);
  EXPECT_LE(ab.b, 1.0 + 3 * h);

  const auto vdp = make_system("vanderpol");
  const auto vt = simulate(vdp, vec(1.8929, -0.5383), h, 500);
  const auto vab = estimate_ab(vdp, vt, 100, 50, [](double dt) { return 0.05 + dt; }, {});
  EXPECT_LE(vab.a, vab.theta_min);
  EXPECT_GE(vab.b, vab.theta_max);
  EXPECT_GT(vab.a, 0.0);
  EXPECT_GT(vab.evaluations, 0u);
}

TEST(EstimateAb, NonPositiveLowerBoundIsReported) {
  // A huge step makes the section move faster than the flow along it.
  const auto vdp = make_system("vanderpol");
  const auto traj = simulate(vdp, vec(1.8929, -0.5383), 0.9, 3);
  try {
    estimate_ab(vdp, traj, 0, 3, [](double) { return 1.5; }, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::kInvalidReparametrization || e.kind() == ErrorKind::kTransversalityLoss ||
                e.kind() == ErrorKind::kEquilibrium);
  }
}

TEST(SectionDisk, SamplesLieOnTheDisk) {
  const SectionDisk planar{vec(1, 2), 0.1, vec(0, 1)};
  const auto p = section_disk_samples(planar, 10);
  EXPECT_EQ(p.size(), 11u);
  EXPECT_EQ(p[5], planar.center);
  for (const auto& x : p) {
    EXPECT_LE((x - planar.center).norm(), 0.1 + 1e-15);
    EXPECT_NEAR((x - planar.center).dot(planar.normal), 0.0, 1e-15);
  }
  Vector c(3), n(3);
  c << 0, 0, 1;
  n << 1, 1, 1;
  const SectionDisk disk3{c, 0.2, n};
  const auto q = section_disk_samples(disk3, 9, 4);
  ASSERT_EQ(q.size(), 9u);
  EXPECT_EQ(q, section_disk_samples(disk3, 9, 4));
  for (const auto& x : q) {
    EXPECT_LE((x - c).norm(), 0.2 + 1e-14);
    EXPECT_NEAR((x - c).dot(n), 0.0, 1e-14);
  }
  EXPECT_EQ(section_disk_samples({c, 0.0, n}, 9).size(), 1u);
}

TEST(EstimateEta, HarmonicPeriod) {
  const auto harm = make_system("harmonic");
  const double h = 1e-3;
  EtaConfig cfg;
  cfg.horizon = 8.0;
  const auto est = estimate_eta(harm, {vec(1, 0), 0.1, vec(0, -1)}, h, cfg, default_exclusion(h, 0.1));
  EXPECT_TRUE(est.established);
  EXPECT_NEAR(est.eta, std::numbers::pi, 0.01);
  EXPECT_NEAR(est.T_lo, 2 * std::numbers::pi, 0.01);
  EXPECT_NEAR(est.T_hi, 2 * std::numbers::pi, 0.01);
  EXPECT_LE(est.T_lo, est.T_hi);
  EXPECT_NEAR(est.R_prime, 2 * std::numbers::pi, 0.02);
  EXPECT_EQ(est.fine_returns.size(), 11u);

  const auto single = estimate_eta(harm, {vec(1, 0), 0.0, vec(0, -1)}, h, cfg, default_exclusion(h, 0.1));
  EXPECT_EQ(single.fine_returns.size(), 1u);
  EXPECT_EQ(single.T_lo, single.T_hi);
}

TEST(EstimateEta, NoReturnIsAnError) {
  const auto lin = make_system("linear-stable");
  EtaConfig cfg;
  cfg.horizon = 5.0;
  try {
    estimate_eta(lin, {vec(1, 0), 0.1, vec(-1, 0)}, 1e-2, cfg, default_exclusion(1e-2, 0.1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoReturn);
  }
}
