#include <gtest/gtest.h>

#include <cmath>

#include "cyclecert/config.hpp"
#include "cyclecert/existence.hpp"
#include "cyclecert/sync_error.hpp"

using namespace cyclecert;

namespace {

Vector vec(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

const Vector kVdpX0 = vec(1.8929, -0.5383);

}  // namespace

TEST(Synchronize, SelfSynchronizationIsExact) {
  const auto vdp = make_system("vanderpol");
  const double h = 1e-3;
  const auto traj = simulate(vdp, kVdpX0, h, 7000);
  ReferenceSolution ref(vdp, kVdpX0, h);
  const auto series = synchronize(ref, traj);
  ASSERT_EQ(series.size(), 7001u);
  for (std::size_t j = 0; j < series.size(); ++j) {
    EXPECT_NEAR(series.theta[j], series.t[j], 1e-12) << j;
    EXPECT_LE(series.error[j], 1e-12) << j;
  }
  // The streaming variant agrees bit for bit.
  ReferenceSolution ref2(vdp, kVdpX0, h);
  const auto streamed = synchronize(ref2, vdp, kVdpX0, h, 7000);
  EXPECT_EQ(streamed.theta, series.theta);
  EXPECT_EQ(streamed.error, series.error);
}

TEST(Synchronize, LinearFlowMatchesClosedForm) {
  // x' = -x: the flow from (1, eps) meets the section through x_j at
  // x_j (1, eps), so the error is eps |x_j| = eps (1 - h)^j ~ eps e^{-t}.
  const auto lin = make_system("linear-stable");
  const double h = 1e-3, eps = 0.01;
  const std::size_t n = 5000;
  ReferenceSolution ref(lin, vec(1.0, eps), h / 100);
  const auto series = synchronize(ref, lin, vec(1.0, 0.0), h, n);
  double prev_theta = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    const double expect = eps * std::pow(1.0 - h, static_cast<double>(j));
    EXPECT_NEAR(series.error[j], expect, 1e-12) << j;
    EXPECT_NEAR(series.error[j], eps * std::exp(-series.t[j]), eps * 5 * h) << j;
    EXPECT_LE(series.residual[j], 1e-10);
    EXPECT_GE(series.theta[j], prev_theta);
    prev_theta = series.theta[j];
  }
  EXPECT_LT(series.error.back(), series.error.front());
}

TEST(Synchronize, VanDerPolResidualAndMonotoneTheta) {
  const auto vdp = make_system("vanderpol");
  const double h = 5e-4;
  ReferenceSolution ref(vdp, vec(1.8037, -0.5057), h / 100);
  const auto series = synchronize(ref, vdp, kVdpX0, h, 13000);
  for (std::size_t j = 1; j < series.size(); ++j) {
    EXPECT_LE(series.residual[j], 1e-10) << j;
    EXPECT_GE(series.theta[j], series.theta[j - 1]) << j;
  }
  // theta tracks t with rate in the reparametrization bounds.
  const double rate = (series.theta.back() - series.theta[1000]) / (series.t.back() - series.t[1000]);
  EXPECT_GT(rate, 0.9);
  EXPECT_LT(rate, 1.1);
}

TEST(Synchronize, LostSynchronizationIsReported) {
  // The target rotates five times faster than the reference can follow
  // inside the 3h window.
  const auto slow = make_system("harmonic");
  const auto fast = make_system("harmonic", {{"omega", 5.0}});
  ReferenceSolution ref(slow, vec(1, 0), 1e-4);
  try {
    synchronize(ref, fast, vec(1, 0), 1e-2, 500);
    FAIL();
  } catch (const IndexedError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSynchronizationLost);
    EXPECT_GT(e.index(), 0u);
  }
}

TEST(Synchronize, ReleasedReferenceNodesCannotBeQueried) {
  const auto vdp = make_system("vanderpol");
  ReferenceSolution ref(vdp, kVdpX0, 1e-3);
  EXPECT_EQ(ref.node(10), ref.node(10));
  ref.release_before(5);
  EXPECT_THROW(ref.node(4), Error);
  EXPECT_NO_THROW(ref.node(5));
}

TEST(TubeMembership, SelfSeriesAndDisplacedStart) {
  ExistenceConfig cfg;
  cfg.h = 1e-3;
  cfg.run_eta = false;
  const auto vdp = make_system("vanderpol");
  const auto cert = certify_existence(vdp, kVdpX0, cfg);
  ASSERT_TRUE(cert.tube.has_value());
  const auto& k = *cert.constants;

  ReferenceSolution self(vdp, kVdpX0, cfg.h);
  const auto zero = synchronize(self, *cert.trajectory);
  EXPECT_TRUE(tube_membership_check(zero, *cert.tube, k.L, k.M_f).empty());
  EXPECT_TRUE(tube_membership_check(zero, *cert.tube, k.L, k.M_f, false).empty());

  // Start at distance 2 delta0 along the section.
  const Vector f0 = vdp.eval_f(kVdpX0);
  const Vector y0 = kVdpX0 + 2 * cfg.delta0 * vec(-f0[1], f0[0]).normalized();
  ReferenceSolution far(vdp, y0, cfg.h / 100);
  const auto displaced = synchronize(far, *cert.trajectory);
  const auto violations = tube_membership_check(displaced, *cert.tube, k.L, k.M_f, false);
  ASSERT_FALSE(violations.empty());
  EXPECT_EQ(violations.front(), 0u);
}

TEST(ErrorCurve, DuplicatedStepIsDeterministic) {
  const auto vdp = make_system("vanderpol");
  ErrorCurveConfig cfg;
  cfg.existence.run_eta = false;
  cfg.periods = 1.5;
  cfg.richardson = false;
  const auto report = error_curve_experiment(vdp, kVdpX0, vec(1.8037, -0.5057), {2e-3, 2e-3}, cfg);
  ASSERT_EQ(report.curves.size(), 2u);
  EXPECT_EQ(report.curves[0].series.error, report.curves[1].series.error);
  EXPECT_EQ(report.curves[0].series.theta, report.curves[1].series.theta);
  EXPECT_EQ(report.curves[0].tail_max, report.curves[1].tail_max);
  EXPECT_EQ(report.ratio_spread, 1.0);
  EXPECT_NEAR(report.tail_start, 0.8 * report.horizon, 1e-12);
  EXPECT_THROW(error_curve_experiment(vdp, kVdpX0, kVdpX0, {}, cfg), Error);
  EXPECT_THROW(error_curve_experiment(vdp, kVdpX0, kVdpX0, {-1e-3}, cfg), Error);
}

TEST(TubeMembership, CertifiedTubeHoldsReferenceSolutions) {
  // Forward invariance: flows started in the certified initial disk stay
  // within the tube bound along the first loop.
  const RunConfig rc = preset("vdp-fine");
  const auto field = system_of(rc);
  auto ec = existence_config(rc);
  ec.run_eta = false;
  const auto cert = certify_existence(field, *rc.x0, ec);
  ASSERT_TRUE(cert.step && cert.step->holds) << cert.reason;
  ASSERT_TRUE(cert.inclusion && cert.inclusion->holds) << cert.reason;
  const auto& k = *cert.constants;
  const auto& tube = *cert.tube;
  // Endpoints are shrunk by a relative 1e-12 so that rounding in their
  // construction cannot place them outside the closed disk.
  SectionDisk inner = tube.Y0;
  inner.radius *= 1.0 - 1e-12;
  const auto samples = section_disk_samples(inner, 5);
  for (const auto& y0 : samples) {
    ReferenceSolution ref(field, y0, ec.h / 100);
    const auto series = synchronize(ref, *cert.trajectory);
    const auto violations = tube_membership_check(series, tube, k.L, k.M_f);
    EXPECT_TRUE(violations.empty()) << "y0 = " << y0.transpose() << ", first violation at "
                                    << (violations.empty() ? 0 : violations.front());
  }
}
