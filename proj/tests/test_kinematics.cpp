#include <gtest/gtest.h>

#include "cotstop/kinematics.hpp"
#include "cotstop/rng.hpp"
#include "oracles.hpp"

using namespace cotstop;

namespace {

ProbeRecord span_probe(std::vector<double> span) {
  ProbeRecord p;
  p.answer_span_logprobs = std::move(span);
  return p;
}

ProbeRecord fallback_probe(double avg, int len) {
  ProbeRecord p;
  p.avg_logprob = avg;
  p.answer_len = len;
  return p;
}

EsTrajectory traj_of(const std::vector<double>& ls, int window = 5) {
  EsTrajectory tr(window, 3);
  int t = 0;
  for (double v : ls) tr.push(t += 10, v);
  return tr;
}

}  // namespace

TEST(Kinematics, EsConfidence) {
  EXPECT_EQ(es_confidence(span_probe({-1.0, -0.5})), -1.5);
  EXPECT_EQ(es_confidence(span_probe({0.0})), 0.0);
  EXPECT_DOUBLE_EQ(es_confidence(fallback_probe(-0.4, 3)), -1.2);
  EXPECT_THROW(es_confidence(ProbeRecord{}), ValidationError);
}

TEST(Kinematics, SlopeCurvatureHandFixtures) {
  auto k1 = slope_curvature(traj_of({-2.0}));
  EXPECT_EQ(k1.slope, 0.0);
  EXPECT_EQ(k1.second_diff, 0.0);
  auto k2 = slope_curvature(traj_of({-2.0, -1.5}));
  EXPECT_EQ(k2.slope, 0.5);
  EXPECT_EQ(k2.second_diff, 0.0);
  auto k3 = slope_curvature(traj_of({-2.0, -1.5, -1.4}));
  EXPECT_EQ(k3.slope, -1.4 - -1.5);
  EXPECT_EQ(k3.second_diff, (-1.4 - -1.5) - (-1.5 - -2.0));
  EXPECT_NEAR(k3.slope, 0.1, 1e-12);
  EXPECT_NEAR(k3.second_diff, -0.4, 1e-12);
}

TEST(Kinematics, QuadraticHasConstantSecondDifference) {
  const double a = -0.3, b = 1.25, c = -4.0;
  EsTrajectory tr(5, 3);
  for (int k = 0; k < 20; ++k) {
    tr.push(k + 1, a * k * k + b * k + c);
    if (k >= 2) EXPECT_NEAR(slope_curvature(tr).second_diff, 2 * a, 1e-9);
  }
}

TEST(Kinematics, QuadFitFixtures) {
  auto sq = quad_fit(traj_of({0, 1, 4, 9, 16}));
  EXPECT_NEAR(sq.a, 1, 1e-9);
  EXPECT_NEAR(sq.b, 0, 1e-9);
  EXPECT_NEAR(sq.c, 0, 1e-9);
  auto constant = quad_fit(traj_of({-3, -3, -3, -3, -3}));
  EXPECT_NEAR(constant.a, 0, 1e-12);
  EXPECT_NEAR(constant.b, 0, 1e-12);
  EXPECT_NEAR(constant.c, -3, 1e-12);
  auto line = quad_fit(traj_of({1, 3, 5, 7, 9}));
  EXPECT_NEAR(line.a, 0, 1e-9);
  EXPECT_NEAR(line.b, 2, 1e-9);
  EXPECT_NEAR(line.c, 1, 1e-9);
}

TEST(Kinematics, QuadFitShortWindow) {
  auto q = quad_fit(traj_of({-1.0, -0.5}));
  EXPECT_EQ(q, (QuadFit{0.0, 0.0, -0.5}));
  EXPECT_EQ(quad_fit(EsTrajectory{}), QuadFit{});
}

TEST(Kinematics, QuadFitUsesLastWindowAnchoredAtStart) {
  // Only the last 5 of 8 points enter; τ restarts at 0 at the window start.
  std::vector<double> ls = {100, -50, 7};
  for (int k = 0; k < 5; ++k) ls.push_back(0.5 * k * k - k + 2);
  auto q = quad_fit(traj_of(ls));
  EXPECT_NEAR(q.a, 0.5, 1e-9);
  EXPECT_NEAR(q.b, -1, 1e-9);
  EXPECT_NEAR(q.c, 2, 1e-9);
}

TEST(Kinematics, QuadFitMatchesCramerOracle) {
  rng::Stream g(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const int w = static_cast<int>(g.uniform_int(3, 9));
    std::vector<double> ls(static_cast<std::size_t>(w));
    for (auto& v : ls) v = g.uniform(-10.0, 0.0);
    auto q = quad_fit(traj_of(ls, w));
    auto o = oracle::cramer_quad(ls);
    ASSERT_NEAR(q.a, o.a, 1e-8);
    ASSERT_NEAR(q.b, o.b, 1e-8);
    ASSERT_NEAR(q.c, o.c, 1e-8);
  }
}

TEST(Kinematics, QuadFitExactRecoveryAndShiftInvariance) {
  rng::Stream g(23);
  for (int trial = 0; trial < 2000; ++trial) {
    const double a = g.uniform(-5, 5), b = g.uniform(-5, 5), c = g.uniform(-50, 50), shift = g.uniform(-20, 20);
    std::vector<double> ls, shifted;
    for (int k = 0; k < 5; ++k) {
      ls.push_back(a * k * k + b * k + c);
      shifted.push_back(ls.back() + shift);
    }
    auto q = quad_fit(traj_of(ls));
    ASSERT_NEAR(q.a, a, 1e-6);
    ASSERT_NEAR(q.b, b, 1e-6);
    ASSERT_NEAR(q.c, c, 1e-6);
    for (int k = 0; k < 5; ++k) ASSERT_NEAR(q.a * k * k + q.b * k + q.c, ls[static_cast<std::size_t>(k)], 1e-9);
    auto qs = quad_fit(traj_of(shifted));
    ASSERT_NEAR(qs.a, q.a, 1e-9);
    ASSERT_NEAR(qs.b, q.b, 1e-9);
    ASSERT_NEAR(qs.c, q.c + shift, 1e-8);
  }
}

TEST(Kinematics, TrajectoryValidation) {
  EXPECT_THROW(EsTrajectory(2, 3), ValidationError);
  EXPECT_THROW(EsTrajectory(5, 1), ValidationError);
  EsTrajectory tr;
  tr.push(5, -1);
  EXPECT_THROW(tr.push(5, -1), ValidationError);
  EXPECT_THROW(tr.push(4, -1), ValidationError);
}

TEST(Kinematics, TokenStats) {
  auto a = token_stats(span_probe({-1, -3}));
  EXPECT_EQ(a, (TokenStats{-2.0, 1.0, 2.0, 2}));
  auto b = token_stats(span_probe({-0.7}));
  EXPECT_EQ(b.mean, -0.7);
  EXPECT_EQ(b.variance, 0.0);
  EXPECT_EQ(b.ans_len, 1);
  auto c = token_stats(fallback_probe(-0.5, 4));
  EXPECT_EQ(c, (TokenStats{-0.5, 0.0, 0.5, 4}));
}

TEST(Kinematics, NegPplIsExactlyMinusMean) {
  rng::Stream g(29);
  for (int trial = 0; trial < 10000; ++trial) {
    ProbeRecord p;
    if (g.bernoulli(0.5)) {
      std::vector<double> span(static_cast<std::size_t>(g.uniform_int(1, 12)));
      for (auto& x : span) x = -g.uniform(0.0, 8.0);
      p.answer_span_logprobs = span;
    } else {
      p.avg_logprob = -g.uniform(0.0, 5.0);
      p.answer_len = static_cast<int>(g.uniform_int(1, 30));
    }
    const auto st = token_stats(p);
    ASSERT_EQ(st.neg_ppl, -st.mean);
    ASSERT_GE(st.variance, 0.0);
    ASSERT_GE(st.ans_len, 1);
  }
}
