#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "koopstab/sim.hpp"

namespace koopstab::sim {
namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

TEST(VanDerPol, VectorField) {
  const SystemDef s = vanderpol(1.0);
  EXPECT_EQ(s.n, 2);
  EXPECT_EQ(s.f(vec2(1, 1)), vec2(1, -1));
  EXPECT_EQ(s.g(vec2(3, 4)), vec2(0, 1));
  EXPECT_EQ(s.f(Vec::Zero(2)), Vec::Zero(2));
  EXPECT_THROW(vanderpol(std::numeric_limits<double>::quiet_NaN()), Error);
}

TEST(Euler, Steps) {
  const SystemDef s = vanderpol(1.0);
  const Vec x = euler_step(s, vec2(1, 1), 0.0, 0.01);
  EXPECT_NEAR(x(0), 1.01, 1e-15);
  EXPECT_NEAR(x(1), 0.99, 1e-15);
  // input enters the second coordinate only
  const Vec xu = euler_step(s, vec2(1, 1), 2.0, 0.01);
  EXPECT_NEAR(xu(1), 1.01, 1e-15);

  const SystemDef decay = linear(-Mat::Identity(1, 1), Vec::Zero(1));
  EXPECT_NEAR(euler_step(decay, Vec::Ones(1), 0.0, 0.1)(0), 0.9, 1e-15);
  EXPECT_THROW(euler_step(s, Vec::Ones(3), 0.0, 0.01), Error);
}

TEST(Excitation, RangeMeanAndReproducibility) {
  const Vec u = generate_excitation(42, -1.0, 1.0, 100000);
  ASSERT_EQ(u.size(), 100000);
  EXPECT_GE(u.minCoeff(), -1.0);
  EXPECT_LE(u.maxCoeff(), 1.0);
  EXPECT_LE(std::abs(u.mean()), 0.01);
  EXPECT_EQ(u, generate_excitation(42, -1.0, 1.0, 100000));
  EXPECT_NE(u.head(10), generate_excitation(43, -1.0, 1.0, 10));
  EXPECT_EQ(generate_excitation(1, 0.0, 1.0, 0).size(), 0);
  EXPECT_THROW(generate_excitation(1, 1.0, 0.0, 5), Error);
  EXPECT_THROW(generate_excitation(1, 0.0, 1.0, -1), Error);
}

TEST(OpenLoop, ZeroStaysZero) {
  const Trajectory t = simulate_open(vanderpol(1.0), Vec::Zero(2), Vec::Zero(50), 0.01);
  EXPECT_EQ(t.states.norm(), 0.0);
  EXPECT_FALSE(t.diverged);
}

TEST(OpenLoop, LengthContract) {
  const Vec u = generate_excitation(3, -1.0, 1.0, 200);
  const Trajectory t = simulate_open(vanderpol(1.0), vec2(0.1, 0.2), u, 0.01, 15);
  EXPECT_EQ(t.warmup, 15);
  EXPECT_EQ(t.steps(), 200);
  EXPECT_EQ(t.states.cols(), 216);
  EXPECT_EQ(t.inputs.size(), 215);
  EXPECT_EQ(t.inputs.head(15).norm(), 0.0);
  EXPECT_EQ(t.inputs.tail(200), u);
  EXPECT_EQ(t.state(-15), vec2(0.1, 0.2));
  EXPECT_EQ(t.kind, TrajectoryKind::OpenLoop);
}

// The unforced oscillator settles on its limit cycle: bounded away from the
// origin and from infinity.
TEST(OpenLoop, LimitCycleEnvelope) {
  const Trajectory t = simulate_open(vanderpol(1.0), vec2(0.5, 0.0), Vec::Zero(2000), 0.01);
  ASSERT_FALSE(t.diverged);
  for (int k = 500; k <= t.steps(); ++k) {
    const double r = t.state(k).norm();
    EXPECT_GE(r, 0.1);
    EXPECT_LE(r, 5.0);
  }
}

TEST(OpenLoop, DivergenceTruncates) {
  const SystemDef grow = linear(10.0 * Mat::Identity(1, 1), Vec::Ones(1));
  const Trajectory t = simulate_open(grow, Vec::Ones(1), Vec::Zero(1000), 1.0);
  EXPECT_TRUE(t.diverged);
  // 11^5 < 1e6 < 11^6
  EXPECT_EQ(t.states.cols(), 7);
  EXPECT_EQ(t.inputs.size(), 6);
  EXPECT_GT(std::abs(t.states(0, 6)), kDivergenceLimit);
}

TEST(ClosedLoop, ZeroGainMatchesOpenLoop) {
  const SystemDef s = vanderpol(1.0);
  for (const auto& spec : {lifting::LiftingSpec::monomial(2, 3), lifting::LiftingSpec::delay(2, 4, 2)}) {
    const Vec k = Vec::Zero(lifting::dimension(spec));
    const Trajectory closed = simulate_closed(s, spec, k, vec2(1, -0.6), 300, 0.01);
    const Trajectory open = simulate_open(s, vec2(1, -0.6), Vec::Zero(300), 0.01, spec.history());
    EXPECT_EQ(closed.kind, TrajectoryKind::ClosedLoop);
    EXPECT_EQ(closed.states, open.states);
    EXPECT_EQ(closed.warmup, spec.history());
  }
}

TEST(ClosedLoop, LinearFeedbackDecreasesLyapunov) {
  // Unstable A, u = k^T x places the continuous poles at -0.5 and -2.5.
  Mat a = 0.5 * Mat::Identity(2, 2);
  a(0, 1) = 1.0;
  const SystemDef s = linear(a, vec2(0, 1));
  const auto spec = lifting::LiftingSpec::monomial(2, 1);
  const Vec k = vec2(-3.0, -4.0);
  const Trajectory t = simulate_closed(s, spec, k, vec2(1, -0.6), 2000, 0.01);
  ASSERT_FALSE(t.diverged);
  EXPECT_LE(t.state(2000).norm(), 1e-2);
  // V = x^T P x for the continuous closed loop; Euler steps keep it decreasing
  Mat acl = a;
  acl.row(1) += k.transpose();
  const Mat kron_sum = linalg::kron(Mat::Identity(2, 2), acl.transpose()) +
                       linalg::kron(acl.transpose(), Mat::Identity(2, 2));
  const Vec pvec = kron_sum.fullPivLu().solve(-Vec(Mat::Identity(2, 2).reshaped()));
  const Mat p = pvec.reshaped(2, 2);
  for (int j = 0; j < t.steps(); ++j) {
    const Vec x0 = t.state(j), x1 = t.state(j + 1);
    EXPECT_LT(x1.dot(p * x1), x0.dot(p * x0)) << "k " << j;
  }
}

TEST(ClosedLoop, DelayGainUsesHistory) {
  const SystemDef s = linear(Mat::Zero(1, 1), Vec::Ones(1));
  const auto spec = lifting::LiftingSpec::delay(1, 2, 0);
  // z = (x_k, x_{k-1}, x_{k-2}); u = -x_{k-2}
  Vec k = Vec::Zero(3);
  k(2) = -1.0;
  const Trajectory t = simulate_closed(s, spec, k, Vec::Ones(1), 3, 1.0);
  EXPECT_EQ(t.warmup, 2);
  EXPECT_DOUBLE_EQ(t.inputs(2), -1.0);
  EXPECT_DOUBLE_EQ(t.state(1)(0), 0.0);
}

TEST(ClosedLoop, Rejections) {
  const SystemDef s = vanderpol(1.0);
  const auto spec = lifting::LiftingSpec::monomial(2, 2);
  EXPECT_THROW(simulate_closed(s, spec, Vec::Zero(3), Vec::Zero(2), 10, 0.01), Error);
  EXPECT_THROW(simulate_closed(s, lifting::LiftingSpec::monomial(3, 1), Vec::Zero(3), Vec::Zero(2), 10, 0.01),
               Error);
  EXPECT_THROW(simulate_closed(s, spec, Vec::Zero(5), Vec::Zero(2), -1, 0.01), Error);
}

TEST(Output, CsvLayout) {
  const Trajectory t = simulate_open(vanderpol(1.0), vec2(1, 0), vec2(0.5, -0.5), 0.1, 1);
  const std::string csv = to_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,t,x1,x2,u");
  EXPECT_NE(csv.find("\n-1,-0.1,1,0,0\n"), std::string::npos);
  EXPECT_EQ(csv.back(), '\n');
  const std::string last = csv.substr(csv.rfind('\n', csv.size() - 2) + 1);
  EXPECT_EQ(last.substr(0, 2), "2,");
  EXPECT_EQ(last[last.size() - 2], ',');

  const std::string pp = phase_portrait_csv({&t, &t});
  EXPECT_EQ(pp.substr(0, 6), "x1,x2\n");
  EXPECT_NE(pp.find("\n\n"), std::string::npos);
}

TEST(Output, DatasetAndLift) {
  const Trajectory t = simulate_open(vanderpol(1.0), vec2(1, 0), generate_excitation(2, -1, 1, 50), 0.01, 3);
  const edmd::Dataset ds = to_dataset(t, 2, "test");
  EXPECT_EQ(ds.warmup, 3);
  EXPECT_EQ(ds.states, t.states);
  const auto spec = lifting::LiftingSpec::delay(2, 3, 0);
  const Mat z = lifted_states(t, spec);
  EXPECT_EQ(z.cols(), 51);
  EXPECT_EQ(z.rows(), lifting::dimension(spec));
  EXPECT_EQ(z.col(0).head(2), t.state(0));
  EXPECT_THROW(lifted_states(t, lifting::LiftingSpec::delay(2, 5, 0)), Error);
}

}  // namespace
}  // namespace koopstab::sim
