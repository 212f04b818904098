#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "koopstab/lifting.hpp"
#include "koopstab/rng.hpp"
#include "koopstab/synthesis.hpp"

namespace koopstab::synthesis {
namespace {

using lifting::LiftingSpec;

BilinearModel zero_model(const LiftingSpec& spec) {
  const int n = lifting::dimension(spec);
  BilinearModel m;
  m.spec = spec;
  m.a = Mat::Zero(n, n);
  m.b0 = Vec::Zero(n);
  m.b1 = Mat::Zero(n, n);
  return m;
}

BilinearModel scalar_model(double a, double b0, double b1) {
  BilinearModel m = zero_model(LiftingSpec::monomial(1, 1));
  m.a(0, 0) = a;
  m.b0(0) = b0;
  m.b1(0, 0) = b1;
  return m;
}

// Random model with spectral radius rho and a small bilinear part.
BilinearModel random_model(std::mt19937_64& rng, int n, double rho) {
  std::normal_distribution<double> g;
  BilinearModel m = zero_model(LiftingSpec::monomial(n, 1));
  for (int i = 0; i < n; ++i) {
    m.b0(i) = g(rng);
    for (int j = 0; j < n; ++j) {
      m.a(i, j) = g(rng);
      m.b1(i, j) = 0.1 * g(rng);
    }
  }
  const double r = m.a.eigenvalues().cwiseAbs().maxCoeff();
  m.a *= rho / r;
  return m;
}

Mat random_spd(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return a * a.transpose() + 0.1 * Mat::Identity(n, n);
}

// Uniform samples in { z : z^T P^{-1} z <= c }.
std::vector<Vec> ellipsoid_samples(const Mat& p, double c, int count, std::uint64_t seed) {
  const int n = static_cast<int>(p.rows());
  const Mat l = Eigen::LLT<Mat>(p).matrixL();
  rng::SplitMix64 gen(seed);
  std::vector<Vec> out;
  for (int s = 0; s < count; ++s) {
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = gen.normal();
    d.normalize();
    const double radius = std::sqrt(c) * std::pow(gen.uniform(), 1.0 / n);
    out.push_back(l * (radius * d));
  }
  return out;
}

TEST(Region, BallBlocksAndMembership) {
  const RegionSpec r = region_ball(2, 1.0);
  EXPECT_EQ(r.q_inv, -Mat::Identity(2, 2));
  EXPECT_EQ(r.s_inv, Vec::Zero(2));
  EXPECT_DOUBLE_EQ(r.r_inv, 1.0);
  EXPECT_TRUE(r.is_centered_ball());
  EXPECT_TRUE(r.contains(Vec::Unit(2, 0) * 0.5));
  EXPECT_FALSE(r.contains(Vec::Unit(2, 0) * 2.0));
  EXPECT_DOUBLE_EQ(region_ball(3, 4.0).r_inv, 0.25);
}

TEST(Region, GeneralInverseIdentity) {
  std::mt19937_64 rng(5);
  const int n = 4;
  const Mat q = -random_spd(rng, n);
  Vec s(n);
  s << 0.1, -0.2, 0.05, 0.3;
  const RegionSpec r = make_region(q, s, 2.0);
  Mat full(n + 1, n + 1), inv(n + 1, n + 1);
  full << q, s, s.transpose(), r.r;
  inv << r.q_inv, r.s_inv, r.s_inv.transpose(), r.r_inv;
  EXPECT_LE((full * inv - Mat::Identity(n + 1, n + 1)).norm(), 1e-10);
  EXPECT_FALSE(r.is_centered_ball());
}

TEST(Region, Rejections) {
  const Vec s = Vec::Zero(2);
  EXPECT_THROW(make_region(Mat::Identity(2, 2), s, 1.0), Error);   // Q not negative definite
  EXPECT_THROW(make_region(-Mat::Identity(2, 2), s, -1.0), Error); // R <= 0
  EXPECT_THROW(region_ball(2, 0.0), Error);
  EXPECT_THROW(make_region(-Mat::Identity(2, 2), Vec::Zero(3), 1.0), Error);
}

TEST(Builders, VanDerPolDimensions) {
  const BilinearModel mono = zero_model(LiftingSpec::monomial(2, 5));
  const BilinearModel delay = zero_model(LiftingSpec::delay(2, 15, 0));
  ASSERT_EQ(mono.dim(), 20);
  ASSERT_EQ(delay.dim(), 32);

  SynthesisProblem p = build_nominal_lmi(mono, region_ball(20, 1.0));
  EXPECT_EQ(p.main_dim, 41);
  EXPECT_EQ(p.lmi.num_scalars(), 230);
  p = build_robust_lmi(mono, region_ball(20, 1.0), 1e-5);
  EXPECT_EQ(p.main_dim, 61);
  EXPECT_EQ(p.lmi.num_scalars(), 231);

  p = build_nominal_lmi(delay, region_ball(32, 1.0));
  EXPECT_EQ(p.main_dim, 65);
  p = build_robust_lmi(delay, region_ball(32, 1.0), 1e-5);
  EXPECT_EQ(p.main_dim, 97);
  EXPECT_EQ(p.lmi.num_scalars(), 561);
}

TEST(Builders, DimensionLawProperty) {
  for (int n = 1; n <= 12; ++n) {
    const BilinearModel m = zero_model(LiftingSpec::monomial(n, 1));
    const SynthesisProblem p = build_robust_lmi(m, region_ball(n, 1.0), 0.1);
    EXPECT_EQ(p.main_dim, 3 * n + 1);
    EXPECT_EQ(p.lmi.num_scalars(), (n * n + 3 * n) / 2 + 1);
  }
}

TEST(Builders, OutputCoefficientPlacement) {
  std::mt19937_64 rng(9);
  BilinearModel m = random_model(rng, 3, 0.8);
  const SynthesisProblem p = build_nominal_lmi(m, region_ball(3, 1.0));
  const sdp::Lmi& block = p.lmi.constraints()[static_cast<std::size_t>(p.main_block)];
  const int y1 = p.lmi.offset(p.y_var);
  const Mat f = block.coeffs[static_cast<std::size_t>(y1)].dense();
  // (1,3) block holds B0 y^T, so y_1 contributes B0 e_1^T there
  Mat expected = Mat::Zero(7, 7);
  expected.block(0, 4, 3, 1) = m.b0;
  expected.block(4, 0, 1, 3) = m.b0.transpose();
  // (2,3) block holds y^T
  expected(3, 4) = 1.0;
  expected(4, 3) = 1.0;
  EXPECT_LE((f - expected).norm(), 1e-15);
}

TEST(Builders, RobustReducesToNominalPattern) {
  std::mt19937_64 rng(2);
  const BilinearModel m = random_model(rng, 3, 0.9);
  const RegionSpec r = region_ball(3, 1.0);
  const SynthesisProblem nom = build_nominal_lmi(m, r);
  SynthesisOptions opt;
  opt.pinned_tau = 0.5;
  const SynthesisProblem rob = build_robust_lmi(m, r, 0.0, opt);
  ASSERT_EQ(nom.lmi.num_scalars(), rob.lmi.num_scalars());
  std::normal_distribution<double> g;
  Vec x(nom.lmi.num_scalars());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
  const Mat fn = nom.lmi.evaluate(nom.main_block, x);
  const Mat fr = rob.lmi.evaluate(rob.main_block, x);
  // rows/cols: [z, 1, eps, z+]; dropping eps and undoing tau recovers the nominal matrix
  const int keep[] = {0, 1, 2, 3, 7, 8, 9};
  Mat reduced(7, 7);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) reduced(i, j) = fr(keep[i], keep[j]);
  reduced.topLeftCorner(3, 3) += 0.5 * Mat::Identity(3, 3);
  EXPECT_LE((reduced - fn).norm(), 1e-14);
  EXPECT_LE((fr.block(4, 4, 3, 3) - 0.5 * Mat::Identity(3, 3)).norm(), 1e-15);
  EXPECT_EQ(fr.block(4, 0, 3, 4).norm(), 0.0);
  EXPECT_EQ(fr.block(4, 7, 3, 3).norm(), 0.0);
}

TEST(Builders, MismatchedRegion) {
  const BilinearModel m = zero_model(LiftingSpec::monomial(2, 1));
  EXPECT_THROW(build_nominal_lmi(m, region_ball(3, 1.0)), Error);
  EXPECT_THROW(build_robust_lmi(m, region_ball(2, 1.0), -1.0), Error);
}

TEST(Synthesize, ScalarOpenLoopUnstable) {
  const BilinearModel m = scalar_model(1.5, 1.0, 0.0);
  const RegionSpec r = region_ball(1, 1.0);
  const Controller c = synthesize(m, r, Mode::Nominal);
  EXPECT_LT(std::abs(1.5 + c.k(0)), 1.0);
  EXPECT_GT(c.c, 0.0);
  EXPECT_LE(std::abs(c.p(0, 0) * c.k(0) - c.y(0)), 1e-8 * std::abs(c.y(0)));
  const VerifyReport rep = verify_certificate(m, c, r, 0.0);
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.violations, 0);
}

TEST(Synthesize, StableUncontrollable) {
  const BilinearModel m = scalar_model(0.5, 0.0, 0.0);
  const Controller c = synthesize(m, region_ball(1, 1.0), Mode::Nominal);
  EXPECT_GT(c.p(0, 0), 0.0);
  EXPECT_TRUE(std::isfinite(c.k(0)));
}

TEST(Synthesize, InfeasibleCarriesMargin) {
  // unstable and uncontrollable
  const BilinearModel m = scalar_model(1.5, 0.0, 0.0);
  try {
    synthesize(m, region_ball(1, 1.0), Mode::Nominal);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InfeasibleSynthesis);
  }
  const SynthesisResult r = try_synthesize(m, region_ball(1, 1.0), Mode::Nominal, 0.0);
  EXPECT_EQ(r.solution.status, sdp::Status::Infeasible);
  EXPECT_LE(r.solution.phase1_margin, 0.0);
}

TEST(Synthesize, RobustScalar) {
  const BilinearModel m = scalar_model(1.5, 1.0, 0.0);
  const RegionSpec r = region_ball(1, 1.0);
  const Controller c = synthesize(m, r, Mode::Robust, 0.01);
  EXPECT_GT(c.tau, 0.0);
  const VerifyReport rep = verify_certificate(m, c, r, 0.01);
  EXPECT_TRUE(rep.passed());
}

// Certificate soundness over random small models, both modes.
TEST(Synthesize, CertificateProperty) {
  std::mt19937_64 rng(3);
  int produced = 0;
  for (double rho : {0.5, 0.9, 1.1, 1.5}) {
    for (int n : {2, 4, 6}) {
      const BilinearModel m = random_model(rng, n, rho);
      const RegionSpec r = region_ball(n, 1.0);
      for (Mode mode : {Mode::Nominal, Mode::Robust}) {
        const double l = mode == Mode::Robust ? 1e-3 : 0.0;
        const SynthesisResult res = try_synthesize(m, r, mode, l);
        if (!res.controller) continue;
        ++produced;
        const VerifyReport rep = verify_certificate(m, *res.controller, r, l);
        EXPECT_EQ(rep.violations, 0) << "rho " << rho << " n " << n;
        EXPECT_GT(rep.schur_form_margin, 0.0);
        EXPECT_LT(rep.dual_form_margin, 0.0);
        EXPECT_LE(rep.gain_residual, 1e-8);
      }
    }
  }
  EXPECT_GE(produced, 12);
}

// Robust machinery with L = 0 and a vanishing pinned multiplier against the
// nominal machinery: same verdict, same gain.
TEST(Synthesize, ReductionProperty) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> radius(0.3, 1.4);
  int feasible = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = dim(rng);
    const BilinearModel m = random_model(rng, n, radius(rng));
    const RegionSpec r = region_ball(n, 1.0);
    // twice the floor the strictness margin puts on the tau I block
    SynthesisOptions opt;
    opt.pinned_tau = 1.0;
    const SynthesisProblem probe = build_robust_lmi(m, r, 0.0, opt);
    const double scale = probe.lmi.constraints()[static_cast<std::size_t>(probe.main_block)].scale();
    opt.pinned_tau = 2.0 * opt.delta * scale;
    const SynthesisResult nom = try_synthesize(m, r, Mode::Nominal, 0.0);
    const SynthesisResult rob = try_synthesize(m, r, Mode::Robust, 0.0, opt);
    ASSERT_EQ(nom.controller.has_value(), rob.controller.has_value()) << "trial " << trial;
    if (!nom.controller) continue;
    ++feasible;
    const Vec& kn = nom.controller->k;
    const Vec& kr = rob.controller->k;
    EXPECT_LE((kn - kr).norm(), 1e-4 * std::max(kn.norm(), 1e-12)) << "trial " << trial;
  }
  EXPECT_GE(feasible, 5);
}

TEST(Roa, BallClosedForm) {
  Mat p = Mat::Zero(2, 2);
  p(0, 0) = 2.0;
  p(1, 1) = 1.0;
  EXPECT_NEAR(compute_roa(p, region_ball(2, 1.0)), 0.5, 1e-12);
  EXPECT_NEAR(compute_roa(Mat::Identity(2, 2), region_ball(2, 5.0)), 5.0, 1e-12);
}

TEST(Roa, RandomBallsProperty) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 4;
    const Mat p = random_spd(rng, n);
    const double cz = 0.5 + trial;
    const RegionSpec r = region_ball(n, cz);
    const double c = compute_roa(p, r);
    const double lmax = linalg::sym_eig(p).eigenvalues.maxCoeff();
    EXPECT_NEAR(c, cz / lmax, 1e-8 * cz / lmax);
    int outside = 0;
    for (const Vec& z : ellipsoid_samples(p, c, 10000, 100 + trial)) outside += r.contains(z) ? 0 : 1;
    EXPECT_EQ(outside, 0);
  }
}

TEST(Roa, GeneralRegionMatchesScaledBall) {
  std::mt19937_64 rng(4);
  const Mat p = random_spd(rng, 3);
  const RegionSpec r = make_region(-2.0 * Mat::Identity(3, 3), Vec::Zero(3), 1.0);
  const double lmax = linalg::sym_eig(p).eigenvalues.maxCoeff();
  EXPECT_NEAR(compute_roa(p, r), 1.0 / (2.0 * lmax), kRoaRelTol * 10.0 / lmax);
}

TEST(Roa, ShiftedRegionContainment) {
  std::mt19937_64 rng(8);
  const Mat p = random_spd(rng, 3);
  Vec s(3);
  s << 0.3, -0.1, 0.2;
  const RegionSpec r = make_region(-Mat::Identity(3, 3), s, 1.0);
  const double c = compute_roa(p, r);
  ASSERT_GT(c, 0.0);
  int outside = 0;
  for (const Vec& z : ellipsoid_samples(p, c, 10000, 7)) outside += r.contains(z) ? 0 : 1;
  EXPECT_EQ(outside, 0);
  EXPECT_FALSE(roa_contained(linalg::spd_inverse(p), r, c * 1.01));
}

TEST(WorstCase, HardCase) {
  Mat w = Mat::Zero(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 3.0;
  const auto e = linalg::sym_eig(w);
  EXPECT_NEAR(worst_case_quadratic(e, Vec::Unit(2, 0), 1.0), 4.5, 1e-12);
  EXPECT_NEAR(worst_case_quadratic(e, Vec::Zero(2), 2.0), 12.0, 1e-12);
}

TEST(WorstCase, BruteForceProperty) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat w = random_spd(rng, 2);
    Vec m(2);
    m << g(rng), g(rng);
    const double rho = 0.1 + std::abs(g(rng));
    double brute = 0.0;
    for (int i = 0; i < 200000; ++i) {
      const double th = 2.0 * M_PI * i / 200000.0;
      Vec e(2);
      e << rho * std::cos(th), rho * std::sin(th);
      brute = std::max(brute, (m + e).dot(w * (m + e)));
    }
    const double exact = worst_case_quadratic(linalg::sym_eig(w), m, rho);
    EXPECT_GE(exact, brute * (1.0 - 1e-12));
    EXPECT_LE(exact, brute * (1.0 + 1e-6));
  }
}

TEST(Verify, SerialAndParallelAgree) {
  const BilinearModel m = scalar_model(1.5, 1.0, 0.2);
  const RegionSpec r = region_ball(1, 1.0);
  const Controller c = synthesize(m, r, Mode::Robust, 0.01);
  VerifyOptions serial;
  serial.parallel = false;
  const VerifyReport a = verify_certificate(m, c, r, 0.01, serial);
  const VerifyReport b = verify_certificate(m, c, r, 0.01);
  EXPECT_EQ(a.violations, b.violations);
  EXPECT_EQ(a.worst_relative_decrease, b.worst_relative_decrease);
}

TEST(Verify, PerturbedGainIsReported) {
  const BilinearModel m = scalar_model(1.5, 1.0, 0.0);
  const RegionSpec r = region_ball(1, 1.0);
  Controller c = synthesize(m, r, Mode::Nominal);
  c.k(0) += 2.0;  // closed loop 1.5 + k now outside the unit disk
  c.y = c.p * c.k;
  const VerifyReport rep = verify_certificate(m, c, r, 0.0);
  EXPECT_EQ(rep.violations, rep.samples);
  EXPECT_FALSE(rep.passed());
}

TEST(Synthesize, RegionSearch) {
  const BilinearModel m = scalar_model(1.2, 1.0, 0.3);
  RegionSpec region;
  const Controller c = synthesize_with_region(m, Mode::Nominal, 0.0, region);
  EXPECT_LT(region.q(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(region.r, 1.0);
  EXPECT_GT(c.c, 0.0);
  EXPECT_TRUE(verify_certificate(m, c, region, 0.0).passed());
}

TEST(Json, RoundTrips) {
  const BilinearModel m = scalar_model(1.5, 1.0, 0.1);
  const Controller c = synthesize(m, region_ball(1, 1.0), Mode::Robust, 0.01);
  const Controller back = controller_from_json(io::json::parse(to_json(c).dump()));
  EXPECT_EQ(back.k, c.k);
  EXPECT_EQ(back.p, c.p);
  EXPECT_EQ(back.mode, Mode::Robust);
  EXPECT_EQ(back.tau, c.tau);
  EXPECT_EQ(back.c, c.c);

  const RegionSpec ball = region_ball(2, 3.0);
  EXPECT_EQ(region_from_json(to_json(ball), 2).r, 3.0);
  Vec s(2);
  s << 0.1, 0.2;
  const RegionSpec gen = make_region(-Mat::Identity(2, 2), s, 1.5);
  const RegionSpec gen_back = region_from_json(io::json::parse(to_json(gen).dump()), 2);
  EXPECT_EQ(gen_back.s, gen.s);
  EXPECT_EQ(gen_back.q, gen.q);
}

}  // namespace
}  // namespace koopstab::synthesis
