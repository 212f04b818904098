// OpenMP kernels against their serial references on synthesis-sized problems.

#include <benchmark/benchmark.h>

#include <random>

#include "koopstab/sdp_kernels.hpp"
#include "koopstab/synthesis.hpp"

namespace {

using namespace koopstab;

edmd::BilinearModel random_model(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  edmd::BilinearModel m;
  m.spec = lifting::LiftingSpec::monomial(n, 1);
  m.a = Mat::NullaryExpr(n, n, [&] { return g(rng); });
  m.a *= 0.95 / m.a.eigenvalues().cwiseAbs().maxCoeff();
  m.b0 = Vec::NullaryExpr(n, [&] { return g(rng); });
  m.b1 = Mat::NullaryExpr(n, n, [&] { return 0.1 * g(rng); });
  return m;
}

// Decrease block of the robust LMI with a random positive definite W.
struct NewtonCase {
  sdp::kernels::ActiveBlock block;
  Mat w;
  int m = 0;
};

NewtonCase newton_case(int n) {
  const auto m = random_model(n, 3);
  const auto p = synthesis::build_robust_lmi(m, synthesis::region_ball(n, 1.0), 1e-5);
  const sdp::Lmi& lmi = p.lmi.constraints()[static_cast<std::size_t>(p.main_block)];
  NewtonCase c;
  c.m = p.lmi.num_scalars();
  c.block.dim = lmi.dim;
  c.block.constant = lmi.constant;
  for (int i = 0; i < c.m; ++i) {
    if (lmi.coeffs[static_cast<std::size_t>(i)].empty()) continue;
    c.block.vars.push_back(i);
    c.block.coeffs.push_back(lmi.coeffs[static_cast<std::size_t>(i)]);
  }
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const Mat r = Mat::NullaryExpr(lmi.dim, lmi.dim, [&] { return g(rng); });
  c.w = r * r.transpose() / lmi.dim + Mat::Identity(lmi.dim, lmi.dim);
  return c;
}

template <bool Parallel>
void BM_Newton(benchmark::State& state) {
  const NewtonCase c = newton_case(static_cast<int>(state.range(0)));
  Mat h(c.m, c.m);
  Vec g(c.m);
  for (auto _ : state) {
    h.setZero();
    g.setZero();
    if constexpr (Parallel) {
      sdp::kernels::accumulate_newton(c.block, c.w, h, g);
    } else {
      sdp::kernels::accumulate_newton_reference(c.block, c.w, h, g);
    }
    benchmark::DoNotOptimize(h.data());
  }
  state.counters["block_dim"] = c.block.dim;
  state.counters["vars"] = c.m;
}

// Verification sampling on a nominal controller.
template <bool Parallel>
void BM_Verify(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto m = random_model(n, 7);
  const auto region = synthesis::region_ball(n, 1.0);
  const auto ctrl = synthesis::synthesize(m, region, synthesis::Mode::Nominal);
  synthesis::VerifyOptions opt;
  opt.samples = 10000;
  opt.parallel = Parallel;
  for (auto _ : state) {
    const auto r = synthesis::verify_certificate(m, ctrl, region, 0.0, opt);
    benchmark::DoNotOptimize(r.violations);
  }
}

// Whole solve, parallel Newton assembly on and off.
template <bool Parallel>
void BM_Synthesize(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto m = random_model(n, 11);
  const auto region = synthesis::region_ball(n, 1.0);
  synthesis::SynthesisOptions opt;
  opt.solver.parallel = Parallel;
  for (auto _ : state) {
    const auto r = synthesis::try_synthesize(m, region, synthesis::Mode::Nominal, 0.0, opt);
    benchmark::DoNotOptimize(r.solution.iterations);
  }
}

}  // namespace

BENCHMARK(BM_Newton<false>)->Name("newton/serial")->Arg(8)->Arg(20)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Newton<true>)->Name("newton/openmp")->Arg(8)->Arg(20)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Verify<false>)->Name("verify/serial")->Arg(20)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Verify<true>)->Name("verify/openmp")->Arg(20)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Synthesize<false>)->Name("synthesize/serial")->Arg(20)->Unit(benchmark::kMillisecond)->Iterations(2);
BENCHMARK(BM_Synthesize<true>)->Name("synthesize/openmp")->Arg(20)->Unit(benchmark::kMillisecond)->Iterations(2);

BENCHMARK_MAIN();
