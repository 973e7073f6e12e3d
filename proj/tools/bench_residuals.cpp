// Serial reference kernels against the OpenMP kernels on the same samples.

#include <benchmark/benchmark.h>

#include "nls/expr.hpp"
#include "nls/lagrangian.hpp"
#include "nls/splitting.hpp"

namespace {

using namespace nls;

SplittingSpec splitting_of(const std::string& text) {
  const auto ctx = VarContext::bundle(1, 1, {VarRole::Base, VarRole::Fibre, VarRole::BaseVelocity}, 1e-6);
  return SplittingSpec::from_fields({1, 1, 1e-6}, {compile_expression(text, ctx)}, true);
}

LagrangianSpec quartic() {
  const auto ctx = VarContext::bundle(
      1, 1, {VarRole::Base, VarRole::Fibre, VarRole::BaseVelocity, VarRole::FibreVelocity}, 1e-6);
  LagrangianSpec L{{1, 1, 1e-6}, compile_expression("0.5*v1^2 + 0.5*w1^2 + w1*v1^2", ctx), std::nullopt, true};
  L.check();
  return L;
}

SampleOptions options(benchmark::State& state, ExecPolicy policy) {
  SampleOptions o;
  o.samples = static_cast<std::size_t>(state.range(0));
  o.policy = policy;
  return o;
}

void classify_kernel(benchmark::State& state, ExecPolicy policy) {
  const auto h = splitting_of("x1*sin(v1) + y1*v1^2");
  const auto o = options(state, policy);
  for (auto _ : state) benchmark::DoNotOptimize(classify(h, o));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void tangency_kernel(benchmark::State& state, ExecPolicy policy) {
  const auto L = quartic();
  const auto h = induced_splitting(L);
  auto o = options(state, policy);
  o.box = SampleBox{Vec::Constant(3, -1.0), Vec::Constant(3, 1.0)};
  o.box->lo[2] = -0.3;
  o.box->hi[2] = 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(tangency_check(L, h, o));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ClassifySerial(benchmark::State& s) { classify_kernel(s, ExecPolicy::Serial); }
void BM_ClassifyParallel(benchmark::State& s) { classify_kernel(s, ExecPolicy::Parallel); }
void BM_TangencySerial(benchmark::State& s) { tangency_kernel(s, ExecPolicy::Serial); }
void BM_TangencyParallel(benchmark::State& s) { tangency_kernel(s, ExecPolicy::Parallel); }

BENCHMARK(BM_ClassifySerial)->Arg(200)->Arg(5000)->UseRealTime();
BENCHMARK(BM_ClassifyParallel)->Arg(200)->Arg(5000)->UseRealTime();
BENCHMARK(BM_TangencySerial)->Arg(200)->Arg(2000)->UseRealTime();
BENCHMARK(BM_TangencyParallel)->Arg(200)->Arg(2000)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
