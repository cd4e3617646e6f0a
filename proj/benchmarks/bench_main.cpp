#include <benchmark/benchmark.h>

#include <random>

#include "funsor/funsor.hpp"

using namespace funsor;

namespace {

Term random_chain(std::int64_t T, std::int64_t K) {
  std::mt19937_64 rng(T * 31 + K);
  std::normal_distribution<double> nd;
  std::vector<double> vals(T * K * K);
  for (auto& v : vals) v = nd(rng);
  Term body = tensor(TensorAtom(
      TypeContext{{"t", Domain::bint(T)}, {"i", Domain::bint(K)}, {"j", Domain::bint(K)}}, Domain::real(), vals));
  return reduce(ReduceOp::LogSumExp, std::vector<Name>{"i", "j"}, markov("t", StepMatching{{{"i", "j"}}}, body));
}

Term random_walk(std::int64_t T) {
  KalmanSpec k;
  k.F = Eigen::MatrixXd::Identity(2, 2) * 0.9;
  k.H = Eigen::MatrixXd::Identity(2, 2);
  k.Q = Eigen::MatrixXd::Identity(2, 2) * 0.5;
  k.R = Eigen::MatrixXd::Identity(2, 2);
  k.observations = Eigen::MatrixXd::Zero(T, 2);
  for (std::int64_t t = 0; t < T; ++t) k.observations.row(t) << std::sin(0.1 * t), std::cos(0.1 * t);
  return build_kalman(k);
}

void run_chain(benchmark::State& state, MarkovScan scan) {
  const Term chain = random_chain(state.range(0), 4);
  EvalOptions opts;
  opts.scan = scan;
  for (auto _ : state) benchmark::DoNotOptimize(scalar_value(interpret(exact(), chain, opts)));
}

void BM_TensorChainSequential(benchmark::State& s) { run_chain(s, MarkovScan::Sequential); }
void BM_TensorChainParallel(benchmark::State& s) { run_chain(s, MarkovScan::Parallel); }

void run_walk(benchmark::State& state, MarkovScan scan) {
  const Term walk = random_walk(state.range(0));
  EvalOptions opts;
  opts.scan = scan;
  for (auto _ : state) benchmark::DoNotOptimize(scalar_value(interpret(exact(), walk, opts)));
}

void BM_KalmanSequential(benchmark::State& s) { run_walk(s, MarkovScan::Sequential); }
void BM_KalmanParallel(benchmark::State& s) { run_walk(s, MarkovScan::Parallel); }

void BM_OptimizeFactorGraph(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const std::int64_t n = state.range(0);
  auto factor = [&](const Name& a, const Name& b) {
    std::vector<double> v(n * n);
    for (auto& x : v) x = nd(rng);
    return tensor(TensorAtom(TypeContext{{a, Domain::bint(n)}, {b, Domain::bint(n)}}, Domain::real(), v));
  };
  Term body = sum_of({factor("a", "b"), factor("b", "c"), factor("c", "d"), factor("d", "e")});
  Term t = reduce_all(ReduceOp::LogSumExp, body);
  for (auto _ : state) benchmark::DoNotOptimize(scalar_value(interpret(optimize(), t)));
}

}  // namespace

BENCHMARK(BM_TensorChainSequential)->RangeMultiplier(4)->Range(4, 1024);
BENCHMARK(BM_TensorChainParallel)->RangeMultiplier(4)->Range(4, 1024);
BENCHMARK(BM_KalmanSequential)->RangeMultiplier(4)->Range(4, 256);
BENCHMARK(BM_KalmanParallel)->RangeMultiplier(4)->Range(4, 256);
BENCHMARK(BM_OptimizeFactorGraph)->Arg(4)->Arg(8)->Arg(16);

BENCHMARK_MAIN();
