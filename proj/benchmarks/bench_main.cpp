#include <benchmark/benchmark.h>

#include "sinkformer/approx.hpp"
#include "sinkformer/model.hpp"

#include <random>

using namespace sinkformer;

namespace {

Matrix uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

EncoderShape bench_shape() {
  EncoderShape s;
  s.in_dim = 2;
  s.out_dim = 4;
  s.layers = 2;
  s.heads = 2;
  return s;
}

}  // namespace

static void BM_SinkhornLog(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0);
  const DiscreteMeasure mu = DiscreteMeasure::uniform(uniform(n, 2, rng));
  const DiscreteMeasure nu = DiscreteMeasure::uniform(uniform(n, 2, rng));
  const CostMatrix cost(uniform(n, n, rng) * 3.0);
  SinkhornConfig cfg;
  cfg.epsilon = 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_solve(cost, mu, nu, cfg).iters);
  state.SetComplexityN(n);
}
BENCHMARK(BM_SinkhornLog)->RangeMultiplier(2)->Range(4, 128)->Complexity();

static void BM_SinkhornKernel(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto n = state.range(0);
  const DiscreteMeasure mu = DiscreteMeasure::uniform(uniform(n, 2, rng));
  const DiscreteMeasure nu = DiscreteMeasure::uniform(uniform(n, 2, rng));
  const CostMatrix cost(uniform(n, n, rng) * 3.0);
  SinkhornConfig cfg;
  cfg.epsilon = 0.5;
  cfg.log_domain = false;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_solve(cost, mu, nu, cfg).iters);
}
BENCHMARK(BM_SinkhornKernel)->RangeMultiplier(2)->Range(4, 128);

static void BM_ExactW1(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto n = state.range(0);
  const DiscreteMeasure p = DiscreteMeasure::uniform(uniform(n, 2, rng));
  const DiscreteMeasure q = DiscreteMeasure::uniform(uniform(n, 2, rng));
  for (auto _ : state) benchmark::DoNotOptimize(exact_w1(p, q).value);
  state.SetComplexityN(n);
}
BENCHMARK(BM_ExactW1)->RangeMultiplier(2)->Range(4, 64)->Complexity();

static void BM_BlockCoupling(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const DiscreteMeasure mu = DiscreteMeasure::uniform(uniform(32, 2, rng));
  const DiscreteMeasure nu = DiscreteMeasure::uniform(uniform(32, 2, rng));
  const Coupling pi = product_coupling(mu, nu);
  const auto k = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const Partition px = build_partition(mu.support(), k);
    const Partition py = build_partition(nu.support(), k);
    benchmark::DoNotOptimize(block_coupling(pi, px, py).density.values.data());
  }
}
BENCHMARK(BM_BlockCoupling)->Arg(1)->Arg(4)->Arg(16);

static void BM_EncodeAtoms(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const EncoderParams enc = random_encoder(bench_shape(), rng);
  const DiscreteMeasure mu = DiscreteMeasure::uniform(uniform(state.range(0), 2, rng));
  for (auto _ : state) benchmark::DoNotOptimize(encode_atoms(enc, mu).data());
}
BENCHMARK(BM_EncodeAtoms)->Arg(4)->Arg(16)->Arg(64);

static void BM_Gradient(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const SinkhornTransformerParams params = random_transformer(bench_shape(), false, rng);
  SynthOptions o;
  o.family = Family::kPlantedEntropic;
  o.count = 8;
  o.n_max = 8;
  o.m_max = 8;
  const auto batch = synth_coupling_system(o);
  TrainConfig cfg;
  cfg.unroll = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(grad(params, batch, cfg).loss);
}
BENCHMARK(BM_Gradient)->Arg(20)->Arg(50);

BENCHMARK_MAIN();
