#include <benchmark/benchmark.h>

#include "semkit/encoder.hpp"
#include "semkit/world.hpp"

using namespace semkit;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return Tensor::from(shape, v);
}

void bm_joint_graph_attention(benchmark::State& state) {
  const int64_t n = state.range(0), d = 32;
  Rng rng(3);
  Tensor q = random_tensor({n, d}, rng);
  Tensor k = random_tensor({n, d}, rng);
  Tensor v = random_tensor({n, d}, rng);
  Tensor p = random_tensor({n, n, d}, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(joint_graph_attention(q, k, v, p, 4));
}

void bm_vanilla_attention(benchmark::State& state) {
  const int64_t n = state.range(0), d = 32;
  Rng rng(3);
  Tensor q = random_tensor({n, d}, rng);
  Tensor k = random_tensor({n, d}, rng);
  Tensor v = random_tensor({n, d}, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(joint_graph_attention(q, k, v, Tensor(), 4));
}

void bm_fk(benchmark::State& state) {
  Embodiment e = make_arm(state.range(0) == 6 ? "arm6" : "arm8");
  Rng rng(5);
  std::vector<double> q(e.num_joints());
  for (double& x : q) x = rng.uniform(-1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(e.fk(q));
}

void bm_fk_batch(benchmark::State& state) {
  Embodiment e = make_arm("arm6");
  const int nj = e.num_joints();
  Rng rng(5);
  Tensor angles = random_tensor({nj, state.range(0)}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fk_batch(e, angles));
}

void bm_fk_batch_backward(benchmark::State& state) {
  Embodiment e = make_arm("arm6");
  const int nj = e.num_joints();
  Rng rng(5);
  for (auto _ : state) {
    std::vector<double> v(nj * state.range(0));
    for (double& x : v) x = rng.normal();
    Tensor angles = Tensor::leaf({nj, state.range(0)}, v);
    Tensor s = sum(fk_batch(e, angles));
    s.backward();
    benchmark::DoNotOptimize(angles.grad());
  }
}

BENCHMARK(bm_joint_graph_attention)->Arg(6)->Arg(8)->Arg(32);
BENCHMARK(bm_vanilla_attention)->Arg(6)->Arg(8)->Arg(32);
BENCHMARK(bm_fk)->Arg(6)->Arg(8);
BENCHMARK(bm_fk_batch)->Arg(16)->Arg(64);
BENCHMARK(bm_fk_batch_backward)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
