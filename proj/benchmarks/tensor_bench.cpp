#include <benchmark/benchmark.h>

#include "mmrl/autodiff.hpp"
#include "mmrl/rng.hpp"
#include "mmrl/tensor.hpp"

using namespace mmrl;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({rows, cols});
    for (double& v : t.values()) v = rng.uniform(-1, 1);
    return t;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_matrix(n, n, 1);
    const Tensor b = random_matrix(n, n, 2);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv2dForward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    Tensor in({batch, 1, 16, 16});
    Tensor w({8, 1, 3, 3});
    Tensor b({8});
    for (double& v : in.values()) v = rng.uniform(-1, 1);
    for (double& v : w.values()) v = rng.uniform(-1, 1);
    for (auto _ : state) {
        Tape tape;
        Var out = tape.conv2d(tape.leaf(in), tape.leaf(w), tape.leaf(b), 1, 1);
        benchmark::DoNotOptimize(out.value().data());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(50);

static void BM_MatmulBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_matrix(n, n, 4);
    const Tensor b = random_matrix(n, n, 5);
    for (auto _ : state) {
        Tape tape;
        Var av = tape.leaf(a, true);
        Var bv = tape.leaf(b, true);
        Var loss = tape.sum(tape.matmul(av, bv));
        tape.backward(loss);
        benchmark::DoNotOptimize(av.grad().data());
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);
