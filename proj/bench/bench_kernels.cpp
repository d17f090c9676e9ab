// Serial reference kernels against their OpenMP counterparts.

#include <cflnet/contrastive.hpp>
#include <cflnet/srm.hpp>

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

namespace con = cflnet::contrastive;
namespace srm = cflnet::srm;

namespace {

std::vector<float> gaussian(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

std::vector<std::uint8_t> bits(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(0.3);
    std::vector<std::uint8_t> v(n);
    for (auto& x : v) x = b(rng);
    return v;
}

std::vector<float> unit_rows(int n, int d, std::uint64_t seed) {
    auto e = gaussian(static_cast<std::size_t>(n) * d, seed);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += double(e[i * d + j]) * e[i * d + j];
        const float inv = static_cast<float>(1.0 / std::sqrt(s));
        for (int j = 0; j < d; ++j) e[i * d + j] *= inv;
    }
    return e;
}

template <bool Parallel>
void BM_Srm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::vector<float> img(3 * n * n);
    std::mt19937_64 rng(1);
    for (auto& v : img) v = static_cast<float>(rng() % 256);
    for (auto _ : state) {
        auto out = Parallel ? srm::apply_srm<float>(img, 3, n, n) : srm::reference::apply_srm<float>(img, 3, n, n);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * 3 * n * n);
}

template <bool Parallel>
void BM_Pool(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), n = 256, k = 64;
    const auto f = gaussian(static_cast<std::size_t>(c) * n * n, 2);
    for (auto _ : state) {
        auto p = Parallel ? con::partition_and_pool<float>(f, c, n, n, k)
                          : con::reference::partition_and_pool<float>(f, c, n, n, k);
        benchmark::DoNotOptimize(p.embeddings.data());
    }
    state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(f.size() * sizeof(float)));
}

template <bool Parallel>
void BM_Majority(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto m = bits(static_cast<std::size_t>(n) * n, 3);
    for (auto _ : state) {
        auto l = Parallel ? con::downsample_mask_majority(m, n, n, 64)
                          : con::reference::downsample_mask_majority(m, n, n, 64);
        benchmark::DoNotOptimize(l.data());
    }
}

template <bool Parallel>
void BM_SupConGrad(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0)), d = 256;
    const auto e = unit_rows(n, d, 4);
    const auto l = bits(n, 5);
    std::vector<float> grad(e.size());
    for (auto _ : state) {
        auto r = Parallel ? con::supcon_loss_grad<float>(e, n, d, l, 0.1, grad)
                          : con::reference::supcon_loss_grad<float>(e, n, d, l, 0.1, grad);
        benchmark::DoNotOptimize(r.loss);
        benchmark::DoNotOptimize(grad.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n);
}

} // namespace

BENCHMARK(BM_Srm<false>)->Name("srm/reference")->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Srm<true>)->Name("srm/openmp")->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pool<false>)->Name("pool/reference")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pool<true>)->Name("pool/openmp")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Majority<false>)->Name("majority/reference")->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Majority<true>)->Name("majority/openmp")->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SupConGrad<false>)->Name("supcon_grad/reference")->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SupConGrad<true>)->Name("supcon_grad/openmp")->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
