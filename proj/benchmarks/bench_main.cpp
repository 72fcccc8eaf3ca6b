#include <benchmark/benchmark.h>

#include "msens/augment.hpp"
#include "msens/metrics.hpp"
#include "msens/nn.hpp"

using namespace msens;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor in = random_tensor({8, size, size}, rng);
    const Tensor w = random_tensor({8, 8, 3, 3}, rng);
    const Tensor b({8});
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, w, b, 1, 1));
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Tensor in = random_tensor({8, size, size}, rng);
    const Tensor w = random_tensor({8, 8, 3, 3}, rng);
    const Tensor g = random_tensor({8, size, size}, rng);
    Tensor gw(w.shape), gb({8});
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(in, w, g, 1, 1, gw, gb));
}
BENCHMARK(BM_Conv2dBackward)->Arg(32)->Arg(64);

void BM_ToyModelStep(benchmark::State& state) {
    const ModelSpec spec = make_model_spec(toy_residual_layers(), static_cast<int>(state.range(0)));
    Rng rng(3);
    const ModelParams params = init_params(spec, rng);
    std::vector<Example> batch;
    for (int i = 0; i < 16; ++i) batch.push_back({random_tensor(spec.input_shape, rng), i % 2});
    for (auto _ : state) benchmark::DoNotOptimize(model_backward(spec, params, batch, Mode::Train, 7));
}
BENCHMARK(BM_ToyModelStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
    Rng rng(4);
    std::vector<ScoredSample> s(static_cast<std::size_t>(state.range(0)));
    for (auto& x : s) x = {rng.uniform01(), rng.bernoulli(0.5) ? 1 : 0};
    s[0].label = 0;
    s[1].label = 1;
    for (auto _ : state) benchmark::DoNotOptimize(auc(roc_curve(s)));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_ResizeBilinear(benchmark::State& state) {
    Rng rng(5);
    GrayImage img(128, 128, 255);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(rng.uniform_index(256));
    const int out = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(resize_bilinear(img, out, out));
}
BENCHMARK(BM_ResizeBilinear)->Arg(32)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
