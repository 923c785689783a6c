#include <benchmark/benchmark.h>

#include "sslseg/augment.hpp"
#include "sslseg/dice.hpp"
#include "sslseg/phantom.hpp"
#include "sslseg/train.hpp"

namespace {

using namespace sslseg;

Tensor<float> random_image(int b, int c, int h, int w, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t = Tensor<float>::zeros({b, c, h, w});
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    Tensor<float> x = random_image(1, c, 128, 128, 1);
    Rng rng(2);
    Tensor<float> k = Tensor<float>::zeros({c, c, 3, 3});
    for (auto& v : k.values()) v = static_cast<float>(rng.normal(0.0, 0.05));
    Tensor<float> b = Tensor<float>::zeros({c});
    for (auto _ : state) {
        Tensor<float> y = conv2d(x, k, b, static_cast<Tape<float>*>(nullptr));
        benchmark::DoNotOptimize(y.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2ll * c * c * 9 * 128 * 128);
}
BENCHMARK(BM_Conv2dForward)->Arg(4)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dTrainStep(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    Tensor<float> x = random_image(1, c, 128, 128, 1);
    x.set_requires_grad(true);
    Rng rng(2);
    Tensor<float> k = Tensor<float>::zeros({c, c, 3, 3}, true);
    for (auto& v : k.values()) v = static_cast<float>(rng.normal(0.0, 0.05));
    Tensor<float> b = Tensor<float>::zeros({c}, true);
    for (auto _ : state) {
        Tape<float> tape;
        Tensor<float> y = conv2d(x, k, b, &tape);
        Tensor<float> loss = mean_all(y, &tape);
        tape.backward(loss);
        x.zero_grad();
        k.zero_grad();
        b.zero_grad();
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * 6ll * c * c * 9 * 128 * 128);
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(4)->Arg(8)->Arg(16);

void BM_UNetSegForward(benchmark::State& state) {
    UNetConfig cfg;
    cfg.depth = 3;
    cfg.base_channels = static_cast<int>(state.range(0));
    UNetF model = UNetF::build(cfg, 7);
    model.swap_head(HeadMode::segmentation, 7);
    Tensor<float> x = random_image(1, 1, 128, 128, 3);
    for (auto _ : state) {
        Tensor<float> y = model.forward_segmentation(x, nullptr);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_UNetSegForward)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_UNetDiceTrainStep(benchmark::State& state) {
    UNetConfig cfg;
    cfg.depth = 3;
    cfg.base_channels = static_cast<int>(state.range(0));
    UNetF model = UNetF::build(cfg, 7);
    model.swap_head(HeadMode::segmentation, 7);
    auto params = model.all_params();
    AdamState<float> adam;
    Tensor<float> x = random_image(4, 1, 128, 128, 3);
    std::vector<uint8_t> labels(4 * 128 * 128, 0);
    for (size_t i = 0; i < labels.size(); i += 3) labels[i] = 1;
    for (auto _ : state) {
        Tape<float> tape;
        Tensor<float> scores = model.forward_segmentation(x, &tape);
        Tensor<float> loss = dice_loss(scores, labels, &tape);
        tape.backward(loss);
        adam.step(std::span<Param<float>>(params));
        zero_grads(std::span<Param<float>>(params));
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_UNetDiceTrainStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_AugmentFinetune(benchmark::State& state) {
    SegSample s;
    s.height = 128;
    s.width = 128;
    s.image.assign(128 * 128, 0.5f);
    s.labels.assign(128 * 128, 0);
    FinetuneAugConfig cfg;
    Rng rng(5);
    for (auto _ : state) {
        SegSample out = augment_finetune(s, cfg, rng);
        benchmark::DoNotOptimize(out.image.data());
    }
}
BENCHMARK(BM_AugmentFinetune)->Unit(benchmark::kMillisecond);

void BM_PhantomSubject(benchmark::State& state) {
    PhantomConfig cfg;
    uint64_t seed = 0;
    for (auto _ : state) {
        cfg.seed = ++seed;
        auto vols = generate_phantom_dataset(cfg, 1);
        benchmark::DoNotOptimize(vols[0].voxels.data());
    }
}
BENCHMARK(BM_PhantomSubject)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
