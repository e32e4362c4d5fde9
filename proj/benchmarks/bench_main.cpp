#include <benchmark/benchmark.h>

#include "promptforge/dataset.hpp"
#include "promptforge/encoders.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/tensor.hpp"
#include "promptforge/trainer.hpp"

using namespace promptforge;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, bool grad = false) {
    Rng rng(seed);
    std::vector<double> v(r * c);
    for (auto& x : v) x = rng.normal();
    return Tensor::from({r, c}, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto a = random_matrix(n, n, 1);
    auto b = random_matrix(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).values().data());
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_SoftmaxAttentionBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto q0 = random_matrix(8, 64, 3);
    auto k = random_matrix(n, 64, 4);
    for (auto _ : state) {
        auto q = Tensor::from(q0.shape(), q0.values(), true);
        auto out = matmul(softmax_rows(matmul(q, transpose(k))), k);
        backward(sum(hadamard(out, out)));
        benchmark::DoNotOptimize(q.grad().data());
    }
}
BENCHMARK(BM_SoftmaxAttentionBackward)->Arg(16)->Arg(64);

struct Toy {
    Dataset ds = generate_synthetic(8, 64, 2024);
    EncoderWeights encoders = EncoderWeights::generate(0);
    std::vector<ImageFeatures> features = encode_dataset(ds, encoders);
};

const Toy& toy() {
    static const Toy t;
    return t;
}

void BM_EncodeImage(benchmark::State& state) {
    const auto& t = toy();
    for (auto _ : state) benchmark::DoNotOptimize(encode_image(t.ds.samples[0].image, t.encoders).pooled.data().data());
}
BENCHMARK(BM_EncodeImage);

void BM_MethodStep(benchmark::State& state, const char* method) {
    const auto& t = toy();
    const auto spec = MethodSpec::parse(method);
    const auto names = std::vector<std::string>(t.ds.class_names.begin(), t.ds.class_names.begin() + 4);
    const auto init = init_params(spec, 4, 64, 1);
    for (auto _ : state) {
        const MethodModel model(t.encoders, spec, init.clone(), names);
        auto loss = contrastive_loss(model.forward(t.features[0]).probs, 0);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK_CAPTURE(BM_MethodStep, coop, "coop");
BENCHMARK_CAPTURE(BM_MethodStep, cocoop, "cocoop");
BENCHMARK_CAPTURE(BM_MethodStep, full, "full");

void BM_TrainEpoch(benchmark::State& state) {
    const auto& t = toy();
    TrainConfig cfg;
    cfg.epochs = 1;
    for (auto _ : state) {
        const auto trained = train(t.ds, SplitSpec::halves(8), cfg, t.encoders, &t.features);
        benchmark::DoNotOptimize(trained.epoch_losses.data());
    }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
