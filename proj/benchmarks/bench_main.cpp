// Hot paths of the transcription pipeline. Real-time budget at the default
// rates: one input frame every 512 / 22050 s = 23.2 ms.

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "crnn/cqt.hpp"
#include "crnn/layers.hpp"
#include "crnn/midi.hpp"
#include "crnn/network.hpp"
#include "crnn/pianoroll.hpp"
#include "crnn/random.hpp"

using namespace crnn;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-0.5, 0.5);
    return x;
}

std::vector<FeatureMap> input_frames(const NetworkConfig& cfg, std::size_t n) {
    Rng rng(3);
    std::vector<FeatureMap> frames;
    for (std::size_t t = 0; t < n; ++t) {
        FeatureMap f(cfg.n_harmonics, cfg.n_pitch_bins_in);
        for (auto& v : f.values) v = -23.0 + 20.0 * rng.uniform();
        frames.push_back(std::move(f));
    }
    return frames;
}

NetworkConfig config_for(int which) { return which == 0 ? NetworkConfig::tiny() : NetworkConfig{}; }

}  // namespace

// One hop of audio through the streaming CQT (336 bins, longest kernel 2 s).
static void BM_CqtHop(benchmark::State& state) {
    const auto plan = CqtPlan::design(FrontendConfig{});
    CqtStream stream(plan);
    const auto warm = noise(plan.right_reach() + 1, 1);
    stream.push(warm);
    const auto hop = noise(512, 2);
    for (auto _ : state) benchmark::DoNotOptimize(stream.push(hop));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CqtHop)->Unit(benchmark::kMillisecond);

static void BM_ConvLstmStep(benchmark::State& state) {
    const auto ch = static_cast<std::size_t>(state.range(0));
    const layers::ConvLstmShape shape{ch, ch, 88, 3};
    auto p = layers::ConvLstmParams::zeros(shape);
    Rng rng(4);
    p.for_each([&](const std::string&, Tensor& t) {
        for (auto& v : t.data) v += 0.1 * rng.normal();
    });
    FeatureMap x(ch, 88);
    for (auto& v : x.values) v = rng.normal();
    auto s = layers::ConvLstmState::zeros(shape);
    for (auto _ : state) {
        s = layers::convlstm_step(x, s, p, shape);
        benchmark::DoNotOptimize(s.h.values.data());
    }
}
BENCHMARK(BM_ConvLstmStep)->Arg(8)->Arg(48)->Unit(benchmark::kMicrosecond);

static void BM_ConvLstmStepBackward(benchmark::State& state) {
    const auto ch = static_cast<std::size_t>(state.range(0));
    const layers::ConvLstmShape shape{ch, ch, 88, 3};
    auto p = layers::ConvLstmParams::zeros(shape);
    Rng rng(5);
    p.for_each([&](const std::string&, Tensor& t) {
        for (auto& v : t.data) v += 0.1 * rng.normal();
    });
    FeatureMap x(ch, 88), dh(ch, 88), dc(ch, 88);
    for (auto* f : {&x, &dh, &dc})
        for (auto& v : f->values) v = rng.normal();
    layers::ConvLstmCache cache;
    layers::convlstm_step(x, layers::ConvLstmState::zeros(shape), p, shape, &cache);
    auto grads = layers::ConvLstmParams::zeros(shape);
    for (auto _ : state) benchmark::DoNotOptimize(layers::convlstm_step_backward(cache, dh, dc, p, shape, grads));
}
BENCHMARK(BM_ConvLstmStepBackward)->Arg(8)->Arg(48)->Unit(benchmark::kMicrosecond);

// Per input frame, carrying state: arg 0 = tiny, 1 = default architecture.
static void BM_NetworkForward(benchmark::State& state) {
    const auto cfg = config_for(static_cast<int>(state.range(0)));
    const Network net(cfg);
    const auto params = init_parameters(cfg, 1);
    const auto frames = input_frames(cfg, 16);
    auto s = StreamState::zeros(cfg);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(params, s, frames));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}
BENCHMARK(BM_NetworkForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_NetworkForwardBackward(benchmark::State& state) {
    const auto cfg = config_for(static_cast<int>(state.range(0)));
    const Network net(cfg);
    const auto params = init_parameters(cfg, 1);
    const auto frames = input_frames(cfg, 16);
    std::vector<FeatureMap> dout(frames.size() * static_cast<std::size_t>(cfg.upsample_factor),
                                 FeatureMap(2, cfg.n_pitches_out()));
    for (auto& f : dout) f.values.assign(f.size(), 1e-3);
    auto grads = params.zeros_like();
    for (auto _ : state) {
        auto s = StreamState::zeros(cfg);
        ForwardCache cache;
        net.forward(params, s, frames, &cache);
        benchmark::DoNotOptimize(net.backward(params, cache, dout, grads));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}
BENCHMARK(BM_NetworkForwardBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_StreamingDecoder(benchmark::State& state) {
    Rng rng(6);
    std::vector<double> art(88), sus(88);
    StreamingDecoder dec(88, 0.5, 0.5);
    for (auto _ : state) {
        for (std::size_t i = 0; i < 88; ++i) {
            art[i] = rng.uniform() < 0.02 ? 0.9 : 0.1;
            sus[i] = rng.uniform();
        }
        dec.push(art, sus);
    }
    benchmark::DoNotOptimize(dec.finish());
}
BENCHMARK(BM_StreamingDecoder);

static void BM_WriteSmf(benchmark::State& state) {
    MidiDocument d;
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double on = i * 0.1;
        d.notes.push_back({static_cast<int>(rng.integer(21, 108)), on, on + 0.05 + 0.04 * rng.uniform(), 100});
    }
    for (auto _ : state) benchmark::DoNotOptimize(write_smf(d));
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_WriteSmf)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
