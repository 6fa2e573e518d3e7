#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crnn/cqt.hpp"
#include "crnn/random.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crnn;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double freq, double seconds, int sr, double amp = 1.0) {
    std::vector<double> x(static_cast<std::size_t>(seconds * sr));
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = amp * std::sin(2 * kPi * freq * n / sr);
    return x;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

const CqtPlan& default_plan() {
    static const CqtPlan plan = CqtPlan::design(FrontendConfig{});
    return plan;
}

}  // namespace

TEST_CASE("plan centre frequencies") {
    const auto& plan = default_plan();
    CHECK(plan.center_freq(0) == doctest::Approx(27.5).epsilon(1e-15));
    CHECK(plan.center_freq(36) == doctest::Approx(55.0).epsilon(1e-15));
    for (int k = 0; k < plan.n_bins(); k += 17)
        CHECK(plan.center_freq(k) == doctest::Approx(27.5 * std::pow(2.0, k / 36.0)).epsilon(1e-12));
    CHECK(plan.n_bins() == 336);
    CHECK(plan.q_scale() == doctest::Approx(1.0 / (std::pow(2.0, 1.0 / 36) - 1.0)));
}

TEST_CASE("plan kernel lengths and cap") {
    const auto& plan = default_plan();
    std::size_t longest = 0;
    for (int k = 0; k < plan.n_bins(); ++k) {
        const double f = plan.center_freq(k);
        if (f > 11025.0) {
            CHECK(plan.above_nyquist(k));
            continue;
        }
        const auto expect = std::min<std::size_t>(
            static_cast<std::size_t>(std::ceil(plan.q_scale() * 22050 / f)), 44100);
        CHECK(plan.kernel(k).size() == expect);
        longest = std::max(longest, expect);
    }
    CHECK(plan.max_kernel_len() == longest);

    // A short cap clamps the low bins.
    const auto capped = CqtPlan::design(22050, 27.5, 36, 48, 512, 0.5);
    CHECK(capped.kernel(0).size() == 11025);
    CHECK(capped.max_kernel_len() == 11025);
}

TEST_CASE("plan rejects bad parameters") {
    CHECK_THROWS_AS(CqtPlan::design(22050, 11025.0, 36, 10, 512), std::invalid_argument);
    CHECK_THROWS_AS(CqtPlan::design(22050, 20000.0, 36, 10, 512), std::invalid_argument);
    CHECK_THROWS_AS(CqtPlan::design(22050, 27.5, 30, 10, 512), std::invalid_argument);
    CHECK_THROWS_AS(CqtPlan::design(22050, 27.5, 36, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(CqtPlan::design(22050, 0.0, 36, 10, 512), std::invalid_argument);
    CHECK_NOTHROW(CqtPlan::design(22050, 27.5, 24, 10, 512));
}

TEST_CASE("kernels are L1 normalised: equal peak magnitude at every bin") {
    const auto plan = CqtPlan::design(22050, 27.5, 36, 300, 512);
    std::vector<double> peaks;
    for (int k : {36, 72, 108, 144, 180, 216, 252}) {
        const auto x = sine(plan.center_freq(k), 3.0, 22050);
        const auto frames = cqt_magnitudes(plan, x);
        peaks.push_back(frames[frames.size() / 2][k]);
    }
    for (double p : peaks) CHECK(p == doctest::Approx(peaks.front()).epsilon(1e-3));
    // Unit sinusoid: correlation with a normalised complex exponential gives 1/2.
    CHECK(peaks.front() == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("frames match the naive per-bin oracle") {
    const auto& plan = default_plan();
    Rng rng(3);
    std::vector<double> x(22050 / 2);
    for (std::size_t n = 0; n < x.size(); ++n)
        x[n] = 0.5 * std::sin(2 * kPi * 261.6 * n / 22050) + 0.3 * std::sin(2 * kPi * 1234.5 * n / 22050) +
               0.05 * rng.normal();
    const auto frames = cqt_magnitudes(plan, x);
    REQUIRE(frames.size() == (x.size() + 511) / 512);
    double worst = 0;
    for (std::size_t t : {std::size_t{0}, std::size_t{5}, frames.size() / 2, frames.size() - 1}) {
        for (int k = 0; k < plan.n_bins(); ++k) {
            const double ref = oracle::cqt_bin(x, static_cast<long>(t * 512), 22050, 27.5, 36, k);
            const double got = frames[t][k];
            worst = std::max(worst, std::abs(got - ref) / std::max(ref, 1e-12));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("streaming output is bit-identical to the offline transform") {
    const auto& plan = default_plan();
    Rng rng(11);
    std::vector<double> x(30000);
    for (auto& v : x) v = rng.uniform(-0.5, 0.5);
    const auto offline = cqt_magnitudes(plan, x);
    for (std::size_t chunk : {std::size_t{1}, std::size_t{7}, std::size_t{511}, std::size_t{4096}, std::size_t{0}}) {
        CqtStream stream(plan);
        std::vector<std::vector<double>> got;
        std::size_t pos = 0;
        while (pos < x.size()) {
            const std::size_t n = chunk ? std::min(chunk, x.size() - pos)
                                        : std::min<std::size_t>(1 + rng.integer(0, 3000), x.size() - pos);
            for (auto& f : stream.push(std::span(x).subspan(pos, n))) got.push_back(std::move(f));
            pos += n;
        }
        for (auto& f : stream.finish()) got.push_back(std::move(f));
        CHECK(got == offline);
    }
}

TEST_CASE("empty chunks emit nothing; silence gives zero magnitude") {
    const auto& plan = default_plan();
    CqtStream stream(plan);
    CHECK(stream.push({}).empty());
    const std::vector<double> zeros(5000, 0.0);
    for (const auto& f : cqt_magnitudes(plan, zeros))
        for (double m : f) CHECK(m == 0.0);
}

TEST_CASE("stream latency is bounded by half the longest kernel") {
    const auto& plan = default_plan();
    CqtStream stream(plan);
    const std::vector<double> block(plan.right_reach() + 1, 0.0);
    const auto frames = stream.push(block);
    CHECK(frames.size() == 1);
    CHECK(stream.latency_samples() <= plan.max_kernel_len() / 2);
}

TEST_CASE("440 Hz peaks at bin 144, one semitone up at 147") {
    const auto& plan = default_plan();
    for (auto [freq, bin] : {std::pair{440.0, 144}, std::pair{440.0 * std::pow(2.0, 1.0 / 12), 147}}) {
        const auto frames = cqt_magnitudes(plan, sine(freq, 1.0, 22050));
        // Interior frames: kernel at bin 144 spans ~0.12 s.
        for (std::size_t t = 6; t + 6 < frames.size(); ++t) CHECK(argmax(frames[t]) == bin);
    }
}

TEST_CASE("pitch covariance over two octaves") {
    const auto& plan = default_plan();
    const int base = 144;
    for (int s = -12; s <= 12; ++s) {
        const double f0 = plan.center_freq(base + 3 * s);
        std::vector<double> x(22050);
        for (std::size_t n = 0; n < x.size(); ++n)
            for (int h = 1; h <= 4; ++h) x[n] += std::sin(2 * kPi * h * f0 * n / 22050 + h) / h;
        const auto frames = cqt_magnitudes(plan, x);
        CHECK(argmax(frames[frames.size() / 2]) == base + 3 * s);
    }
}

TEST_CASE("log power") {
    const double floor = 1e-10;
    CHECK(log_power(0.0, floor) == std::log(floor));
    CHECK(log_power(1.0, floor) == 0.0);
    CHECK(log_power(std::sqrt(floor) / 2, floor) == std::log(floor));
    double prev = -1e300;
    for (double m = 0; m < 3; m += 1e-3) {
        const double v = log_power(m, floor);
        CHECK(v >= prev);
        prev = v;
    }
    const std::vector<double> mags{0.0, 1.0, 2.0};
    const auto lp = log_power(mags, floor);
    CHECK(lp[2] == doctest::Approx(2 * std::log(2.0)));
}

TEST_CASE("harmonic shifts") {
    CHECK(harmonic_shift(1, 36) == 0);
    CHECK(harmonic_shift(2, 36) == 36);
    CHECK(harmonic_shift(3, 36) == 57);
    CHECK(harmonic_shift(4, 36) == 72);
    CHECK_THROWS(harmonic_shift(0, 36));
    FrontendConfig cfg;
    CHECK(cfg.n_bins() == 264 + 72);
}

TEST_CASE("stacking copies shifted bins and floors the rest") {
    const auto& plan = default_plan();
    const double floor = std::log(1e-10);
    std::vector<double> frame(plan.n_bins());
    for (int k = 0; k < plan.n_bins(); ++k) frame[k] = -0.01 * k;
    const std::vector<int> harmonics{1, 2, 3, 4};
    const auto m = stack_harmonics(frame, plan, harmonics, 264, floor);
    REQUIRE(m.channels == 4);
    REQUIRE(m.bins == 264);
    const int shifts[] = {0, 36, 57, 72};
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 264; ++k) {
            const int src = k + shifts[j];
            const double expect = plan.above_nyquist(src) ? floor : frame[src];
            CHECK(m.at(j, k) == expect);
        }
    // Harmonic 5 reaches past the analysis range for the top pitch bins.
    const std::vector<int> h5{5};
    const auto m5 = stack_harmonics(frame, plan, h5, 264, floor);
    CHECK(m5.at(0, 263) == floor);
    const std::vector<int> bad{0};
    CHECK_THROWS(stack_harmonics(frame, plan, bad, 264, floor));
}

TEST_CASE("spectrogram values are finite and at least the log floor") {
    FrontendConfig cfg;
    AudioBuffer audio{sine(330.0, 0.6, 22050, 0.8), 22050};
    const auto spec = compute_spectrogram(cfg, audio);
    CHECK(spec.harmonics == std::vector<int>{1, 2, 3, 4});
    CHECK(spec.frame_rate == doctest::Approx(22050.0 / 512));
    REQUIRE(spec.n_frames() == (audio.samples.size() + 511) / 512);
    for (const auto& f : spec.frames) {
        CHECK(f.channels == 4);
        CHECK(f.bins == 264);
        for (double v : f.values) {
            CHECK(std::isfinite(v));
            CHECK(v >= cfg.log_floor());
        }
    }
    // Bins above Nyquist only appear through the 4th harmonic at the top.
    CHECK(spec.at(5, 263, 3) == cfg.log_floor());
}

TEST_CASE("frontend decimates integer-multiple input rates") {
    FrontendConfig cfg;
    AudioBuffer hi{sine(440.0, 1.0, 44100), 44100};
    const auto spec = compute_spectrogram(cfg, hi);
    CHECK(spec.n_frames() == (22050 + 511) / 512);
    const auto& mid = spec.frames[spec.n_frames() / 2];
    const auto row = mid.channel(0);
    CHECK(std::max_element(row.begin(), row.end()) - row.begin() == 144);
    CHECK_THROWS(Frontend(cfg, 30000));
}

TEST_CASE("frontend chunking does not change stacked frames") {
    FrontendConfig cfg;
    Rng rng(5);
    std::vector<double> x(12000);
    for (auto& v : x) v = rng.uniform(-0.3, 0.3);
    const auto whole = compute_spectrogram(cfg, AudioBuffer{x, 22050}).frames;
    Frontend fe(cfg);
    std::vector<FeatureMap> got;
    for (std::size_t pos = 0; pos < x.size(); pos += 333)
        for (auto& f : fe.push(std::span(x).subspan(pos, std::min<std::size_t>(333, x.size() - pos))))
            got.push_back(std::move(f));
    for (auto& f : fe.finish()) got.push_back(std::move(f));
    CHECK(got == whole);
}
