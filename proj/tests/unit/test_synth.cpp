#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "crnn/cqt.hpp"
#include "crnn/error.hpp"
#include "crnn/synth.hpp"

using namespace crnn;

namespace {

// Magnitude of the DFT of x at frequency f (not restricted to bin centres).
double dft_mag(const std::vector<double>& x, double f, int sr) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(i) / sr);
    return std::abs(acc);
}

int max_concurrent(const std::vector<TimedNote>& notes) {
    int peak = 0;
    // Polyphony can only peak at an onset, so checking every onset instant suffices.
    for (const auto& a : notes) {
        int active = 0;
        for (const auto& b : notes) active += b.onset <= a.onset && a.onset < b.offset;
        peak = std::max(peak, active);
    }
    return peak;
}

}  // namespace

TEST_CASE("tuning") {
    CHECK(midi_to_hz(69) == 440.0);
    CHECK(midi_to_hz(81) == 880.0);
    CHECK(midi_to_hz(57) == 220.0);
    CHECK(midi_to_hz(70) == doctest::Approx(466.1637615));
}

TEST_CASE("config validation") {
    ScoreConfig s;
    s.max_polyphony = 0;
    CHECK_THROWS_AS(sample_score(s, 1), ConfigError);
    s = ScoreConfig{};
    s.pitch_min = 90;
    s.pitch_max = 80;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = ScoreConfig{};
    s.pitch_max = 109;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = ScoreConfig{};
    s.duration_min = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    SynthConfig y;
    y.n_partials = 0;
    CHECK_THROWS_AS(y.validate(), ConfigError);
    y = SynthConfig{};
    y.limiter_threshold = 1.5;
    CHECK_THROWS_AS(y.validate(), ConfigError);
}

TEST_CASE("single-note score stays within ranges") {
    ScoreConfig s;
    s.notes_min = s.notes_max = 1;
    s.max_polyphony = 1;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto notes = sample_score(s, seed);
        REQUIRE(notes.size() == 1);
        const auto& n = notes[0];
        CHECK(n.pitch >= s.pitch_min);
        CHECK(n.pitch <= s.pitch_max);
        CHECK(n.offset - n.onset >= s.duration_min - 1e-12);
        CHECK(n.offset - n.onset <= s.duration_max + 1e-12);
        CHECK(n.onset >= 0.0);
        CHECK(n.offset <= s.clip_seconds + 1e-12);
    }
}

TEST_CASE("scores are deterministic in the seed") {
    ScoreConfig s;
    CHECK(sample_score(s, 42) == sample_score(s, 42));
    CHECK(sample_score(s, 42) != sample_score(s, 43));
}

TEST_CASE("1000 scores respect overlap and polyphony limits") {
    for (int poly : {1, 2, 4}) {
        ScoreConfig s;
        s.max_polyphony = poly;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const auto notes = sample_score(s, seed);
            CHECK(static_cast<int>(notes.size()) <= s.notes_max);
            CHECK(max_concurrent(notes) <= poly);
            for (std::size_t i = 0; i < notes.size(); ++i)
                for (std::size_t j = i + 1; j < notes.size(); ++j)
                    if (notes[i].pitch == notes[j].pitch)
                        CHECK((notes[i].offset <= notes[j].onset || notes[j].offset <= notes[i].onset));
        }
    }
}

TEST_CASE("rendered fundamental is exactly the MIDI frequency") {
    SynthConfig c;
    c.n_partials = 1;
    const int sr = 8000;
    for (int pitch : {69, 81}) {
        const auto r = render({{pitch, 0.0, 1.0, 100}}, c, sr, 1.0, 5);
        const double f = midi_to_hz(pitch);
        // With one second of signal, DFT resolution is 1 Hz.
        const double at = dft_mag(r.audio.samples, f, sr);
        CHECK(at > 10.0 * dft_mag(r.audio.samples, f - 1.0, sr));
        CHECK(at > 10.0 * dft_mag(r.audio.samples, f + 1.0, sr));
    }
}

TEST_CASE("partials above Nyquist are omitted") {
    SynthConfig c;  // 8 partials
    const int sr = 22050;
    const auto r = render({{108, 0.0, 0.5, 100}}, c, sr, 0.5, 9);
    const double f0 = midi_to_hz(108), f2 = 2 * f0, alias3 = sr - 3 * f0;
    const double base = dft_mag(r.audio.samples, f0, sr);
    CHECK(dft_mag(r.audio.samples, f2, sr) > 0.3 * base);
    CHECK(dft_mag(r.audio.samples, alias3, sr) < 0.01 * base);
}

TEST_CASE("pitch 57 peaks at CQT bin 108 while sustained") {
    const auto r = render({{57, 0.0, 4.0, 100}}, SynthConfig{}, 22050, 4.0, 3);
    FrontendConfig fc;
    const auto plan = CqtPlan::design(fc);
    const auto frames = cqt_magnitudes(plan, r.audio.samples);
    const double fps = 22050.0 / fc.hop;
    // Skip frames whose longest kernel reaches past the note edges.
    const auto reach = static_cast<int>(std::ceil(static_cast<double>(plan.max_kernel_len()) / 2 / fc.hop));
    int checked = 0;
    for (int t = reach; t < static_cast<int>(4.0 * fps) - reach; ++t) {
        const auto& f = frames[static_cast<std::size_t>(t)];
        CHECK(std::max_element(f.begin(), f.end()) - f.begin() == 108);
        ++checked;
    }
    CHECK(checked > 20);
}

TEST_CASE("rendered audio is finite and bounded") {
    for (std::size_t i = 0; i < 5; ++i) {
        const auto clip = make_clip(ScoreConfig{}, SynthConfig{}, 22050, 3, i);
        CHECK(clip.rendered.audio.sample_rate == 22050);
        CHECK(clip.rendered.audio.samples.size() == static_cast<std::size_t>(4.0 * 22050));
        for (double s : clip.rendered.audio.samples) {
            REQUIRE(std::isfinite(s));
            REQUIRE(std::abs(s) <= 1.0);
        }
    }
}

TEST_CASE("the limiter trips and counts on loud scores") {
    SynthConfig loud;
    loud.peak_amplitude = 0.9;
    std::vector<TimedNote> chord{{60, 0.0, 0.5, 100}, {64, 0.0, 0.5, 100}, {67, 0.0, 0.5, 100}};
    const auto r = render(chord, loud, 8000, 0.5, 1);
    CHECK(r.clipped_samples > 0);
    for (double s : r.audio.samples) CHECK(std::abs(s) <= 1.0);
    const auto quiet = render({{60, 0.0, 0.5, 100}}, SynthConfig{}, 8000, 0.5, 1);
    CHECK(quiet.clipped_samples == 0);
}

TEST_CASE("every labelled sustain frame overlaps the note's signal") {
    const double fps = 22050.0 / 512 * 2;
    const int sr = 22050;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto clip = make_clip(ScoreConfig{}, SynthConfig{}, sr, 17, i);
        const auto n_frames = static_cast<std::size_t>(4.0 * fps);
        const auto roll = label_roll(clip.notes, fps, n_frames);
        for (const auto& n : clip.notes) {
            const auto solo = render({n}, SynthConfig{}, sr, 4.0, 1).audio.samples;
            const std::size_t row = static_cast<std::size_t>(n.pitch - kLowestPitch);
            // Only this note's frames; same-pitch neighbours have their own signal.
            const auto on = static_cast<std::size_t>(n.onset * fps);
            const auto off = std::min(n_frames, static_cast<std::size_t>(n.offset * fps));
            for (std::size_t t = on; t < off; ++t) {
                REQUIRE(roll.sus(row, t) == 1.0);
                // Frame span widened by 20 ms for envelope edges.
                const double a = static_cast<double>(t) / fps - 0.02, b = static_cast<double>(t + 1) / fps + 0.02;
                double energy = 0;
                for (auto s = static_cast<std::size_t>(std::max(0.0, a * sr)); s < std::min(solo.size(), static_cast<std::size_t>(b * sr)); ++s)
                    energy += solo[s] * solo[s];
                CHECK(energy > 0.0);
            }
        }
    }
}

TEST_CASE("label rolls use floor(t * fps) and clip at the roll end") {
    const std::vector<TimedNote> notes{{60, 0.104, 0.2, 100}, {62, 0.95, 2.0, 100}, {64, 5.0, 6.0, 100}};
    const auto r = label_roll(notes, 10.0, 12);
    CHECK(r.art(39, 1) == 1.0);
    CHECK(r.sus(39, 1) == 1.0);
    CHECK(r.sus(39, 2) == 0.0);
    CHECK(r.art(41, 9) == 1.0);
    CHECK(r.sus(41, 11) == 1.0);
    double total = 0;
    for (double v : r.sustain) total += v;
    CHECK(total == 1 + 3);
}

TEST_CASE("clips depend only on (master seed, index)") {
    const auto a = make_clip(ScoreConfig{}, SynthConfig{}, 8000, 5, 3);
    make_clip(ScoreConfig{}, SynthConfig{}, 8000, 5, 0);
    const auto b = make_clip(ScoreConfig{}, SynthConfig{}, 8000, 5, 3);
    CHECK(a.notes == b.notes);
    CHECK(a.rendered.audio.samples == b.rendered.audio.samples);
    CHECK(a.seed == b.seed);
    CHECK(make_clip(ScoreConfig{}, SynthConfig{}, 8000, 5, 4).seed != a.seed);
}
